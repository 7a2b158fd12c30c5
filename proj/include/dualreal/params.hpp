#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dualreal/rng.hpp"
#include "dualreal/tensor.hpp"

namespace dualreal {

/// Which part of the model a parameter belongs to. Gradient masks are derived from
/// this alone.
enum class Tag : std::uint8_t {
  identity = 0,
  motion = 1,
  controller = 2,
  backbone = 3,
  untagged = 255,
};

std::string_view to_string(Tag tag);
std::optional<Tag> tag_from_byte(std::uint8_t byte);

struct ParamEntry {
  std::string name;
  Tensor tensor;
  Tag tag = Tag::untagged;
};

/// Named, tagged set of leaf tensors. Model components keep only parameter names
/// and read values from a registry at forward time, so a copy with one entry
/// replaced evaluates the same architecture at a different point.
class ParamRegistry {
 public:
  const Tensor& add(std::string name, Tensor tensor, Tag tag);
  bool contains(std::string_view name) const;
  const Tensor& operator[](std::string_view name) const;
  const ParamEntry& entry(std::string_view name) const;
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Swap the tensor behind `name`; shapes must agree.
  void replace(std::string_view name, Tensor tensor);
  /// Leaf requires_grad := predicate(tag).
  template <class Pred>
  void set_trainable(Pred pred) {
    for (auto& e : entries_) e.tensor.set_requires_grad(pred(e.tag));
  }
  /// Deep copy of every value (no shared storage with this registry).
  ParamRegistry clone() const;

  std::size_t count(Tag tag) const;
  std::size_t numel(Tag tag) const;

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// name -> d(loss)/d(param) for every registered parameter; unreachable parameters
/// get zeros.
std::map<std::string, Tensor> backward(const Tensor& loss, const ParamRegistry& registry);

enum class Init { fan_in_uniform, zeros, normal_002 };

Tensor init_tensor(Shape shape, Init init, std::size_t fan_in, Rng& rng);

/// x[m, in] * W[in, out] + b[1, out], parameters looked up by name.
struct Linear {
  std::string weight;
  std::string bias;

  static Linear create(ParamRegistry& reg, const std::string& name, std::size_t in,
                       std::size_t out, Tag tag, Rng& rng, Init weight_init = Init::fan_in_uniform,
                       Init bias_init = Init::fan_in_uniform);
  Tensor operator()(const ParamRegistry& reg, const Tensor& x) const;
};

}  // namespace dualreal
