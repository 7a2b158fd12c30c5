#include "dualreal/params.hpp"

#include <cmath>
#include <stdexcept>

namespace dualreal {

std::string_view to_string(Tag tag) {
  switch (tag) {
    case Tag::identity: return "identity";
    case Tag::motion: return "motion";
    case Tag::controller: return "controller";
    case Tag::backbone: return "backbone";
    case Tag::untagged: return "untagged";
  }
  return "untagged";
}

std::optional<Tag> tag_from_byte(std::uint8_t byte) {
  if (byte <= 3 || byte == 255) return static_cast<Tag>(byte);
  return std::nullopt;
}

const Tensor& ParamRegistry::add(std::string name, Tensor tensor, Tag tag) {
  if (!tensor.defined() || !tensor.is_leaf()) {
    throw std::invalid_argument("ParamRegistry: '" + name + "' must be a leaf tensor");
  }
  if (index_.count(name)) throw std::invalid_argument("ParamRegistry: duplicate name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(tensor), tag});
  return entries_.back().tensor;
}

bool ParamRegistry::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

const ParamEntry& ParamRegistry::entry(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("ParamRegistry: no parameter '" + std::string(name) + "'");
  return entries_[it->second];
}

const Tensor& ParamRegistry::operator[](std::string_view name) const { return entry(name).tensor; }

void ParamRegistry::replace(std::string_view name, Tensor tensor) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("ParamRegistry: no parameter '" + std::string(name) + "'");
  auto& e = entries_[it->second];
  if (tensor.shape() != e.tensor.shape()) {
    throw ShapeError("ParamRegistry::replace: '" + e.name + "' has shape " +
                     to_string(e.tensor.shape()) + ", got " + to_string(tensor.shape()));
  }
  e.tensor = std::move(tensor);
}

ParamRegistry ParamRegistry::clone() const {
  ParamRegistry out;
  for (const auto& e : entries_) {
    auto copy = Tensor::constant(e.tensor.shape(),
                                 std::vector<double>(e.tensor.data().begin(), e.tensor.data().end()));
    copy.set_requires_grad(e.tensor.requires_grad());
    out.add(e.name, std::move(copy), e.tag);
  }
  return out;
}

std::size_t ParamRegistry::count(Tag tag) const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tag == tag;
  return n;
}

std::size_t ParamRegistry::numel(Tag tag) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.tag == tag) n += e.tensor.numel();
  }
  return n;
}

std::map<std::string, Tensor> backward(const Tensor& loss, const ParamRegistry& registry) {
  const auto grads = backward(loss);
  std::map<std::string, Tensor> out;
  for (const auto& e : registry.entries()) out.emplace(e.name, grads.of(e.tensor));
  return out;
}

Tensor init_tensor(Shape shape, Init init, std::size_t fan_in, Rng& rng) {
  const auto n = shape_numel(shape);
  std::vector<double> v(n, 0.0);
  switch (init) {
    case Init::zeros:
      break;
    case Init::fan_in_uniform: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& x : v) x = rng.uniform(-bound, bound);
      break;
    }
    case Init::normal_002:
      for (auto& x : v) x = 0.02 * rng.normal();
      break;
  }
  return Tensor::parameter(std::move(shape), std::move(v));
}

Linear Linear::create(ParamRegistry& reg, const std::string& name, std::size_t in, std::size_t out,
                      Tag tag, Rng& rng, Init weight_init, Init bias_init) {
  Linear l{name + ".weight", name + ".bias"};
  reg.add(l.weight, init_tensor({in, out}, weight_init, in, rng), tag);
  reg.add(l.bias, init_tensor({1, out}, bias_init, in, rng), tag);
  return l;
}

Tensor Linear::operator()(const ParamRegistry& reg, const Tensor& x) const {
  return broadcast_add(matmul(x, reg[weight]), reg[bias]);
}

}  // namespace dualreal
