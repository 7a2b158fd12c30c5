#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dualreal/params.hpp"

namespace dualreal {

struct AdapterConfig {
  std::size_t hidden = 64;      // c
  std::size_t bottleneck = 16;  // d
  std::size_t condition = 32;   // e, width of the reference embedding
  std::size_t depth = 8;        // one identity and one motion adapter per block
};

/// Identity and motion bottleneck adapters for every block plus the shared
/// reference-condition map. Up projections and the condition map start at zero so
/// a fresh bank leaves the backbone function unchanged.
class AdapterBank {
 public:
  AdapterBank(AdapterConfig cfg, ParamRegistry& reg, Rng& rng);

  const AdapterConfig& config() const { return cfg_; }

  /// f_in + gelu(f_in W_down + b_down) W_up + b_up
  Tensor identity_forward(const ParamRegistry& reg, std::size_t i, const Tensor& f_in) const;

  /// f_cond = f_in + (r W_cond) on every row;
  /// f_cond + gelu(f_cond W'_down + b'_down) W'_up + b'_up
  Tensor motion_forward(const ParamRegistry& reg, std::size_t i, const Tensor& f_in,
                        const Tensor& reference) const;

  struct Pair {
    Linear down;
    Linear up;
  };
  const Pair& identity_names(std::size_t i) const { return identity_.at(i); }
  const Pair& motion_names(std::size_t i) const { return motion_.at(i); }
  const std::string& condition_name() const { return cond_; }

 private:
  AdapterConfig cfg_;
  std::vector<Pair> identity_;
  std::vector<Pair> motion_;
  std::string cond_;
};

/// omega * f_mo + (1 - omega) * f_id + f_dit, evaluated as f_id + omega (f_mo - f_id)
/// so equal adapter outputs pass through bit-exactly. omega is a [1,1] tensor and
/// must lie strictly inside (0, 1).
Tensor blend_residual(const Tensor& f_id, const Tensor& f_mo, const Tensor& f_dit, const Tensor& omega);
Tensor blend_residual(const Tensor& f_id, const Tensor& f_mo, const Tensor& f_dit, double omega);

}  // namespace dualreal
