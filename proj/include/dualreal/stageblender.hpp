#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dualreal/params.hpp"

namespace dualreal {

struct ControllerConfig {
  std::size_t hidden = 64;  // c
  std::size_t t_dim = 64;
  std::size_t depth = 8;    // L
  std::size_t groups = 4;   // n
  std::size_t diffusion_steps = 100;
};

/// Contiguous block -> group assignment; group k owns [floor(kL/n), floor((k+1)L/n)).
std::vector<std::size_t> group_partition(std::size_t depth, std::size_t groups);

/// Fixed averaging operator [L, n] mapping per-block logits to per-group logits.
Tensor group_projection(std::size_t depth, std::size_t groups);

/// Controller output for one denoising step.
struct BlendSchedule {
  /// Pair softmax per group, [2, n]: row 0 is the motion share omega, row 1 its complement.
  Tensor pair_probs;
  std::vector<double> weights;          // omega^(k), k < n
  std::vector<std::size_t> block_group; // block -> group

  std::size_t groups() const { return weights.size(); }
  double weight_for_block(std::size_t block) const { return weights.at(block_group.at(block)); }
  /// Differentiable [1, 1] omega for the group owning `block`.
  Tensor omega_for_block(std::size_t block) const;
};

/// Per-block logits [1, 2L] (first L: motion, last L: identity) -> grouped pair softmax.
BlendSchedule group_weights_from_logits(const Tensor& logits, std::size_t depth, std::size_t groups);

struct GateChunks {
  Tensor alpha;
  Tensor beta;
  Tensor gamma;
};

/// Timestep-aware hypernetwork producing grouped adapter blend weights from the first
/// block's input tokens.
class StageBlender {
 public:
  StageBlender(ControllerConfig cfg, ParamRegistry& reg, Rng& rng);

  const ControllerConfig& config() const { return cfg_; }
  /// Changes n without touching parameters (the logits head is per block).
  void set_groups(std::size_t groups);

  /// mean over tokens, then * W -> [1, t_dim]
  Tensor pool_project(const ParamRegistry& reg, const Tensor& f_in) const;
  /// h = MLP(SiLU(t)) split into three t_dim chunks.
  GateChunks gate(const ParamRegistry& reg, const Tensor& t) const;
  /// MLP(LayerNorm(f')) * alpha + beta
  Tensor adaln_modulate(const ParamRegistry& reg, const Tensor& f_prime, const Tensor& alpha,
                        const Tensor& beta) const;
  /// f'' + gamma * f'
  static Tensor gate_fuse(const Tensor& f_dprime, const Tensor& f_prime, const Tensor& gamma);
  /// MLP(f_g) -> per-block logits -> grouped weights.
  BlendSchedule group_weights(const ParamRegistry& reg, const Tensor& f_g) const;
  /// Full pipeline for one step; `f_in` is the first block's input.
  BlendSchedule controller_step(const ParamRegistry& reg, const Tensor& f_in, std::size_t step) const;

 private:
  ControllerConfig cfg_;
  std::string pool_;
  Linear adaln_fc1_, adaln_fc2_;
  Linear gate_fc1_, gate_fc2_;
  Linear logits_fc1_, logits_fc2_;
};

}  // namespace dualreal
