#include "dualreal/stageblender.hpp"

#include "dualreal/diffusion.hpp"
#include "dualreal/dit.hpp"

namespace dualreal {

std::vector<std::size_t> group_partition(std::size_t depth, std::size_t groups) {
  if (groups == 0 || groups > depth) {
    throw ConfigError("group count " + std::to_string(groups) + " must be in [1, depth=" +
                      std::to_string(depth) + "]");
  }
  std::vector<std::size_t> out(depth);
  for (std::size_t k = 0; k < groups; ++k) {
    for (std::size_t b = k * depth / groups; b < (k + 1) * depth / groups; ++b) out[b] = k;
  }
  return out;
}

Tensor group_projection(std::size_t depth, std::size_t groups) {
  const auto part = group_partition(depth, groups);
  std::vector<std::size_t> sizes(groups, 0);
  for (auto g : part) ++sizes[g];
  std::vector<double> m(depth * groups, 0.0);
  for (std::size_t b = 0; b < depth; ++b) m[b * groups + part[b]] = 1.0 / static_cast<double>(sizes[part[b]]);
  return Tensor::constant({depth, groups}, std::move(m));
}

Tensor BlendSchedule::omega_for_block(std::size_t block) const {
  return slice_chunk(slice_chunk(pair_probs, 0, 0, 1), 1, block_group.at(block), 1);
}

BlendSchedule group_weights_from_logits(const Tensor& logits, std::size_t depth, std::size_t groups) {
  if (logits.rank() != 2 || logits.rows() != 1 || logits.cols() != 2 * depth) {
    throw ShapeError("group_weights: expected logits [1, " + std::to_string(2 * depth) + "], got " +
                     to_string(logits.shape()));
  }
  const auto gamma = group_projection(depth, groups);
  const auto motion = matmul(slice_chunk(logits, 1, 0, depth), gamma);
  const auto identity = matmul(slice_chunk(logits, 1, depth, depth), gamma);
  BlendSchedule s;
  s.pair_probs = softmax_axis(concat({motion, identity}, 0), 0);
  s.weights.assign(s.pair_probs.data().begin(), s.pair_probs.data().begin() + static_cast<std::ptrdiff_t>(groups));
  s.block_group = group_partition(depth, groups);
  return s;
}

StageBlender::StageBlender(ControllerConfig cfg, ParamRegistry& reg, Rng& rng) : cfg_(cfg) {
  group_partition(cfg_.depth, cfg_.groups);
  const std::size_t t = cfg_.t_dim;
  const Tag tag = Tag::controller;
  pool_ = "controller.pool.weight";
  reg.add(pool_, init_tensor({cfg_.hidden, t}, Init::fan_in_uniform, cfg_.hidden, rng), tag);
  adaln_fc1_ = Linear::create(reg, "controller.adaln.fc1", t, t, tag, rng);
  adaln_fc2_ = Linear::create(reg, "controller.adaln.fc2", t, t, tag, rng);
  gate_fc1_ = Linear::create(reg, "controller.gate.fc1", t, t, tag, rng);
  gate_fc2_ = Linear::create(reg, "controller.gate.fc2", t, 3 * t, tag, rng, Init::zeros, Init::zeros);
  logits_fc1_ = Linear::create(reg, "controller.logits.fc1", t, t, tag, rng);
  logits_fc2_ = Linear::create(reg, "controller.logits.fc2", t, 2 * cfg_.depth, tag, rng, Init::zeros, Init::zeros);
}

void StageBlender::set_groups(std::size_t groups) {
  group_partition(cfg_.depth, groups);
  cfg_.groups = groups;
}

Tensor StageBlender::pool_project(const ParamRegistry& reg, const Tensor& f_in) const {
  return matmul(mean_pool_axis(f_in, 0), reg[pool_]);
}

GateChunks StageBlender::gate(const ParamRegistry& reg, const Tensor& t) const {
  const auto h = gate_fc2_(reg, silu(gate_fc1_(reg, silu(t))));
  const std::size_t d = cfg_.t_dim;
  return {slice_chunk(h, 1, 0, d), slice_chunk(h, 1, d, d), slice_chunk(h, 1, 2 * d, d)};
}

Tensor StageBlender::adaln_modulate(const ParamRegistry& reg, const Tensor& f_prime, const Tensor& alpha,
                                    const Tensor& beta) const {
  const auto mlp = adaln_fc2_(reg, silu(adaln_fc1_(reg, layer_norm(f_prime))));
  return add(mul(mlp, alpha), beta);
}

Tensor StageBlender::gate_fuse(const Tensor& f_dprime, const Tensor& f_prime, const Tensor& gamma) {
  return add(f_dprime, mul(gamma, f_prime));
}

BlendSchedule StageBlender::group_weights(const ParamRegistry& reg, const Tensor& f_g) const {
  const auto logits = logits_fc2_(reg, silu(logits_fc1_(reg, f_g)));
  return group_weights_from_logits(logits, cfg_.depth, cfg_.groups);
}

BlendSchedule StageBlender::controller_step(const ParamRegistry& reg, const Tensor& f_in,
                                            std::size_t step) const {
  const auto t = Tensor::row(timestep_embedding(step, cfg_.t_dim, cfg_.diffusion_steps));
  const auto f_prime = pool_project(reg, f_in);
  const auto chunks = gate(reg, t);
  const auto f_dprime = adaln_modulate(reg, f_prime, chunks.alpha, chunks.beta);
  return group_weights(reg, gate_fuse(f_dprime, f_prime, chunks.gamma));
}

}  // namespace dualreal
