#include "dualreal/adapter.hpp"

#include <stdexcept>

namespace dualreal {

AdapterBank::AdapterBank(AdapterConfig cfg, ParamRegistry& reg, Rng& rng) : cfg_(cfg) {
  const std::size_t c = cfg_.hidden, d = cfg_.bottleneck;
  for (std::size_t i = 0; i < cfg_.depth; ++i) {
    const std::string p = "adapter.identity.block" + std::to_string(i);
    identity_.push_back({Linear::create(reg, p + ".down", c, d, Tag::identity, rng, Init::fan_in_uniform, Init::zeros),
                         Linear::create(reg, p + ".up", d, c, Tag::identity, rng, Init::zeros, Init::zeros)});
  }
  for (std::size_t i = 0; i < cfg_.depth; ++i) {
    const std::string p = "adapter.motion.block" + std::to_string(i);
    motion_.push_back({Linear::create(reg, p + ".down", c, d, Tag::motion, rng, Init::fan_in_uniform, Init::zeros),
                       Linear::create(reg, p + ".up", d, c, Tag::motion, rng, Init::zeros, Init::zeros)});
  }
  cond_ = "adapter.motion.cond.weight";
  reg.add(cond_, init_tensor({cfg_.condition, c}, Init::zeros, cfg_.condition, rng), Tag::motion);
}

Tensor AdapterBank::identity_forward(const ParamRegistry& reg, std::size_t i, const Tensor& f_in) const {
  const auto& a = identity_.at(i);
  return add(f_in, a.up(reg, gelu(a.down(reg, f_in))));
}

Tensor AdapterBank::motion_forward(const ParamRegistry& reg, std::size_t i, const Tensor& f_in,
                                   const Tensor& reference) const {
  const auto& a = motion_.at(i);
  const auto f_cond = broadcast_add(f_in, matmul(reference, reg[cond_]));
  return add(f_cond, a.up(reg, gelu(a.down(reg, f_cond))));
}

Tensor blend_residual(const Tensor& f_id, const Tensor& f_mo, const Tensor& f_dit, const Tensor& omega) {
  const double w = omega.item();
  if (!(w > 0.0 && w < 1.0)) {
    throw std::domain_error("blend_residual: omega " + std::to_string(w) + " outside (0, 1)");
  }
  return add(add(f_id, broadcast_mul(sub(f_mo, f_id), omega)), f_dit);
}

Tensor blend_residual(const Tensor& f_id, const Tensor& f_mo, const Tensor& f_dit, double omega) {
  return blend_residual(f_id, f_mo, f_dit, Tensor::scalar(omega));
}

}  // namespace dualreal
