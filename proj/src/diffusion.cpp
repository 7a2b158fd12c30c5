#include "dualreal/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dualreal {

DiffusionSchedule::DiffusionSchedule(std::size_t steps, double beta_start, double beta_end) {
  if (steps == 0) throw std::invalid_argument("DiffusionSchedule: need at least one step");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw std::invalid_argument("DiffusionSchedule: betas must satisfy 0 < start <= end < 1");
  }
  betas_.resize(steps);
  alpha_bar_.resize(steps);
  double prod = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(steps - 1);
    betas_[t] = beta_start + (beta_end - beta_start) * frac;
    prod *= 1.0 - betas_[t];
    alpha_bar_[t] = prod;
  }
}

std::vector<double> add_noise(std::span<const double> x0, std::span<const double> eps, double alpha_bar) {
  if (x0.size() != eps.size()) throw std::invalid_argument("add_noise: x0 and eps differ in size");
  const double a = std::sqrt(alpha_bar);
  const double s = std::sqrt(1.0 - alpha_bar);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + s * eps[i];
  return out;
}

std::vector<double> add_noise(std::span<const double> x0, std::span<const double> eps,
                              const DiffusionSchedule& schedule, std::size_t step) {
  return add_noise(x0, eps, schedule.alpha_bar(step));
}

std::vector<double> recover_noise(std::span<const double> x0, std::span<const double> xt, double alpha_bar) {
  const double a = std::sqrt(alpha_bar);
  const double s = std::sqrt(1.0 - alpha_bar);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (xt[i] - a * x0[i]) / s;
  return out;
}

std::vector<double> timestep_embedding(std::size_t step, std::size_t dim, std::size_t total_steps) {
  if (step >= total_steps) {
    throw std::out_of_range("timestep_embedding: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(total_steps) + ")");
  }
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("timestep_embedding: dim must be even");
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < half; ++k) {
    const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
    const double arg = static_cast<double>(step) * freq;
    out[k] = std::sin(arg);
    out[half + k] = std::cos(arg);
  }
  return out;
}

std::vector<std::size_t> ddim_timesteps(std::size_t total_steps, std::size_t sample_steps) {
  if (sample_steps == 0 || sample_steps > total_steps) {
    throw std::invalid_argument("ddim_timesteps: need 1 <= S <= T");
  }
  std::vector<std::size_t> out(sample_steps);
  for (std::size_t j = 0; j < sample_steps; ++j) {
    out[sample_steps - 1 - j] = (j + 1) * total_steps / sample_steps - 1;
  }
  return out;
}

std::vector<double> ddim_sample(const NoisePredictor& predictor, const DiffusionSchedule& schedule,
                                std::size_t numel, std::size_t sample_steps, Rng& rng) {
  const auto timesteps = ddim_timesteps(schedule.steps(), sample_steps);
  std::vector<double> x = rng.normal_vector(numel);
  std::vector<double> x0(numel);
  for (std::size_t k = 0; k < timesteps.size(); ++k) {
    const std::size_t t = timesteps[k];
    const auto eps = predictor(x, t);
    if (eps.size() != numel) throw std::invalid_argument("ddim_sample: predictor returned wrong size");
    const double a = schedule.alpha_bar(t);
    const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
    for (std::size_t i = 0; i < numel; ++i) x0[i] = std::clamp((x[i] - sn * eps[i]) / sa, -1.0, 1.0);
    if (k + 1 == timesteps.size()) break;
    const double ap = schedule.alpha_bar(timesteps[k + 1]);
    const double spa = std::sqrt(ap), spn = std::sqrt(1.0 - ap);
    for (std::size_t i = 0; i < numel; ++i) x[i] = spa * x0[i] + spn * eps[i];
  }
  return x0;
}

}  // namespace dualreal
