#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dualreal/rng.hpp"

namespace dualreal {

/// Linear beta schedule over T discrete steps.
class DiffusionSchedule {
 public:
  explicit DiffusionSchedule(std::size_t steps, double beta_start = 1e-3, double beta_end = 0.12);

  std::size_t steps() const { return betas_.size(); }
  double beta(std::size_t t) const { return betas_.at(t); }
  double alpha_bar(std::size_t t) const { return alpha_bar_.at(t); }
  std::span<const double> betas() const { return betas_; }
  std::span<const double> alphas_cumprod() const { return alpha_bar_; }

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bar_;
};

/// x_t = sqrt(a_bar) x0 + sqrt(1 - a_bar) eps, elementwise.
std::vector<double> add_noise(std::span<const double> x0, std::span<const double> eps, double alpha_bar);
std::vector<double> add_noise(std::span<const double> x0, std::span<const double> eps,
                              const DiffusionSchedule& schedule, std::size_t step);
/// Inverse of add_noise for the noise term.
std::vector<double> recover_noise(std::span<const double> x0, std::span<const double> xt, double alpha_bar);

/// Sinusoidal embedding: first half sin(step * f_k), second half cos(step * f_k),
/// f_k = 10000^(-k / half).
std::vector<double> timestep_embedding(std::size_t step, std::size_t dim, std::size_t total_steps);

/// Timesteps visited by an S-step deterministic sampler, descending.
std::vector<std::size_t> ddim_timesteps(std::size_t total_steps, std::size_t sample_steps);

/// Predicts the noise in `xt` at `step` (model space, same layout as xt).
using NoisePredictor = std::function<std::vector<double>(std::span<const double> xt, std::size_t step)>;

/// Deterministic DDIM (eta = 0) from seeded Gaussian noise. Predicted x0 is clamped
/// to [-1, 1] at every step; the returned sample is in model space.
std::vector<double> ddim_sample(const NoisePredictor& predictor, const DiffusionSchedule& schedule,
                                std::size_t numel, std::size_t sample_steps, Rng& rng);

}  // namespace dualreal
