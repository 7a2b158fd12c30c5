#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "dualreal/diffusion.hpp"

using namespace dualreal;

TEST_CASE("linear schedule cumulative products") {
  const DiffusionSchedule s(100);
  CHECK(s.steps() == 100);
  CHECK(s.beta(0) == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(s.beta(99) == doctest::Approx(0.12).epsilon(1e-15));
  CHECK(s.alpha_bar(0) == doctest::Approx(0.999).epsilon(1e-15));
  CHECK(s.alpha_bar(49) == doctest::Approx(0.21137107086524863026).epsilon(1e-13));
  CHECK(s.alpha_bar(99) == doctest::Approx(0.0018198003939148143234).epsilon(1e-12));
  for (std::size_t t = 1; t < s.steps(); ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  CHECK_THROWS(DiffusionSchedule(0));
  CHECK_THROWS(s.alpha_bar(100));
}

TEST_CASE("add_noise limiting cases") {
  const std::vector<double> x0{0.3, -0.7, 1.0};
  const std::vector<double> eps{1.5, 0.2, -2.0};
  const auto same = add_noise(x0, eps, 1.0);
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(same[i] == x0[i]);
  const auto scaled = add_noise(x0, std::vector<double>(3, 0.0), 0.25);
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(scaled[i] == 0.5 * x0[i]);
  CHECK_THROWS(add_noise(x0, std::vector<double>(2, 0.0), 0.5));
}

TEST_CASE("noise is recovered algebraically at every timestep") {
  const DiffusionSchedule s(100);
  Rng rng(77);
  const auto x0 = rng.normal_vector(64);
  const auto eps = rng.normal_vector(64);
  double worst = 0.0;
  for (std::size_t t = 0; t < s.steps(); ++t) {
    const auto xt = add_noise(x0, eps, s, t);
    const auto back = recover_noise(x0, xt, s.alpha_bar(t));
    for (std::size_t i = 0; i < eps.size(); ++i) worst = std::max(worst, std::abs(back[i] - eps[i]));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("sinusoidal timestep embedding") {
  const auto e = timestep_embedding(5, 4, 100);
  CHECK(e[0] == doctest::Approx(-0.95892427466313846889).epsilon(1e-14));
  CHECK(e[1] == doctest::Approx(0.049979169270678328795).epsilon(1e-14));
  CHECK(e[2] == doctest::Approx(0.28366218546322626447).epsilon(1e-14));
  CHECK(e[3] == doctest::Approx(0.99875026039496624656).epsilon(1e-14));
  const auto zero = timestep_embedding(0, 6, 10);
  CHECK(zero == std::vector<double>{0, 0, 0, 1, 1, 1});
  CHECK_THROWS_AS(timestep_embedding(100, 4, 100), std::out_of_range);
  CHECK_THROWS(timestep_embedding(3, 5, 100));
}

TEST_CASE("ddim timesteps are evenly spaced and descending") {
  CHECK(ddim_timesteps(100, 1) == std::vector<std::size_t>{99});
  const auto t = ddim_timesteps(100, 20);
  CHECK(t.size() == 20);
  CHECK(t.front() == 99);
  CHECK(t.back() == 4);
  for (std::size_t k = 1; k < t.size(); ++k) CHECK(t[k - 1] - t[k] == 5);
  CHECK(ddim_timesteps(10, 10).back() == 0);
  CHECK_THROWS(ddim_timesteps(100, 0));
  CHECK_THROWS(ddim_timesteps(100, 101));
}

TEST_CASE("perfect denoiser recovers the training clip") {
  const DiffusionSchedule s(100);
  Rng data(5);
  std::vector<double> clip(48);
  for (auto& v : clip) v = data.uniform(-1.0, 1.0);
  const NoisePredictor oracle = [&](std::span<const double> xt, std::size_t t) {
    return recover_noise(clip, xt, s.alpha_bar(t));
  };
  for (std::size_t steps : {1, 5, 20}) {
    Rng rng(9);
    const auto out = ddim_sample(oracle, s, clip.size(), steps, rng);
    for (std::size_t i = 0; i < clip.size(); ++i) CHECK(out[i] == doctest::Approx(clip[i]).epsilon(1e-12));
  }
}

TEST_CASE("sampler is deterministic and depends on the step count") {
  const DiffusionSchedule s(100);
  const NoisePredictor shrink = [](std::span<const double> xt, std::size_t) {
    std::vector<double> e(xt.begin(), xt.end());
    for (auto& v : e) v *= 0.5;
    return e;
  };
  Rng a(3), b(3), c(3);
  const auto x1 = ddim_sample(shrink, s, 32, 20, a);
  const auto x2 = ddim_sample(shrink, s, 32, 20, b);
  const auto x3 = ddim_sample(shrink, s, 32, 1, c);
  CHECK(x1 == x2);
  CHECK(x1 != x3);
  for (double v : x1) CHECK((v >= -1.0 && v <= 1.0));
}
