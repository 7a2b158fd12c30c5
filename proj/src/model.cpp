#include "dualreal/model.hpp"

#include <algorithm>

namespace dualreal {

AdapterConfig ModelConfig::adapter_config() const {
  return {backbone.hidden, bottleneck, condition, backbone.depth};
}

ControllerConfig ModelConfig::controller_config() const {
  return {backbone.hidden, backbone.t_dim, backbone.depth, groups, backbone.diffusion_steps};
}

void ModelConfig::validate() const {
  backbone.validate();
  if (bottleneck == 0) throw ConfigError("bottleneck width must be positive");
  if (condition == 0) throw ConfigError("condition width must be positive");
  group_partition(backbone.depth, groups);
}

DualRealModel::DualRealModel(ModelConfig cfg, ParamRegistry& reg, Rng& rng)
    : cfg_((cfg.validate(), cfg)),
      backbone_(cfg_.backbone, reg, rng),
      adapters_(cfg_.adapter_config(), reg, rng),
      controller_(cfg_.controller_config(), reg, rng) {}

void DualRealModel::set_groups(std::size_t groups) {
  controller_.set_groups(groups);
  cfg_.groups = groups;
}

ModelOutput DualRealModel::forward(const ParamRegistry& reg, const Tensor& noisy_patches,
                                   PromptTokens tokens, std::size_t step, const Tensor& reference,
                                   const ForwardOptions& opts) const {
  const auto cond = backbone_.condition(reg, step);
  auto x = backbone_.join(backbone_.embed_text(reg, tokens), backbone_.embed_visual(reg, noisy_patches));
  ModelOutput out;
  if (opts.adapters && opts.blend == BlendMode::controller) {
    out.schedule = controller_.controller_step(reg, x, step);
  }
  const Tensor fixed = Tensor::scalar(opts.fixed_omega);
  for (std::size_t i = 0; i < cfg_.backbone.depth; ++i) {
    const auto f_dit = backbone_.block(reg, i, x, cond);
    if (!opts.adapters) {
      x = add(x, f_dit);
      continue;
    }
    const auto f_id = opts.identity_adapter ? adapters_.identity_forward(reg, i, x) : x;
    const auto f_mo = opts.motion_adapter ? adapters_.motion_forward(reg, i, x, reference) : x;
    const auto omega = out.schedule ? out.schedule->omega_for_block(i) : fixed;
    x = blend_residual(f_id, f_mo, f_dit, omega);
  }
  out.prediction = backbone_.head(reg, x, cond, noisy_patches, step);
  return out;
}

std::vector<double> to_model_space(const Video& video) {
  std::vector<double> out(video.data.size());
  std::transform(video.data.begin(), video.data.end(), out.begin(), [](double v) { return 2.0 * v - 1.0; });
  return out;
}

Video from_model_space(std::span<const double> x, const BackboneConfig& cfg) {
  Video v(cfg.frames, cfg.height, cfg.width, cfg.channels);
  for (std::size_t i = 0; i < x.size(); ++i) v.data[i] = std::clamp(0.5 * (x[i] + 1.0), 0.0, 1.0);
  return v;
}

SampleResult sample_video(const DualRealModel& model, const ParamRegistry& reg,
                          const DiffusionSchedule& schedule, PromptTokens tokens,
                          const std::vector<double>& reference, const ForwardOptions& opts,
                          std::size_t sample_steps, std::uint64_t seed) {
  const auto& cfg = model.config().backbone;
  NoGradGuard no_grad;
  const auto ref = Tensor::row(reference);
  SampleResult result;
  Rng rng(seed);
  auto x = ddim_sample(
      [&](std::span<const double> xt, std::size_t step) {
        auto out = model.forward(reg, patchify(xt, cfg), tokens, step, ref, opts);
        if (out.schedule) result.schedules.push_back(*out.schedule);
        return unpatchify(out.prediction.data(), cfg);
      },
      schedule, cfg.video_numel(), sample_steps, rng);
  result.video = from_model_space(x, cfg);
  return result;
}

}  // namespace dualreal
