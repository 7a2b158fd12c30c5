#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dualreal/adapter.hpp"
#include "dualreal/diffusion.hpp"
#include "dualreal/dit.hpp"
#include "dualreal/stageblender.hpp"

namespace dualreal {

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t bottleneck = 16;
  std::size_t condition = 32;
  std::size_t groups = 4;

  AdapterConfig adapter_config() const;
  ControllerConfig controller_config() const;
  void validate() const;
};

enum class BlendMode { controller, fixed };

struct ForwardOptions {
  bool adapters = true;  // false: plain backbone path, x + f_dit per block
  bool identity_adapter = true;
  bool motion_adapter = true;
  BlendMode blend = BlendMode::controller;
  double fixed_omega = 0.5;
};

struct ModelOutput {
  Tensor prediction;  // predicted noise, [n_v, P]
  std::optional<BlendSchedule> schedule;
};

/// Frozen backbone whose blocks are wrapped as DA-Blocks: identity and motion adapters
/// fused into the residual stream with weights from one controller call per step.
class DualRealModel {
 public:
  DualRealModel(ModelConfig cfg, ParamRegistry& reg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  const Backbone& backbone() const { return backbone_; }
  const AdapterBank& adapters() const { return adapters_; }
  const StageBlender& controller() const { return controller_; }
  void set_groups(std::size_t groups);

  /// `reference` is the [1, e] reference-image embedding fed to the motion adapters.
  ModelOutput forward(const ParamRegistry& reg, const Tensor& noisy_patches, PromptTokens tokens,
                      std::size_t step, const Tensor& reference, const ForwardOptions& opts) const;

 private:
  ModelConfig cfg_;
  Backbone backbone_;
  AdapterBank adapters_;
  StageBlender controller_;
};

/// Pixels in [0, 1] -> model space [-1, 1].
std::vector<double> to_model_space(const Video& video);
/// Model space -> pixels clamped to [0, 1].
Video from_model_space(std::span<const double> x, const BackboneConfig& cfg);

struct SampleResult {
  Video video;
  std::vector<BlendSchedule> schedules;  // one per denoising step when the controller ran
};

/// Deterministic S-step sampling from seeded noise.
SampleResult sample_video(const DualRealModel& model, const ParamRegistry& reg,
                          const DiffusionSchedule& schedule, PromptTokens tokens,
                          const std::vector<double>& reference, const ForwardOptions& opts,
                          std::size_t sample_steps, std::uint64_t seed);

}  // namespace dualreal
