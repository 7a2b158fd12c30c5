#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dualreal/model.hpp"
#include "dualreal/params.hpp"

namespace dualreal {

enum class Phase : int { identity = 0, motion = 1 };

std::string_view to_string(Phase phase);

/// Draws the training phase Z each step: motion with probability `motion_ratio`.
class PhaseSelector {
 public:
  PhaseSelector(double motion_ratio, std::uint64_t seed);
  Phase draw();
  double motion_ratio() const { return ratio_; }

 private:
  double ratio_;
  Rng rng_;
};

/// Which tags stay trainable besides the phase-selected adapter set.
struct MaskPolicy {
  bool controller = true;
};

/// Per-parameter update indicator. Adapter entries follow
/// M = Z * M_motion + (1 - Z) * M_identity; backbone entries are always 0.
class GradientMask {
 public:
  bool active(const std::string& name) const;
  void set(const std::string& name, bool on) { bits_[name] = on; }
  std::size_t active_count() const;
  const std::map<std::string, bool>& bits() const { return bits_; }

 private:
  std::map<std::string, bool> bits_;
};

GradientMask build_mask(Phase z, const ParamRegistry& registry, MaskPolicy policy = {});
/// Mask selecting exactly the entries carrying `tag`.
GradientMask tag_mask(Tag tag, const ParamRegistry& registry);

struct OptimizerConfig {
  enum class Kind { sgd, adamw };
  Kind kind = Kind::adamw;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct MomentState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t steps = 0;
};

/// Applies updates only to mask-active parameters. Inactive parameters are skipped
/// entirely: values, moments and step counters stay untouched.
class MaskedOptimizer {
 public:
  explicit MaskedOptimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  void update(ParamRegistry& registry, const std::map<std::string, Tensor>& grads,
              const GradientMask& mask);
  const MomentState* state(const std::string& name) const;
  const std::map<std::string, MomentState>& states() const { return states_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::map<std::string, MomentState> states_;
};

/// One training example: a clip (pixels in [0,1]), its prompt, and the candidate
/// reference embeddings; one is drawn uniformly per step.
struct TrainingClip {
  Video video;
  PromptTokens tokens;
  std::vector<std::vector<double>> references;
};

using ClipSource = std::vector<TrainingClip>;

struct TrainerConfig {
  double motion_ratio = 0.5;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  ForwardOptions forward;
  MaskPolicy mask;
};

struct StepRecord {
  std::size_t step = 0;
  Phase phase = Phase::identity;
  std::size_t timestep = 0;
  double loss = 0.0;
};

/// Noise-prediction loss of `model` on one clip.
Tensor diffusion_loss(const DualRealModel& model, const ParamRegistry& reg, const Video& clip,
                      PromptTokens tokens, const std::vector<double>& reference, std::size_t timestep,
                      std::span<const double> noise, const DiffusionSchedule& schedule,
                      const ForwardOptions& opts);

/// Alternating identity/motion customization with gradient-masked updates.
class JointTrainer {
 public:
  JointTrainer(const DualRealModel& model, ParamRegistry& registry, const DiffusionSchedule& schedule,
               TrainerConfig cfg);

  /// Z and the source it selects; throws if that source is empty.
  std::pair<Phase, const ClipSource*> select_phase(const ClipSource& identity, const ClipSource& motion);
  StepRecord train_step(const ClipSource& identity, const ClipSource& motion);

  const MaskedOptimizer& optimizer() const { return optimizer_; }
  const std::vector<StepRecord>& history() const { return history_; }
  /// Called after every step's update; used for checkpointing.
  std::function<void(const StepRecord&)> on_step;

 private:
  const DualRealModel& model_;
  ParamRegistry& registry_;
  const DiffusionSchedule& schedule_;
  TrainerConfig cfg_;
  PhaseSelector selector_;
  Rng rng_;
  MaskedOptimizer optimizer_;
  std::vector<StepRecord> history_;
};

struct PretrainConfig {
  std::size_t steps = 3000;
  std::size_t batch = 4;
  OptimizerConfig optimizer{OptimizerConfig::Kind::adamw, 1e-3, 0.9, 0.999, 1e-8, 0.0};
  std::uint64_t seed = 0;
};

/// Trains all backbone-tagged parameters on clips from `next_clip`; adapters and the
/// controller are left out of the forward pass. Returns per-step mean losses.
std::vector<double> pretrain_backbone(const DualRealModel& model, ParamRegistry& registry,
                                      const DiffusionSchedule& schedule, const PretrainConfig& cfg,
                                      const std::function<TrainingClip(Rng&)>& next_clip,
                                      const std::function<void(std::size_t, double)>& progress = {});

}  // namespace dualreal
