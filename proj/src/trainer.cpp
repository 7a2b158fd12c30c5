#include "dualreal/trainer.hpp"

#include <cmath>
#include <stdexcept>

namespace dualreal {

std::string_view to_string(Phase phase) { return phase == Phase::motion ? "motion" : "identity"; }

PhaseSelector::PhaseSelector(double motion_ratio, std::uint64_t seed) : ratio_(motion_ratio), rng_(seed) {
  if (!(motion_ratio >= 0.0 && motion_ratio <= 1.0)) {
    throw std::invalid_argument("PhaseSelector: motion ratio must lie in [0, 1]");
  }
}

Phase PhaseSelector::draw() { return rng_.bernoulli(ratio_) ? Phase::motion : Phase::identity; }

bool GradientMask::active(const std::string& name) const {
  const auto it = bits_.find(name);
  return it != bits_.end() && it->second;
}

std::size_t GradientMask::active_count() const {
  std::size_t n = 0;
  for (const auto& [name, on] : bits_) n += on ? 1 : 0;
  return n;
}

GradientMask build_mask(Phase z, const ParamRegistry& registry, MaskPolicy policy) {
  const double zf = z == Phase::motion ? 1.0 : 0.0;
  GradientMask mask;
  for (const auto& e : registry.entries()) {
    switch (e.tag) {
      case Tag::identity: mask.set(e.name, (1.0 - zf) > 0.5); break;
      case Tag::motion: mask.set(e.name, zf > 0.5); break;
      case Tag::controller: mask.set(e.name, policy.controller); break;
      case Tag::backbone: mask.set(e.name, false); break;
      default: throw std::invalid_argument("build_mask: parameter '" + e.name + "' has no tag");
    }
  }
  return mask;
}

GradientMask tag_mask(Tag tag, const ParamRegistry& registry) {
  GradientMask mask;
  for (const auto& e : registry.entries()) mask.set(e.name, e.tag == tag);
  return mask;
}

void MaskedOptimizer::update(ParamRegistry& registry, const std::map<std::string, Tensor>& grads,
                             const GradientMask& mask) {
  for (const auto& e : registry.entries()) {
    if (!mask.active(e.name)) continue;
    const auto it = grads.find(e.name);
    if (it == grads.end()) continue;
    const auto& g = it->second;
    if (g.shape() != e.tensor.shape()) {
      throw ShapeError("masked_update: gradient for '" + e.name + "' has shape " + to_string(g.shape()) +
                       ", parameter has " + to_string(e.tensor.shape()));
    }
    Tensor param = e.tensor;  // shares the leaf node
    auto w = param.mutable_data();
    const auto gd = g.data();
    if (cfg_.kind == OptimizerConfig::Kind::sgd) {
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= cfg_.lr * gd[k];
      continue;
    }
    auto& st = states_[e.name];
    if (st.m.empty()) {
      st.m.assign(w.size(), 0.0);
      st.v.assign(w.size(), 0.0);
    }
    ++st.steps;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.steps));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.steps));
    for (std::size_t k = 0; k < w.size(); ++k) {
      st.m[k] = cfg_.beta1 * st.m[k] + (1.0 - cfg_.beta1) * gd[k];
      st.v[k] = cfg_.beta2 * st.v[k] + (1.0 - cfg_.beta2) * gd[k] * gd[k];
      const double mhat = st.m[k] / bc1;
      const double vhat = st.v[k] / bc2;
      w[k] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[k]);
    }
  }
}

const MomentState* MaskedOptimizer::state(const std::string& name) const {
  const auto it = states_.find(name);
  return it == states_.end() ? nullptr : &it->second;
}

Tensor diffusion_loss(const DualRealModel& model, const ParamRegistry& reg, const Video& clip,
                      PromptTokens tokens, const std::vector<double>& reference, std::size_t timestep,
                      std::span<const double> noise, const DiffusionSchedule& schedule,
                      const ForwardOptions& opts) {
  const auto& cfg = model.config().backbone;
  const auto x0 = to_model_space(clip);
  const auto xt = add_noise(x0, noise, schedule, timestep);
  const auto out = model.forward(reg, patchify(xt, cfg), tokens, timestep, Tensor::row(reference), opts);
  return mse_loss(out.prediction, patchify(noise, cfg));
}

JointTrainer::JointTrainer(const DualRealModel& model, ParamRegistry& registry,
                           const DiffusionSchedule& schedule, TrainerConfig cfg)
    : model_(model),
      registry_(registry),
      schedule_(schedule),
      cfg_(cfg),
      selector_(cfg.motion_ratio, Rng::derive(cfg.seed, 1).next_u64()),
      rng_(Rng::derive(cfg.seed, 2)),
      optimizer_(cfg.optimizer) {}

std::pair<Phase, const ClipSource*> JointTrainer::select_phase(const ClipSource& identity,
                                                               const ClipSource& motion) {
  if (identity.empty()) throw std::invalid_argument("select_phase: identity source is empty");
  if (motion.empty()) throw std::invalid_argument("select_phase: motion source is empty");
  const Phase z = selector_.draw();
  return {z, z == Phase::motion ? &motion : &identity};
}

StepRecord JointTrainer::train_step(const ClipSource& identity, const ClipSource& motion) {
  const auto [z, source] = select_phase(identity, motion);
  const auto& clip = (*source)[rng_.index(source->size())];
  if (clip.references.empty()) throw std::invalid_argument("train_step: clip has no reference embedding");
  const auto& reference = clip.references[rng_.index(clip.references.size())];
  const std::size_t t = rng_.index(schedule_.steps());
  const auto noise = rng_.normal_vector(clip.video.data.size());

  const auto mask = build_mask(z, registry_, cfg_.mask);
  for (const auto& e : registry_.entries()) {
    Tensor leaf = e.tensor;
    leaf.set_requires_grad(mask.active(e.name));
  }
  const auto loss = diffusion_loss(model_, registry_, clip.video, clip.tokens, reference, t, noise, schedule_,
                                   cfg_.forward);
  const auto grads = backward(loss, registry_);
  optimizer_.update(registry_, grads, mask);

  StepRecord rec{history_.size(), z, t, loss.item()};
  history_.push_back(rec);
  if (on_step) on_step(rec);
  return rec;
}

std::vector<double> pretrain_backbone(const DualRealModel& model, ParamRegistry& registry,
                                      const DiffusionSchedule& schedule, const PretrainConfig& cfg,
                                      const std::function<TrainingClip(Rng&)>& next_clip,
                                      const std::function<void(std::size_t, double)>& progress) {
  if (cfg.batch == 0) throw std::invalid_argument("pretrain_backbone: batch must be positive");
  registry.set_trainable([](Tag tag) { return tag == Tag::backbone; });
  const auto mask = tag_mask(Tag::backbone, registry);
  MaskedOptimizer opt(cfg.optimizer);
  Rng rng(cfg.seed);
  ForwardOptions opts;
  opts.adapters = false;
  const std::vector<double> no_reference(model.config().condition, 0.0);
  std::vector<double> losses;
  losses.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::map<std::string, Tensor> total;
    double mean_loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto clip = next_clip(rng);
      const std::size_t t = rng.index(schedule.steps());
      const auto noise = rng.normal_vector(clip.video.data.size());
      const auto loss = diffusion_loss(model, registry, clip.video, clip.tokens, no_reference, t, noise,
                                       schedule, opts);
      mean_loss += loss.item() / static_cast<double>(cfg.batch);
      auto grads = backward(loss, registry);
      for (auto& [name, g] : grads) {
        if (!mask.active(name)) continue;
        auto [it, fresh] = total.try_emplace(name, Tensor::zeros(g.shape()));
        auto acc = it->second.mutable_data();
        const auto gd = g.data();
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += gd[k] / static_cast<double>(cfg.batch);
      }
    }
    opt.update(registry, total, mask);
    losses.push_back(mean_loss);
    if (progress) progress(step, mean_loss);
  }
  registry.set_trainable([](Tag) { return false; });
  return losses;
}

}  // namespace dualreal
