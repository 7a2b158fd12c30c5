#include "dualreal/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dualreal {

namespace {

template <class Spec>
std::vector<Spec> select(const std::vector<std::string>& ids, const std::vector<Spec>& pool, const char* what) {
  std::vector<Spec> out;
  for (const auto& id : ids) {
    const auto it = std::find_if(pool.begin(), pool.end(), [&](const Spec& s) { return s.id == id; });
    if (it == pool.end()) throw SpecError(std::string("unknown ") + what + " '" + id + "'");
    out.push_back(*it);
  }
  return out;
}

IdentityItem make_identity(const IdentitySpec& spec, Video clip, Video reference, const ToyEncoder& enc) {
  IdentityItem item{spec, std::move(clip), std::move(reference), {}};
  item.embedding = enc.encode(item.reference);
  return item;
}

MotionItem make_motion(const MotionSpec& spec, Video clip, const ToyEncoder& enc) {
  MotionItem item{spec, std::move(clip), {}, 0.0};
  for (std::size_t f = 0; f < item.clip.frames; ++f) item.frame_embeddings.push_back(enc.encode(item.clip.frame(f)));
  item.dynamic_degree = dynamic_degree(item.clip);
  return item;
}

OptimizerConfig adamw(double lr, double weight_decay) {
  return {OptimizerConfig::Kind::adamw, lr, 0.9, 0.999, 1e-8, weight_decay};
}

}  // namespace

ClipSource CorpusData::identity_source() const {
  ClipSource out;
  for (const auto& id : identities) out.push_back({id.clip, concept_tokens(&id.spec, nullptr), {id.embedding}});
  return out;
}

ClipSource CorpusData::motion_source() const {
  ClipSource out;
  for (const auto& m : motions) out.push_back({m.clip, concept_tokens(nullptr, &m.spec), m.frame_embeddings});
  return out;
}

std::vector<IdentitySpec> select_identities(const std::vector<std::string>& ids) {
  return select(ids, default_identities(), "identity");
}

std::vector<MotionSpec> select_motions(const std::vector<std::string>& ids) {
  return select(ids, default_motions(), "motion");
}

Video quantize_8bit(const Video& v) {
  Video q = v;
  for (auto& x : q.data) x = static_cast<double>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)) / 255.0;
  return q;
}

CorpusData render_corpus(const std::vector<IdentitySpec>& identities, const std::vector<MotionSpec>& motions,
                         std::size_t frames, std::size_t height, std::size_t width, std::uint64_t seed) {
  // Mirrors build_corpus: same validation, same per-clip seed streams.
  const auto gray = neutral_sprite();
  for (const auto& id : identities) {
    if (rgb_distance(id.color, gray.color) < kNeutralMinDistance) {
      throw SpecError("identity '" + id.id + "' is too close to the neutral motion sprite colour");
    }
  }
  const ToyEncoder enc;
  CorpusData data;
  std::uint64_t stream = 0;
  for (const auto& id : identities) {
    auto clip = render_clip(id, std::nullopt, frames, height, width, Rng::derive(seed, stream++).next_u64());
    auto ref = quantize_8bit(clip.frame_copy(0));
    data.identities.push_back(make_identity(id, std::move(clip), std::move(ref), enc));
  }
  for (const auto& m : motions) {
    data.motions.push_back(
        make_motion(m, render_clip(gray, m, frames, height, width, Rng::derive(seed, stream++).next_u64()), enc));
  }
  return data;
}

CorpusData load_corpus(const std::filesystem::path& dir) {
  const auto man = read_manifest(dir / "manifest.json");
  const ToyEncoder enc;
  CorpusData data;
  for (const auto& rec : man.clips) {
    if (rec.identity_id && !rec.motion_id) {
      const auto spec = std::find_if(man.identities.begin(), man.identities.end(),
                                     [&](const IdentitySpec& s) { return s.id == *rec.identity_id; });
      if (spec == man.identities.end() || !rec.reference_path) {
        throw IoError("manifest clip '" + rec.clip_id + "' has no identity spec or reference image");
      }
      data.identities.push_back(
          make_identity(*spec, read_drv1(dir / rec.video_path), read_ppm(dir / *rec.reference_path), enc));
    } else if (rec.motion_id && !rec.identity_id) {
      const auto spec = std::find_if(man.motions.begin(), man.motions.end(),
                                     [&](const MotionSpec& s) { return s.id == *rec.motion_id; });
      if (spec == man.motions.end()) throw IoError("manifest clip '" + rec.clip_id + "' has no motion spec");
      data.motions.push_back(make_motion(*spec, read_drv1(dir / rec.video_path), enc));
    }
  }
  if (data.identities.empty() || data.motions.empty()) throw IoError("corpus in " + dir.string() + " is incomplete");
  return data;
}

Workspace::Workspace(const ModelConfig& cfg, std::uint64_t init_seed) : schedule(cfg.backbone.diffusion_steps) {
  Rng rng(init_seed);
  model = std::make_unique<DualRealModel>(cfg, registry, rng);
}

std::vector<double> pretrain(Workspace& ws, const RunConfig& cfg,
                             const std::function<void(std::size_t, double)>& progress) {
  PretrainConfig pc;
  pc.steps = cfg.pretrain_steps;
  pc.batch = cfg.pretrain_batch;
  pc.optimizer = adamw(cfg.pretrain_lr, 0.0);
  pc.seed = cfg.pretrain_seed;
  const auto& b = cfg.model.backbone;
  return pretrain_backbone(
      *ws.model, ws.registry, ws.schedule, pc,
      [&](Rng& rng) {
        auto g = random_generic_clip(rng, b.frames, b.height, b.width);
        return TrainingClip{std::move(g.video), g.tokens, {}};
      },
      progress);
}

ForwardOptions inference_options(AblationMode mode) {
  ForwardOptions o;
  if (mode == AblationMode::no_controller) {
    o.blend = BlendMode::fixed;
    o.fixed_omega = 0.5;
  }
  return o;
}

CustomizeResult customize(Workspace& ws, const RunConfig& cfg, const CorpusData& corpus,
                          const std::function<void(const StepRecord&, const ParamRegistry&)>& on_step) {
  const auto identity = corpus.identity_source();
  const auto motion = corpus.motion_source();

  TrainerConfig tc;
  tc.motion_ratio = cfg.motion_ratio;
  tc.optimizer = adamw(cfg.lr, cfg.weight_decay);
  tc.forward = inference_options(cfg.mode);
  tc.mask.controller = cfg.mode != AblationMode::no_controller;

  CustomizeResult result;
  result.inference = tc.forward;
  const auto run = [&](ParamRegistry& reg, double ratio, std::uint64_t stream, std::size_t steps) {
    tc.motion_ratio = ratio;
    tc.seed = Rng::derive(cfg.seed, stream).next_u64();
    JointTrainer trainer(*ws.model, reg, ws.schedule, tc);
    trainer.on_step = [&](const StepRecord& r) {
      StepRecord global = r;
      global.step = result.log.size();
      result.log.push_back(global);
      if (on_step) on_step(global, reg);
    };
    for (std::size_t s = 0; s < steps; ++s) trainer.train_step(identity, motion);
  };

  if (cfg.mode != AblationMode::no_joint) {
    run(ws.registry, cfg.motion_ratio, 1, cfg.customize_steps);
  } else {
    // Separate single-modality runs from the same starting point, each given the
    // expected number of updates its adapter receives under joint training, then
    // merged: identity adapters from the first, motion adapters from the second,
    // controller averaged.
    const auto motion_steps = static_cast<std::size_t>(
        std::llround(cfg.motion_ratio * static_cast<double>(cfg.customize_steps)));
    auto id_reg = ws.registry.clone();
    auto mo_reg = ws.registry.clone();
    run(id_reg, 0.0, 2, cfg.customize_steps - motion_steps);
    run(mo_reg, 1.0, 3, motion_steps);
    for (const auto& e : ws.registry.entries()) {
      Tensor dst = e.tensor;
      auto out = dst.mutable_data();
      const auto a = id_reg[e.name].data();
      const auto b = mo_reg[e.name].data();
      for (std::size_t k = 0; k < out.size(); ++k) {
        switch (e.tag) {
          case Tag::identity: out[k] = a[k]; break;
          case Tag::motion: out[k] = b[k]; break;
          case Tag::controller: out[k] = 0.5 * (a[k] + b[k]); break;
          default: break;
        }
      }
    }
  }
  ws.registry.set_trainable([](Tag) { return false; });
  return result;
}

std::vector<PairSample> sample_pairs(const Workspace& ws, const RunConfig& cfg, const CorpusData& corpus,
                                     const ForwardOptions& opts) {
  std::vector<PairSample> out;
  std::uint64_t pair = 0;
  for (std::size_t i = 0; i < corpus.identities.size(); ++i) {
    for (std::size_t j = 0; j < corpus.motions.size(); ++j, ++pair) {
      const auto& id = corpus.identities[i];
      const auto& mo = corpus.motions[j];
      const auto seed = Rng::derive(splitmix64(cfg.seed) ^ cfg.sample_seed, pair).next_u64();
      out.push_back({id.spec.id + "__" + mo.spec.id, i, j,
                     sample_video(*ws.model, ws.registry, ws.schedule, concept_tokens(&id.spec, &mo.spec),
                                  id.embedding, opts, cfg.sample_steps, seed)});
    }
  }
  return out;
}

std::vector<MetricReport> evaluate_samples(const std::vector<PairSample>& samples, const CorpusData& corpus) {
  std::vector<MetricReport> out;
  for (const auto& s : samples) {
    const double ref_dd[] = {corpus.motions.at(s.motion).dynamic_degree};
    out.push_back(evaluate_clip(s.clip_id, s.sample.video, corpus.identities.at(s.identity).reference.image(), ref_dd));
  }
  return out;
}

MetricReport mean_report(const std::vector<MetricReport>& reports, std::string label) {
  MetricReport m;
  m.clip_id = std::move(label);
  if (reports.empty()) return m;
  const double n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    m.identity_similarity += r.identity_similarity / n;
    m.temporal_flickering += r.temporal_flickering / n;
    m.motion_smoothness += r.motion_smoothness / n;
    m.temporal_consistency += r.temporal_consistency / n;
    m.dynamic_degree += r.dynamic_degree / n;
    m.dd_deviation += r.dd_deviation / n;
  }
  return m;
}

ControllerTrace controller_trace(const Workspace& ws, const RunConfig& cfg, const CorpusData& corpus) {
  const auto& id = corpus.identities.at(0);
  const auto& mo = corpus.motions.at(0);
  ForwardOptions opts;
  const auto seed = Rng::derive(splitmix64(cfg.seed) ^ cfg.sample_seed, 0).next_u64();
  const auto result = sample_video(*ws.model, ws.registry, ws.schedule, concept_tokens(&id.spec, &mo.spec),
                                   id.embedding, opts, cfg.sample_steps, seed);
  ControllerTrace trace;
  trace.timesteps = ddim_timesteps(ws.schedule.steps(), cfg.sample_steps);
  for (const auto& s : result.schedules) trace.weights.push_back(s.weights);
  return trace;
}

void write_controller_csv(const std::filesystem::path& path, const ControllerTrace& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t n = trace.weights.empty() ? 0 : trace.weights.front().size();
  out << "step";
  for (std::size_t k = 0; k < n; ++k) out << ",group_" << k;
  out << '\n' << std::setprecision(9);
  for (std::size_t r = 0; r < trace.weights.size(); ++r) {
    out << trace.timesteps.at(r);
    for (double w : trace.weights[r]) out << ',' << w;
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_controller_svg(const std::filesystem::path& path, const ControllerTrace& trace) {
  constexpr double W = 640, H = 360, pad = 48;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  double lo = 1.0, hi = 0.0;
  for (const auto& row : trace.weights)
    for (double w : row) lo = std::min(lo, w), hi = std::max(hi, w);
  if (hi - lo < 1e-6) lo -= 0.01, hi += 0.01;
  const std::size_t rows = trace.weights.size();
  const std::size_t n = rows == 0 ? 0 : trace.weights.front().size();
  const auto px = [&](std::size_t r) { return pad + (W - 2 * pad) * (rows > 1 ? double(r) / double(rows - 1) : 0.5); };
  const auto py = [&](double w) { return H - pad - (H - 2 * pad) * (w - lo) / (hi - lo); };

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\"" << H - pad << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << H - pad << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">sampler step (noisy to clean)</text>\n";
  out << "<text x=\"" << pad << "\" y=\"" << pad - 8 << "\" font-size=\"12\">motion weight " << hi << "</text>\n";
  out << "<text x=\"" << pad << "\" y=\"" << H - pad + 16 << "\" font-size=\"12\">" << lo << "</text>\n";
  for (std::size_t k = 0; k < n; ++k) {
    out << "<polyline fill=\"none\" stroke=\"" << colors[k % 8] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t r = 0; r < rows; ++r) out << px(r) << ',' << py(trace.weights[r][k]) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << W - pad + 4 << "\" y=\"" << pad + 14 * double(k) << "\" font-size=\"11\" fill=\"" << colors[k % 8]
        << "\">group " << k << "</text>\n";
  }
  out << "</svg>\n";
}

void write_training_log(const std::filesystem::path& path, const std::vector<StepRecord>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,phase,loss\n" << std::setprecision(12);
  for (const auto& r : log) out << r.step << ',' << to_string(r.phase) << ',' << r.loss << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace dualreal
