#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dualreal/config.hpp"
#include "dualreal/corpus.hpp"
#include "dualreal/metrics.hpp"
#include "dualreal/trainer.hpp"

namespace dualreal {

struct IdentityItem {
  IdentitySpec spec;
  Video clip;       // static clip
  Video reference;  // single frame, 8-bit quantised like the PPM on disk
  std::vector<double> embedding;
};

struct MotionItem {
  MotionSpec spec;
  Video clip;  // neutral sprite
  std::vector<std::vector<double>> frame_embeddings;
  double dynamic_degree = 0.0;
};

struct CorpusData {
  std::vector<IdentityItem> identities;
  std::vector<MotionItem> motions;

  ClipSource identity_source() const;
  ClipSource motion_source() const;
};

/// Looks up ids in the default identity / motion lists.
std::vector<IdentitySpec> select_identities(const std::vector<std::string>& ids);
std::vector<MotionSpec> select_motions(const std::vector<std::string>& ids);

/// In-memory corpus, identical to what build_corpus writes and load_corpus reads.
CorpusData render_corpus(const std::vector<IdentitySpec>& identities, const std::vector<MotionSpec>& motions,
                         std::size_t frames, std::size_t height, std::size_t width, std::uint64_t seed);
CorpusData load_corpus(const std::filesystem::path& dir);

Video quantize_8bit(const Video& v);

/// Model, parameters and noise schedule for one configuration.
struct Workspace {
  explicit Workspace(const ModelConfig& cfg, std::uint64_t init_seed);
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  ParamRegistry registry;
  std::unique_ptr<DualRealModel> model;
  DiffusionSchedule schedule;
};

/// Pretrains the backbone of `ws` on random generic clips.
std::vector<double> pretrain(Workspace& ws, const RunConfig& cfg,
                             const std::function<void(std::size_t, double)>& progress = {});

struct CustomizeResult {
  ForwardOptions inference;
  std::vector<StepRecord> log;
};

/// Runs the customization procedure for `cfg.mode` in place on `ws.registry`. The
/// workspace must have been built from `cfg.effective_model()`.
/// `on_step` sees every optimizer step (both sub-runs for no-joint).
CustomizeResult customize(Workspace& ws, const RunConfig& cfg, const CorpusData& corpus,
                          const std::function<void(const StepRecord&, const ParamRegistry&)>& on_step = {});

/// Forward options used at inference for a mode.
ForwardOptions inference_options(AblationMode mode);

struct PairSample {
  std::string clip_id;  // "<identity>__<motion>"
  std::size_t identity = 0;
  std::size_t motion = 0;
  SampleResult sample;
};

std::vector<PairSample> sample_pairs(const Workspace& ws, const RunConfig& cfg, const CorpusData& corpus,
                                     const ForwardOptions& opts);
std::vector<MetricReport> evaluate_samples(const std::vector<PairSample>& samples, const CorpusData& corpus);
MetricReport mean_report(const std::vector<MetricReport>& reports, std::string label);

/// Group weights per denoising step, one row per sampler step: (timestep, weights).
struct ControllerTrace {
  std::vector<std::size_t> timesteps;
  std::vector<std::vector<double>> weights;
};
ControllerTrace controller_trace(const Workspace& ws, const RunConfig& cfg, const CorpusData& corpus);
void write_controller_csv(const std::filesystem::path& path, const ControllerTrace& trace);
void write_controller_svg(const std::filesystem::path& path, const ControllerTrace& trace);

void write_training_log(const std::filesystem::path& path, const std::vector<StepRecord>& log);

}  // namespace dualreal
