// Command-line driver: corpus generation, backbone pretraining, customization,
// sampling, evaluation, controller visualization and ablations.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "dualreal/checkpoint.hpp"
#include "dualreal/experiment.hpp"

namespace {

using namespace dualreal;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> run_id, output_dir, corpus_dir, mode, backbone, checkpoint;
  std::optional<std::size_t> steps, groups, sample_steps, pretrain_steps;
};

void log(const std::string& msg) { std::cerr << "[dualreal] " << msg << std::endl; }

RunConfig resolve_config(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  apply_seed_env(cfg);
  try {
    if (o.seed) cfg.seed = *o.seed;
    if (o.run_id) cfg.run_id = *o.run_id;
    if (o.output_dir) cfg.output_dir = *o.output_dir;
    if (o.corpus_dir) cfg.corpus_dir = *o.corpus_dir;
    if (o.mode) cfg.mode = mode_from_string(*o.mode);
    if (o.backbone) cfg.backbone_checkpoint = *o.backbone;
    if (o.steps) cfg.customize_steps = *o.steps;
    if (o.groups) cfg.model.groups = *o.groups;
    if (o.sample_steps) cfg.sample_steps = *o.sample_steps;
    if (o.pretrain_steps) cfg.pretrain_steps = *o.pretrain_steps;
    cfg.validate();
  } catch (const RunConfigError& e) {
    throw RunConfigError(std::string("command line:1: ") + e.what());
  }
  return cfg;
}

fs::path prepare_run_dir(const RunConfig& cfg) {
  const auto dir = cfg.run_dir();
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << run_config_to_json(cfg) << '\n';
  return dir;
}

fs::path customized_path(const RunConfig& cfg, const Overrides& o) {
  return o.checkpoint ? fs::path(*o.checkpoint) : cfg.run_dir() / "customized.drck";
}

std::unique_ptr<Workspace> customization_workspace(const RunConfig& cfg) {
  return std::make_unique<Workspace>(cfg.effective_model(), Rng::derive(cfg.seed, 99).next_u64());
}

void load_backbone(Workspace& ws, const RunConfig& cfg) {
  load_checkpoint(cfg.backbone_path(), ws.registry, [](Tag t) { return t == Tag::backbone; });
}

void dump_frames(const fs::path& dir, const Video& v) {
  fs::create_directories(dir);
  for (std::size_t f = 0; f < v.frames; ++f) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%02zu.ppm", f);
    write_ppm(dir / name, v.frame(f));
  }
}

int cmd_gen_corpus(const RunConfig& cfg) {
  const auto& b = cfg.model.backbone;
  const auto man = build_corpus(select_identities(cfg.identities), select_motions(cfg.motions), cfg.corpus_dir,
                                b.frames, b.height, b.width, cfg.seed);
  log("wrote " + std::to_string(man.clips.size()) + " clips to " + cfg.corpus_dir.string());
  return kExitOk;
}

int cmd_pretrain(const RunConfig& cfg) {
  const auto dir = prepare_run_dir(cfg);
  Workspace ws(cfg.model, cfg.pretrain_seed);
  std::ofstream csv(dir / "pretrain_log.csv");
  csv << "step,loss\n" << std::setprecision(12);
  const auto start = std::chrono::steady_clock::now();
  pretrain(ws, cfg, [&](std::size_t step, double loss) {
    csv << step << ',' << loss << '\n';
    if ((step + 1) % 100 == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log("pretrain step " + std::to_string(step + 1) + "/" + std::to_string(cfg.pretrain_steps) + " loss " +
          std::to_string(loss) + " (" + std::to_string(static_cast<int>(secs)) + "s)");
    }
  });
  const auto out = cfg.backbone_path();
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_checkpoint(out, ws.registry);
  log("saved backbone to " + out.string());
  return kExitOk;
}

int cmd_customize(const RunConfig& cfg) {
  const auto dir = prepare_run_dir(cfg);
  const auto corpus = load_corpus(cfg.corpus_dir);
  auto ws = customization_workspace(cfg);
  load_backbone(*ws, cfg);
  fs::create_directories(dir / "checkpoints");
  const auto result = customize(*ws, cfg, corpus, [&](const StepRecord& r, const ParamRegistry& reg) {
    const std::size_t done = r.step + 1;
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%06zu.drck", done);
      save_checkpoint(dir / "checkpoints" / name, reg);
      log("step " + std::to_string(done) + " loss " + std::to_string(r.loss));
    }
  });
  write_training_log(dir / "training_log.csv", result.log);
  save_checkpoint(dir / "customized.drck", ws->registry);
  log("saved customized model to " + (dir / "customized.drck").string());
  return kExitOk;
}

int cmd_sample(const RunConfig& cfg, const Overrides& o) {
  const auto dir = prepare_run_dir(cfg);
  const auto corpus = load_corpus(cfg.corpus_dir);
  auto ws = customization_workspace(cfg);
  load_checkpoint(customized_path(cfg, o), ws->registry);
  const auto samples = sample_pairs(*ws, cfg, corpus, inference_options(cfg.mode));
  fs::create_directories(dir / "samples");
  for (const auto& s : samples) {
    write_drv1(dir / "samples" / (s.clip_id + ".drv"), s.sample.video);
    dump_frames(dir / "samples" / s.clip_id, s.sample.video);
  }
  log("wrote " + std::to_string(samples.size()) + " samples to " + (dir / "samples").string());
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg) {
  const auto dir = cfg.run_dir();
  const auto corpus = load_corpus(cfg.corpus_dir);
  std::vector<MetricReport> reports;
  for (std::size_t i = 0; i < corpus.identities.size(); ++i) {
    for (std::size_t j = 0; j < corpus.motions.size(); ++j) {
      const std::string id = corpus.identities[i].spec.id + "__" + corpus.motions[j].spec.id;
      const auto video = read_drv1(dir / "samples" / (id + ".drv"));
      const double ref_dd[] = {corpus.motions[j].dynamic_degree};
      reports.push_back(evaluate_clip(id, video, corpus.identities[i].reference.image(), ref_dd));
    }
  }
  auto rows = reports;
  rows.push_back(mean_report(reports, "mean"));
  write_report_csv(dir / "report.csv", rows);
  std::cout << kReportHeader << '\n';
  for (const auto& r : rows) std::cout << report_row(r) << '\n';
  return kExitOk;
}

int cmd_viz_controller(const RunConfig& cfg, const Overrides& o) {
  const auto dir = prepare_run_dir(cfg);
  const auto corpus = load_corpus(cfg.corpus_dir);
  auto ws = customization_workspace(cfg);
  const auto ckpt = customized_path(cfg, o);
  if (fs::exists(ckpt)) {
    load_checkpoint(ckpt, ws->registry);
  } else {
    log("no customized checkpoint at " + ckpt.string() + "; using the pretrained backbone with fresh adapters");
    load_backbone(*ws, cfg);
  }
  const auto trace = controller_trace(*ws, cfg, corpus);
  write_controller_csv(dir / "controller.csv", trace);
  write_controller_svg(dir / "controller.svg", trace);
  log("wrote " + (dir / "controller.csv").string());
  return kExitOk;
}

int cmd_ablate(const RunConfig& base) {
  const auto dir = prepare_run_dir(base);
  const auto corpus = load_corpus(base.corpus_dir);
  const auto run_mode = [&](RunConfig cfg, const std::string& label) {
    auto ws = customization_workspace(cfg);
    load_backbone(*ws, cfg);
    log("ablate: " + label);
    const auto result = customize(*ws, cfg, corpus);
    write_training_log(dir / ("training_log_" + label + ".csv"), result.log);
    const auto reports = evaluate_samples(sample_pairs(*ws, cfg, corpus, result.inference), corpus);
    write_report_csv(dir / ("report_" + label + ".csv"), reports);
    return mean_report(reports, label);
  };

  std::vector<MetricReport> modes;
  for (auto m : {AblationMode::full, AblationMode::no_joint, AblationMode::no_controller, AblationMode::no_groups}) {
    RunConfig cfg = base;
    cfg.mode = m;
    modes.push_back(run_mode(cfg, std::string(to_string(m))));
  }
  std::ofstream csv(dir / "ablation.csv");
  csv << "mode,identity_sim,t_flicker,motion_smooth,t_cons,dynamic_degree,dd_deviation\n";
  for (const auto& r : modes) csv << report_row(r) << '\n';

  std::ofstream sweep(dir / "group_sweep.csv");
  sweep << "groups,identity_sim,t_flicker,motion_smooth,t_cons,dynamic_degree,dd_deviation,default\n";
  for (auto n : base.sweep_groups()) {
    RunConfig cfg = base;
    cfg.mode = AblationMode::full;
    cfg.model.groups = n;
    // The default count is the full-mode run above and n = 1 is the no-groups run.
    auto r = n == base.model.groups ? modes.front()
             : n == 1              ? modes.back()
                                   : run_mode(cfg, "groups_" + std::to_string(n));
    r.clip_id = std::to_string(n);
    sweep << report_row(r) << ',' << (n == base.model.groups ? 1 : 0) << '\n';
  }
  log("wrote " + (dir / "ablation.csv").string() + " and " + (dir / "group_sweep.csv").string());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual identity/motion adapter customization on a toy video diffusion transformer"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  Overrides o;
  app.add_option("-c,--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Global seed (overrides config and DUALREAL_SEED)");
  app.add_option("--run-id", o.run_id, "Run directory name under the output directory");
  app.add_option("--output-dir", o.output_dir, "Root directory for run artifacts");
  app.add_option("--corpus-dir", o.corpus_dir, "Corpus directory");
  app.add_option("--backbone", o.backbone, "Pretrained backbone checkpoint");
  app.add_option("--checkpoint", o.checkpoint, "Customized checkpoint for sample / eval / viz-controller");
  app.add_option("--mode", o.mode, "full | no-joint | no-controller | no-groups");
  app.add_option("--steps", o.steps, "Customization steps");
  app.add_option("--groups", o.groups, "Controller weight groups n");
  app.add_option("--sample-steps", o.sample_steps, "Sampler steps S");
  app.add_option("--pretrain-steps", o.pretrain_steps, "Backbone pretraining steps");

  auto* gen = app.add_subcommand("gen-corpus", "Render the identity and motion clips and the manifest");
  auto* pre = app.add_subcommand("pretrain", "Pretrain the backbone on generic sprite clips");
  auto* cus = app.add_subcommand("customize", "Train adapters and controller on the corpus");
  auto* smp = app.add_subcommand("sample", "Sample every identity x motion pair");
  auto* evl = app.add_subcommand("eval", "Score the samples of a run");
  auto* viz = app.add_subcommand("viz-controller", "Write per-step group weights as CSV and SVG");
  auto* abl = app.add_subcommand("ablate", "Run every mode and the group sweep, then compare");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const RunConfig cfg = resolve_config(o);
    if (*gen) return cmd_gen_corpus(cfg);
    if (*pre) return cmd_pretrain(cfg);
    if (*cus) return cmd_customize(cfg);
    if (*smp) return cmd_sample(cfg, o);
    if (*evl) return cmd_eval(cfg);
    if (*viz) return cmd_viz_controller(cfg, o);
    if (*abl) return cmd_ablate(cfg);
  } catch (const RunConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SpecError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
