// End-to-end runs of the command-line tool on a miniature configuration.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dualreal/checkpoint.hpp"
#include "dualreal/experiment.hpp"

using namespace dualreal;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "dualreal_cli_test";

const char* kTinyConfig = R"({
  "run_id": "tiny",
  "seed": 3,
  "backbone": {"frames": 4, "height": 32, "width": 32, "patch_t": 2, "patch_s": 4,
               "hidden": 16, "depth": 4, "heads": 2, "mlp_ratio": 2,
               "diffusion_steps": 20, "t_dim": 8},
  "adapter": {"bottleneck": 4},
  "groups": 4,
  "pretrain": {"steps": 20, "batch": 1, "lr": 0.003},
  "customize_steps": 20,
  "checkpoint_every": 10,
  "sample_steps": 5
}
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string f; std::getline(ss, f, sep);) out.push_back(f);
  return out;
}

struct Result {
  int code;
  std::string err;
};

Result run(const std::string& args, const std::string& env = "") {
  const auto err = kRoot / "stderr.txt";
  const std::string cmd = "cd " + kRoot.string() + " && " + env + " " + DUALREAL_CLI_PATH + " " + args + " 2> " +
                          err.string() + " > " + (kRoot / "stdout.txt").string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

void setup() {
  static bool done = false;
  if (done) return;
  done = true;
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);
  std::ofstream(kRoot / "cfg.json") << kTinyConfig;
}

const std::string kCfg = "-c cfg.json";

}  // namespace

TEST_CASE("full pipeline at miniature scale") {
  setup();
  const auto run_dir = kRoot / "runs" / "tiny";

  REQUIRE(run("gen-corpus " + kCfg).code == 0);
  const auto manifest = read_manifest(kRoot / "corpus" / "manifest.json");
  CHECK(manifest.clips.size() == 4);
  CHECK(manifest.frames == 4);

  REQUIRE(run("pretrain " + kCfg).code == 0);
  CHECK(fs::exists(run_dir / "backbone.drck"));
  CHECK(lines(run_dir / "pretrain_log.csv").size() == 21);
  CHECK(fs::exists(run_dir / "config.json"));

  REQUIRE(run("customize " + kCfg).code == 0);
  CHECK(fs::exists(run_dir / "customized.drck"));
  CHECK(fs::exists(run_dir / "checkpoints" / "step_000010.drck"));
  CHECK(fs::exists(run_dir / "checkpoints" / "step_000020.drck"));
  const auto log = lines(run_dir / "training_log.csv");
  REQUIRE(log.size() == 21);
  CHECK(log[0] == "step,phase,loss");

  SUBCASE("sampling is bit-reproducible") {
    REQUIRE(run("sample --seed 7 " + kCfg).code == 0);
    const auto first = slurp(run_dir / "samples" / "red-circle__orbit.drv");
    CHECK(fs::exists(run_dir / "samples" / "red-circle__orbit" / "frame_03.ppm"));
    REQUIRE(run("sample --seed 7 " + kCfg).code == 0);
    CHECK(first.size() > 0);
    CHECK(slurp(run_dir / "samples" / "red-circle__orbit.drv") == first);
    REQUIRE(run("sample " + kCfg, "DUALREAL_SEED=7").code == 0);
    CHECK(slurp(run_dir / "samples" / "red-circle__orbit.drv") == first);
    REQUIRE(run("sample --seed 8 " + kCfg).code == 0);
    CHECK(slurp(run_dir / "samples" / "red-circle__orbit.drv") != first);

    REQUIRE(run("eval " + kCfg).code == 0);
    const auto report = lines(run_dir / "report.csv");
    REQUIRE(report.size() == 6);
    CHECK(report[0] == "clip_id,identity_sim,t_flicker,motion_smooth,t_cons,dynamic_degree,dd_deviation");
    CHECK(split(report[5])[0] == "mean");
    for (std::size_t i = 1; i < report.size(); ++i) CHECK(split(report[i]).size() == 7);
  }

  SUBCASE("controller visualization") {
    REQUIRE(run("viz-controller --sample-steps 20 " + kCfg).code == 0);
    const auto csv = lines(run_dir / "controller.csv");
    REQUIRE(csv.size() == 21);
    CHECK(csv[0] == "step,group_0,group_1,group_2,group_3");
    for (std::size_t i = 1; i < csv.size(); ++i) {
      const auto fields = split(csv[i]);
      REQUIRE(fields.size() == 5);
      for (std::size_t k = 1; k < 5; ++k) {
        const double w = std::stod(fields[k]);
        CHECK((w > 0.0 && w < 1.0));
      }
    }
    CHECK(slurp(run_dir / "controller.svg").find("<svg") != std::string::npos);
  }

  SUBCASE("ablation table") {
    REQUIRE(run("ablate --run-id abl --backbone runs/tiny/backbone.drck " + kCfg).code == 0);
    const auto dir = kRoot / "runs" / "abl";
    const auto table = lines(dir / "ablation.csv");
    REQUIRE(table.size() == 5);
    CHECK(split(table[0]).size() == 7);
    CHECK(split(table[1])[0] == "full");
    CHECK(split(table[2])[0] == "no-joint");
    CHECK(split(table[3])[0] == "no-controller");
    CHECK(split(table[4])[0] == "no-groups");
    for (const auto& row : table) CHECK(split(row).size() == 7);
    const auto sweep = lines(dir / "group_sweep.csv");
    REQUIRE(sweep.size() == 4);  // header + n in {1, 2, 4}
    CHECK(split(sweep[1])[0] == "1");
    CHECK(split(sweep[3])[0] == "4");
    CHECK(split(sweep[3]).back() == "1");
    // Reused rows carry the same metrics as the runs they stand for.
    CHECK(split(sweep[3])[1] == split(table[1])[1]);
    CHECK(split(sweep[1])[1] == split(table[4])[1]);
  }
}

TEST_CASE("zero customization steps reproduce backbone samples") {
  setup();
  auto cfg = parse_run_config(kTinyConfig);
  cfg.output_dir = kRoot / "runs";
  cfg.corpus_dir = kRoot / "corpus";
  cfg.customize_steps = 0;
  if (!fs::exists(cfg.backbone_path())) {
    Workspace ws(cfg.model, cfg.pretrain_seed);
    pretrain(ws, cfg, {});
    fs::create_directories(cfg.run_dir());
    save_checkpoint(cfg.backbone_path(), ws.registry);
  }
  const auto corpus = render_corpus(select_identities(cfg.identities), select_motions(cfg.motions), 4, 32, 32, 3);
  Workspace ws(cfg.model, 11);
  load_checkpoint(cfg.backbone_path(), ws.registry, [](Tag t) { return t == Tag::backbone; });
  const auto result = customize(ws, cfg, corpus);
  CHECK(result.log.empty());
  ForwardOptions plain;
  plain.adapters = false;
  const auto custom = sample_pairs(ws, cfg, corpus, result.inference);
  const auto backbone = sample_pairs(ws, cfg, corpus, plain);
  REQUIRE(custom.size() == backbone.size());
  for (std::size_t i = 0; i < custom.size(); ++i) CHECK(custom[i].sample.video.data == backbone[i].sample.video.data);
}

TEST_CASE("configuration errors exit with code 2 and a located message") {
  setup();
  std::ofstream(kRoot / "bad.json") << "{\n  \"seed\": 1,\n  \"groups\": 12\n}\n";
  auto r = run("customize -c bad.json");
  CHECK(r.code == 2);
  CHECK(r.err.find("bad.json:3:") != std::string::npos);

  r = run("sample --mode sideways " + kCfg);
  CHECK(r.code == 2);
  CHECK(r.err.find("command line:1:") != std::string::npos);

  r = run("customize --groups 0 " + kCfg);
  CHECK(r.code == 2);

  r = run("sample " + kCfg, "DUALREAL_SEED=abc");
  CHECK(r.code == 2);
  CHECK(r.err.find("DUALREAL_SEED") != std::string::npos);

  CHECK(run("frobnicate").code == 2);
  CHECK(run("").code == 2);
  CHECK(run("customize -c missing.json").code == 2);
}

TEST_CASE("runtime failures exit with code 3") {
  setup();
  auto r = run("customize --corpus-dir nowhere --run-id r3 " + kCfg);
  CHECK(r.code == 3);
  r = run("sample --checkpoint nothing.drck --run-id r4 " + kCfg);
  CHECK(r.code == 3);
}
