#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dualreal/model.hpp"

namespace dualreal {

enum class AblationMode { full, no_joint, no_controller, no_groups };

std::string_view to_string(AblationMode m);
AblationMode mode_from_string(std::string_view s);

/// Raised for invalid configuration; `what()` is prefixed with "<source>:<line>: "
/// when the offending key could be located.
class RunConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::string run_id = "run";
  std::filesystem::path output_dir = "runs";
  std::filesystem::path corpus_dir = "corpus";
  std::uint64_t seed = 1;

  ModelConfig model;
  double motion_ratio = 0.5;
  double lr = 1e-3;
  double weight_decay = 0.01;

  std::size_t pretrain_steps = 6000;
  std::size_t pretrain_batch = 2;
  double pretrain_lr = 2e-3;
  std::uint64_t pretrain_seed = 0;

  std::size_t customize_steps = 1000;
  std::size_t checkpoint_every = 250;
  std::size_t sample_steps = 20;
  std::uint64_t sample_seed = 7;
  AblationMode mode = AblationMode::full;

  std::vector<std::string> identities{"red-circle", "blue-square"};
  std::vector<std::string> motions{"bounce", "orbit"};

  /// Pretrained backbone to start from; empty means <output_dir>/<run_id>/backbone.drck.
  std::filesystem::path backbone_checkpoint;
  /// Group counts compared by `ablate`; empty means {1, 2, groups, depth}.
  std::vector<std::size_t> group_sweep;

  /// Model configuration after applying the mode (no-groups forces one group).
  ModelConfig effective_model() const {
    ModelConfig m = model;
    if (mode == AblationMode::no_groups) m.groups = 1;
    return m;
  }
  /// Sorted, de-duplicated group counts for the sweep.
  std::vector<std::size_t> sweep_groups() const;
  std::filesystem::path run_dir() const { return output_dir / run_id; }
  std::filesystem::path backbone_path() const {
    return backbone_checkpoint.empty() ? run_dir() / "backbone.drck" : backbone_checkpoint;
  }
  /// Throws RunConfigError (without a line anchor).
  void validate() const;
};

/// Parses JSON config text. Unknown keys are rejected. Errors are line-anchored:
/// "<source>:<line>: message".
RunConfig parse_run_config(const std::string& text, const std::string& source = "config");
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

/// Applies DUALREAL_SEED if set; throws RunConfigError for a malformed value.
void apply_seed_env(RunConfig& cfg);

}  // namespace dualreal
