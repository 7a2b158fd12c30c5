#include "dualreal/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dualreal/corpus.hpp"
#include "json.hpp"

namespace dualreal {

namespace {

using json = nlohmann::json;
using KeyPath = std::vector<std::string>;

struct Problem {
  KeyPath key;
  std::string message;
};

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

// Line of the last key in `path`, searching for each component after the previous one.
std::size_t key_line(const std::string& text, const KeyPath& path) {
  std::size_t pos = 0;
  for (const auto& k : path) {
    const auto found = text.find('"' + k + '"', pos);
    if (found == std::string::npos) return 0;
    pos = found;
  }
  return path.empty() ? 0 : line_of_offset(text, pos);
}

std::string dotted(const KeyPath& path) {
  std::string s;
  for (const auto& k : path) s += (s.empty() ? "" : ".") + k;
  return s;
}

std::optional<Problem> check(const RunConfig& c) {
  const auto& b = c.model.backbone;
  const std::pair<const char*, std::size_t> positive[] = {
      {"frames", b.frames}, {"height", b.height}, {"width", b.width}, {"channels", b.channels},
      {"patch_t", b.patch_t}, {"patch_s", b.patch_s}, {"hidden", b.hidden}, {"depth", b.depth},
      {"heads", b.heads}, {"mlp_ratio", b.mlp_ratio}, {"diffusion_steps", b.diffusion_steps},
      {"t_dim", b.t_dim}, {"identity_vocab", b.identity_vocab}, {"motion_vocab", b.motion_vocab}};
  for (const auto& [key, value] : positive) {
    if (value == 0) return Problem{{"backbone", key}, std::string("backbone.") + key + " must be positive"};
  }
  if (b.frames % b.patch_t != 0) return Problem{{"backbone", "patch_t"}, "patch_t must divide frames"};
  if (b.height % b.patch_s != 0 || b.width % b.patch_s != 0) {
    return Problem{{"backbone", "patch_s"}, "patch_s must divide height and width"};
  }
  if (b.hidden % b.heads != 0) return Problem{{"backbone", "heads"}, "heads must divide hidden"};
  if (b.t_dim % 2 != 0) return Problem{{"backbone", "t_dim"}, "t_dim must be even"};
  try {
    b.validate();
  } catch (const ConfigError& e) {
    return Problem{{"backbone"}, e.what()};
  }
  if (c.model.bottleneck == 0) return Problem{{"adapter", "bottleneck"}, "bottleneck must be positive"};
  if (c.model.condition == 0) return Problem{{"adapter", "condition"}, "condition width must be positive"};
  if (c.model.groups == 0 || c.model.groups > b.depth) {
    return Problem{{"groups"}, "groups must lie in [1, depth=" + std::to_string(b.depth) + "], got " +
                                   std::to_string(c.model.groups)};
  }
  for (auto n : c.group_sweep) {
    if (n == 0 || n > b.depth) return Problem{{"group_sweep"}, "group_sweep entries must lie in [1, depth]"};
  }
  if (!(c.motion_ratio >= 0.0 && c.motion_ratio <= 1.0)) return Problem{{"motion_ratio"}, "motion_ratio must lie in [0, 1]"};
  if (!(c.lr > 0.0)) return Problem{{"lr"}, "lr must be positive"};
  if (!(c.pretrain_lr > 0.0)) return Problem{{"pretrain", "lr"}, "pretrain lr must be positive"};
  if (c.pretrain_batch == 0) return Problem{{"pretrain", "batch"}, "pretrain batch must be positive"};
  if (c.sample_steps == 0 || c.sample_steps > b.diffusion_steps) {
    return Problem{{"sample_steps"}, "sample_steps must lie in [1, diffusion_steps]"};
  }
  if (c.identities.empty()) return Problem{{"identities"}, "at least one identity is required"};
  if (c.motions.empty()) return Problem{{"motions"}, "at least one motion is required"};
  const auto known = [](const auto& specs, const std::string& id) {
    return std::any_of(specs.begin(), specs.end(), [&](const auto& s) { return s.id == id; });
  };
  for (const auto& id : c.identities) {
    if (!known(default_identities(), id)) return Problem{{"identities"}, "unknown identity '" + id + "'"};
  }
  for (const auto& id : c.motions) {
    if (!known(default_motions(), id)) return Problem{{"motions"}, "unknown motion '" + id + "'"};
  }
  if (c.run_id.empty()) return Problem{{"run_id"}, "run_id must be non-empty"};
  if (c.model.condition != 32) {
    return Problem{{"adapter", "condition"}, "condition width must equal the reference encoder width (32)"};
  }
  return std::nullopt;
}

template <class T>
void read(const json& obj, const char* key, T& out, KeyPath path, std::vector<KeyPath>& seen) {
  if (!obj.contains(key)) return;
  path.push_back(key);
  seen.push_back(path);
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Problem{path, "wrong type for '" + dotted(path) + "'"};
  }
}

void read_path(const json& obj, const char* key, std::filesystem::path& out, KeyPath path, std::vector<KeyPath>& seen) {
  std::string s = out.string();
  read(obj, key, s, path, seen);
  out = s;
}

void reject_unknown(const json& obj, const KeyPath& path, std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw Problem{path, "'" + dotted(path) + "' must be an object"};
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) {
      auto p = path;
      p.push_back(k);
      throw Problem{p, "unknown key '" + dotted(p) + "'"};
    }
  }
}

}  // namespace

std::string_view to_string(AblationMode m) {
  switch (m) {
    case AblationMode::full: return "full";
    case AblationMode::no_joint: return "no-joint";
    case AblationMode::no_controller: return "no-controller";
    case AblationMode::no_groups: return "no-groups";
  }
  return "?";
}

AblationMode mode_from_string(std::string_view s) {
  for (auto m : {AblationMode::full, AblationMode::no_joint, AblationMode::no_controller, AblationMode::no_groups})
    if (to_string(m) == s) return m;
  throw RunConfigError("unknown mode '" + std::string(s) + "' (expected full, no-joint, no-controller or no-groups)");
}

std::vector<std::size_t> RunConfig::sweep_groups() const {
  auto out = group_sweep.empty() ? std::vector<std::size_t>{1, 2, model.groups, model.backbone.depth} : group_sweep;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void RunConfig::validate() const {
  if (auto p = check(*this)) throw RunConfigError(p->message);
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw RunConfigError(source + ":" + std::to_string(line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1)) +
                         ": malformed JSON: " + e.what());
  }
  RunConfig c;
  std::vector<KeyPath> seen;
  try {
    reject_unknown(j, {}, {"run_id", "output_dir", "corpus_dir", "seed", "backbone", "adapter", "groups",
                           "motion_ratio", "lr", "weight_decay", "pretrain", "customize_steps", "checkpoint_every",
                           "sample_steps", "sample_seed", "mode", "identities", "motions", "backbone_checkpoint",
                           "group_sweep"});
    read(j, "run_id", c.run_id, {}, seen);
    read_path(j, "output_dir", c.output_dir, {}, seen);
    read_path(j, "corpus_dir", c.corpus_dir, {}, seen);
    read(j, "seed", c.seed, {}, seen);
    if (j.contains("backbone")) {
      const auto& b = j["backbone"];
      reject_unknown(b, {"backbone"}, {"frames", "height", "width", "channels", "patch_t", "patch_s", "hidden", "depth",
                                       "heads", "mlp_ratio", "diffusion_steps", "t_dim", "identity_vocab", "motion_vocab"});
      auto& m = c.model.backbone;
      read(b, "frames", m.frames, {"backbone"}, seen);
      read(b, "height", m.height, {"backbone"}, seen);
      read(b, "width", m.width, {"backbone"}, seen);
      read(b, "channels", m.channels, {"backbone"}, seen);
      read(b, "patch_t", m.patch_t, {"backbone"}, seen);
      read(b, "patch_s", m.patch_s, {"backbone"}, seen);
      read(b, "hidden", m.hidden, {"backbone"}, seen);
      read(b, "depth", m.depth, {"backbone"}, seen);
      read(b, "heads", m.heads, {"backbone"}, seen);
      read(b, "mlp_ratio", m.mlp_ratio, {"backbone"}, seen);
      read(b, "diffusion_steps", m.diffusion_steps, {"backbone"}, seen);
      read(b, "t_dim", m.t_dim, {"backbone"}, seen);
      read(b, "identity_vocab", m.identity_vocab, {"backbone"}, seen);
      read(b, "motion_vocab", m.motion_vocab, {"backbone"}, seen);
    }
    if (j.contains("adapter")) {
      reject_unknown(j["adapter"], {"adapter"}, {"bottleneck", "condition"});
      read(j["adapter"], "bottleneck", c.model.bottleneck, {"adapter"}, seen);
      read(j["adapter"], "condition", c.model.condition, {"adapter"}, seen);
    }
    read(j, "groups", c.model.groups, {}, seen);
    read(j, "motion_ratio", c.motion_ratio, {}, seen);
    read(j, "lr", c.lr, {}, seen);
    read(j, "weight_decay", c.weight_decay, {}, seen);
    if (j.contains("pretrain")) {
      const auto& p = j["pretrain"];
      reject_unknown(p, {"pretrain"}, {"steps", "batch", "lr", "seed"});
      read(p, "steps", c.pretrain_steps, {"pretrain"}, seen);
      read(p, "batch", c.pretrain_batch, {"pretrain"}, seen);
      read(p, "lr", c.pretrain_lr, {"pretrain"}, seen);
      read(p, "seed", c.pretrain_seed, {"pretrain"}, seen);
    }
    read(j, "customize_steps", c.customize_steps, {}, seen);
    read(j, "checkpoint_every", c.checkpoint_every, {}, seen);
    read(j, "sample_steps", c.sample_steps, {}, seen);
    read(j, "sample_seed", c.sample_seed, {}, seen);
    std::string mode(to_string(c.mode));
    read(j, "mode", mode, {}, seen);
    try {
      c.mode = mode_from_string(mode);
    } catch (const RunConfigError& e) {
      throw Problem{{"mode"}, e.what()};
    }
    read(j, "identities", c.identities, {}, seen);
    read(j, "motions", c.motions, {}, seen);
    read_path(j, "backbone_checkpoint", c.backbone_checkpoint, {}, seen);
    read(j, "group_sweep", c.group_sweep, {}, seen);
    if (auto p = check(c)) throw *p;
  } catch (const Problem& p) {
    const auto line = key_line(text, p.key);
    throw RunConfigError(source + ":" + std::to_string(line == 0 ? 1 : line) + ": " + p.message);
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RunConfigError(path.string() + ":0: cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

std::string run_config_to_json(const RunConfig& c) {
  const auto& b = c.model.backbone;
  json j = {
      {"run_id", c.run_id},
      {"output_dir", c.output_dir.string()},
      {"corpus_dir", c.corpus_dir.string()},
      {"seed", c.seed},
      {"backbone",
       {{"frames", b.frames}, {"height", b.height}, {"width", b.width}, {"channels", b.channels},
        {"patch_t", b.patch_t}, {"patch_s", b.patch_s}, {"hidden", b.hidden}, {"depth", b.depth},
        {"heads", b.heads}, {"mlp_ratio", b.mlp_ratio}, {"diffusion_steps", b.diffusion_steps},
        {"t_dim", b.t_dim}, {"identity_vocab", b.identity_vocab}, {"motion_vocab", b.motion_vocab}}},
      {"adapter", {{"bottleneck", c.model.bottleneck}, {"condition", c.model.condition}}},
      {"groups", c.model.groups},
      {"motion_ratio", c.motion_ratio},
      {"lr", c.lr},
      {"weight_decay", c.weight_decay},
      {"pretrain", {{"steps", c.pretrain_steps}, {"batch", c.pretrain_batch}, {"lr", c.pretrain_lr}, {"seed", c.pretrain_seed}}},
      {"customize_steps", c.customize_steps},
      {"checkpoint_every", c.checkpoint_every},
      {"sample_steps", c.sample_steps},
      {"sample_seed", c.sample_seed},
      {"mode", to_string(c.mode)},
      {"identities", c.identities},
      {"motions", c.motions},
      {"backbone_checkpoint", c.backbone_checkpoint.string()},
      {"group_sweep", c.group_sweep},
  };
  return j.dump(2);
}

void apply_seed_env(RunConfig& cfg) {
  const char* env = std::getenv("DUALREAL_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || *end != '\0' || *env == '-') {
    throw RunConfigError("DUALREAL_SEED:1: not an unsigned integer: '" + std::string(env) + "'");
  }
  cfg.seed = v;
}

}  // namespace dualreal
