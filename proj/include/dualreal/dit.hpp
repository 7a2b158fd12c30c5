#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dualreal/params.hpp"
#include "dualreal/tensor.hpp"
#include "dualreal/video.hpp"

namespace dualreal {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct BackboneConfig {
  std::size_t frames = 8;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  std::size_t patch_t = 2;
  std::size_t patch_s = 4;
  std::size_t hidden = 64;  // channel width c
  std::size_t depth = 8;    // block count L
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t diffusion_steps = 100;  // T
  std::size_t t_dim = 64;
  std::size_t identity_vocab = 8;
  std::size_t motion_vocab = 8;

  static constexpr std::size_t text_tokens = 2;
  std::size_t visual_tokens() const;
  std::size_t patch_dim() const { return patch_t * patch_s * patch_s * channels; }
  std::size_t total_tokens() const { return text_tokens + visual_tokens(); }
  std::size_t video_numel() const { return frames * height * width * channels; }
  void validate() const;
};

/// Concept-token prompt: one identity slot and one motion slot. Slot 0 of each
/// vocabulary is the generic token ("some sprite" / "no specific motion").
struct PromptTokens {
  std::size_t identity = 0;
  std::size_t motion = 0;
  bool operator==(const PromptTokens&) const = default;
};

/// Video (F x H x W x C layout) -> [n_v, P] patch rows. Token order is
/// (frame block, row block, column block); within a patch (dt, dy, dx, channel).
Tensor patchify(std::span<const double> video, const BackboneConfig& cfg);
Tensor patchify(const Video& video, const BackboneConfig& cfg);
/// Inverse rearrangement of patchify.
std::vector<double> unpatchify(std::span<const double> patches, const BackboneConfig& cfg);

/// Frozen text-conditioned diffusion transformer. Holds parameter names only; values
/// come from the registry passed to each call.
class Backbone {
 public:
  Backbone(BackboneConfig cfg, ParamRegistry& reg, Rng& rng);

  const BackboneConfig& config() const { return cfg_; }

  /// patches [n_v, P] -> visual tokens [n_v, c]; positional embedding optional.
  Tensor embed_visual(const ParamRegistry& reg, const Tensor& patches, bool positions = true) const;
  Tensor embed_text(const ParamRegistry& reg, PromptTokens tokens) const;
  /// f_in = [f_text; f_visual].
  Tensor join(const Tensor& text, const Tensor& visual) const;
  /// Timestep conditioning vector [1, c] fed to every block's scale/shift.
  Tensor condition(const ParamRegistry& reg, std::size_t step) const;
  /// Residual branch of block i (attention + MLP contributions). The block output in
  /// the backbone alone is f_in + f_dit.
  Tensor block(const ParamRegistry& reg, std::size_t i, const Tensor& f_in, const Tensor& cond) const;
  /// Noise prediction [n_v, P] for noisy input `patches` at `step`. The network
  /// output is a residual on top of the best per-pixel linear estimate of the noise
  /// under a Gaussian pixel prior, scaled by that estimate's error standard deviation.
  /// With zero final layers the head returns the linear estimate alone.
  Tensor head(const ParamRegistry& reg, const Tensor& tokens, const Tensor& cond, const Tensor& patches,
              std::size_t step) const;

  /// Full backbone-only noise prediction.
  Tensor forward(const ParamRegistry& reg, const Tensor& patches, PromptTokens tokens,
                 std::size_t step) const;

  struct BlockNames {
    Linear modulation;
    Linear qkv;
    Linear attn_out;
    Linear mlp_in;
    Linear mlp_out;
  };
  const BlockNames& block_names(std::size_t i) const { return blocks_.at(i); }

 private:
  Tensor modulated_norm(const Tensor& x, const Tensor& shift, const Tensor& scale) const;

  BackboneConfig cfg_;
  Linear patch_embed_;
  std::string pos_embed_;
  std::string token_table_;
  Linear time_fc1_;
  Linear time_fc2_;
  std::vector<BlockNames> blocks_;
  Linear final_modulation_;
  Linear final_proj_;
  Linear input_gate_;

  struct Preconditioning {
    double gain;      // multiplies (x_t - shift)
    double shift;     // sqrt(abar) * prior mean
    double residual;  // scale of the network output
  };
  std::vector<Preconditioning> skip_;  // per timestep
};

}  // namespace dualreal
