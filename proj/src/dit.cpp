#include "dualreal/dit.hpp"

#include <cmath>

#include "dualreal/diffusion.hpp"

namespace dualreal {

std::size_t BackboneConfig::visual_tokens() const {
  return (frames / patch_t) * (height / patch_s) * (width / patch_s);
}

void BackboneConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(frames, "frames");
  positive(height, "height");
  positive(width, "width");
  positive(channels, "channels");
  positive(patch_t, "patch_t");
  positive(patch_s, "patch_s");
  positive(hidden, "hidden");
  positive(depth, "depth");
  positive(heads, "heads");
  positive(mlp_ratio, "mlp_ratio");
  positive(diffusion_steps, "diffusion_steps");
  positive(identity_vocab, "identity_vocab");
  positive(motion_vocab, "motion_vocab");
  if (frames % patch_t != 0 || height % patch_s != 0 || width % patch_s != 0) {
    throw ConfigError("video dims " + std::to_string(frames) + "x" + std::to_string(height) + "x" +
                      std::to_string(width) + " not divisible by patch sizes (" +
                      std::to_string(patch_t) + ", " + std::to_string(patch_s) + ")");
  }
  if (hidden % heads != 0) throw ConfigError("hidden width must be divisible by heads");
  if (t_dim < 2 || t_dim % 2 != 0) throw ConfigError("t_dim must be even and >= 2");
}

namespace {

// Pixel statistics of the generic pretraining clips in model space ([-1, 1]), measured
// once over 2000 random clips and frozen here.
constexpr double kDataMean = -0.83686;
constexpr double kDataVariance = 0.14974;

void check_video_dims(std::size_t numel, const BackboneConfig& cfg) {
  if (cfg.frames % cfg.patch_t != 0 || cfg.height % cfg.patch_s != 0 || cfg.width % cfg.patch_s != 0) {
    throw ShapeError("patchify: dims " + to_string({cfg.frames, cfg.height, cfg.width}) +
                     " not divisible by patch sizes (" + std::to_string(cfg.patch_t) + ", " +
                     std::to_string(cfg.patch_s) + ")");
  }
  if (numel != cfg.video_numel()) {
    throw ShapeError("patchify: expected " + std::to_string(cfg.video_numel()) + " values, got " +
                     std::to_string(numel));
  }
}

// Visits every (token, within-patch offset, video offset) triple in patch order.
template <class Fn>
void for_each_patch_element(const BackboneConfig& cfg, Fn&& fn) {
  const std::size_t ft = cfg.frames / cfg.patch_t, hy = cfg.height / cfg.patch_s,
                    wx = cfg.width / cfg.patch_s;
  const std::size_t P = cfg.patch_dim();
  std::size_t token = 0;
  for (std::size_t a = 0; a < ft; ++a) {
    for (std::size_t b = 0; b < hy; ++b) {
      for (std::size_t c = 0; c < wx; ++c, ++token) {
        std::size_t k = 0;
        for (std::size_t dt = 0; dt < cfg.patch_t; ++dt) {
          for (std::size_t dy = 0; dy < cfg.patch_s; ++dy) {
            for (std::size_t dx = 0; dx < cfg.patch_s; ++dx) {
              const std::size_t f = a * cfg.patch_t + dt;
              const std::size_t y = b * cfg.patch_s + dy;
              const std::size_t x = c * cfg.patch_s + dx;
              const std::size_t base = ((f * cfg.height + y) * cfg.width + x) * cfg.channels;
              for (std::size_t ch = 0; ch < cfg.channels; ++ch, ++k) fn(token * P + k, base + ch);
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor patchify(std::span<const double> video, const BackboneConfig& cfg) {
  check_video_dims(video.size(), cfg);
  std::vector<double> out(video.size());
  for_each_patch_element(cfg, [&](std::size_t p, std::size_t v) { out[p] = video[v]; });
  return Tensor::constant({cfg.visual_tokens(), cfg.patch_dim()}, std::move(out));
}

Tensor patchify(const Video& video, const BackboneConfig& cfg) {
  if (video.frames != cfg.frames || video.height != cfg.height || video.width != cfg.width ||
      video.channels != cfg.channels) {
    throw ShapeError("patchify: video " +
                     to_string({video.frames, video.height, video.width, video.channels}) +
                     " does not match config " +
                     to_string({cfg.frames, cfg.height, cfg.width, cfg.channels}));
  }
  return patchify(std::span<const double>(video.data), cfg);
}

std::vector<double> unpatchify(std::span<const double> patches, const BackboneConfig& cfg) {
  check_video_dims(patches.size(), cfg);
  std::vector<double> out(patches.size());
  for_each_patch_element(cfg, [&](std::size_t p, std::size_t v) { out[v] = patches[p]; });
  return out;
}

Backbone::Backbone(BackboneConfig cfg, ParamRegistry& reg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t c = cfg_.hidden;
  const Tag tag = Tag::backbone;
  patch_embed_ = Linear::create(reg, "backbone.patch_embed", cfg_.patch_dim(), c, tag, rng);
  pos_embed_ = "backbone.pos_embed";
  reg.add(pos_embed_, init_tensor({cfg_.visual_tokens(), c}, Init::normal_002, c, rng), tag);
  token_table_ = "backbone.token_table";
  reg.add(token_table_,
          init_tensor({cfg_.identity_vocab + cfg_.motion_vocab, c}, Init::normal_002, c, rng), tag);
  time_fc1_ = Linear::create(reg, "backbone.time.fc1", cfg_.t_dim, c, tag, rng);
  time_fc2_ = Linear::create(reg, "backbone.time.fc2", c, c, tag, rng);
  for (std::size_t i = 0; i < cfg_.depth; ++i) {
    const std::string p = "backbone.block" + std::to_string(i);
    BlockNames b;
    b.modulation = Linear::create(reg, p + ".modulation", c, 4 * c, tag, rng, Init::zeros, Init::zeros);
    b.qkv = Linear::create(reg, p + ".qkv", c, 3 * c, tag, rng);
    b.attn_out = Linear::create(reg, p + ".attn_out", c, c, tag, rng);
    b.mlp_in = Linear::create(reg, p + ".mlp_in", c, cfg_.mlp_ratio * c, tag, rng);
    b.mlp_out = Linear::create(reg, p + ".mlp_out", cfg_.mlp_ratio * c, c, tag, rng);
    blocks_.push_back(std::move(b));
  }
  final_modulation_ =
      Linear::create(reg, "backbone.final.modulation", c, 2 * c, tag, rng, Init::zeros, Init::zeros);
  final_proj_ =
      Linear::create(reg, "backbone.final.proj", c, cfg_.patch_dim(), tag, rng, Init::zeros, Init::zeros);
  input_gate_ =
      Linear::create(reg, "backbone.final.input_gate", c, cfg_.patch_dim(), tag, rng, Init::zeros, Init::zeros);

  const DiffusionSchedule schedule(cfg_.diffusion_steps);
  for (std::size_t t = 0; t < cfg_.diffusion_steps; ++t) {
    const double a = schedule.alpha_bar(t);
    const double total = a * kDataVariance + (1.0 - a);
    skip_.push_back({std::sqrt(1.0 - a) / total, std::sqrt(a) * kDataMean, std::sqrt(a * kDataVariance / total)});
  }
}

Tensor Backbone::embed_visual(const ParamRegistry& reg, const Tensor& patches, bool positions) const {
  auto tokens = patch_embed_(reg, patches);
  if (positions) tokens = add(tokens, reg[pos_embed_]);
  return tokens;
}

Tensor Backbone::embed_text(const ParamRegistry& reg, PromptTokens tokens) const {
  if (tokens.identity >= cfg_.identity_vocab || tokens.motion >= cfg_.motion_vocab) {
    throw std::out_of_range("embed_text: token id outside vocabulary");
  }
  const std::size_t vocab = cfg_.identity_vocab + cfg_.motion_vocab;
  std::vector<double> one_hot(2 * vocab, 0.0);
  one_hot[tokens.identity] = 1.0;
  one_hot[vocab + cfg_.identity_vocab + tokens.motion] = 1.0;
  return matmul(Tensor::constant({2, vocab}, std::move(one_hot)), reg[token_table_]);
}

Tensor Backbone::join(const Tensor& text, const Tensor& visual) const { return concat({text, visual}, 0); }

Tensor Backbone::condition(const ParamRegistry& reg, std::size_t step) const {
  auto t = Tensor::row(timestep_embedding(step, cfg_.t_dim, cfg_.diffusion_steps));
  return time_fc2_(reg, silu(time_fc1_(reg, t)));
}

Tensor Backbone::modulated_norm(const Tensor& x, const Tensor& shift, const Tensor& scale) const {
  return broadcast_add(broadcast_mul(layer_norm(x), add_scalar(scale, 1.0)), shift);
}

Tensor Backbone::block(const ParamRegistry& reg, std::size_t i, const Tensor& f_in,
                       const Tensor& cond) const {
  const auto& b = blocks_.at(i);
  const std::size_t c = cfg_.hidden;
  const std::size_t head_dim = c / cfg_.heads;
  const auto mod = b.modulation(reg, silu(cond));
  const auto shift1 = slice_chunk(mod, 1, 0, c);
  const auto scale1 = slice_chunk(mod, 1, c, c);
  const auto shift2 = slice_chunk(mod, 1, 2 * c, c);
  const auto scale2 = slice_chunk(mod, 1, 3 * c, c);

  const auto qkv = b.qkv(reg, modulated_norm(f_in, shift1, scale1));
  std::vector<Tensor> heads;
  heads.reserve(cfg_.heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  for (std::size_t h = 0; h < cfg_.heads; ++h) {
    const auto q = slice_chunk(qkv, 1, h * head_dim, head_dim);
    const auto k = slice_chunk(qkv, 1, c + h * head_dim, head_dim);
    const auto v = slice_chunk(qkv, 1, 2 * c + h * head_dim, head_dim);
    const auto attn = softmax_axis(scale(matmul(q, k, Transpose::rhs), inv_sqrt), 1);
    heads.push_back(matmul(attn, v));
  }
  const auto attn_delta = b.attn_out(reg, concat(heads, 1));
  const auto x1 = add(f_in, attn_delta);
  const auto mlp_delta = b.mlp_out(reg, gelu(b.mlp_in(reg, modulated_norm(x1, shift2, scale2))));
  return add(attn_delta, mlp_delta);
}

Tensor Backbone::head(const ParamRegistry& reg, const Tensor& tokens, const Tensor& cond, const Tensor& patches,
                      std::size_t step) const {
  const std::size_t c = cfg_.hidden;
  const auto visual = slice_chunk(tokens, 0, BackboneConfig::text_tokens, cfg_.visual_tokens());
  const auto mod = final_modulation_(reg, silu(cond));
  const auto h = modulated_norm(visual, slice_chunk(mod, 1, 0, c), slice_chunk(mod, 1, c, c));
  // The c-wide stream cannot carry a full P-wide patch, so the residual also sees the
  // noisy input directly through a per-timestep, per-feature gate.
  const auto residual = add(final_proj_(reg, h), broadcast_mul(patches, input_gate_(reg, silu(cond))));
  const auto& k = skip_.at(step);
  return add(scale(add_scalar(patches, -k.shift), k.gain), scale(residual, k.residual));
}

Tensor Backbone::forward(const ParamRegistry& reg, const Tensor& patches, PromptTokens tokens,
                         std::size_t step) const {
  const auto cond = condition(reg, step);
  auto x = join(embed_text(reg, tokens), embed_visual(reg, patches));
  for (std::size_t i = 0; i < cfg_.depth; ++i) x = add(x, block(reg, i, x, cond));
  return head(reg, x, cond, patches, step);
}

}  // namespace dualreal
