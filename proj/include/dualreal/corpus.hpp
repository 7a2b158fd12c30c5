#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dualreal/dit.hpp"
#include "dualreal/rng.hpp"
#include "dualreal/video.hpp"

namespace dualreal {

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ShapeKind { circle, square, triangle, star };
enum class MotionFamily { linear_bounce, circular_orbit, zigzag, scale_pulse };

std::string_view to_string(ShapeKind s);
std::string_view to_string(MotionFamily m);
ShapeKind shape_from_string(std::string_view s);
MotionFamily motion_from_string(std::string_view s);

using Rgb = std::array<double, 3>;

struct Stripes {
  double period = 6.0;    // px
  double angle = 0.0;     // radians
  double contrast = 0.0;  // 0 = flat fill
};

/// A sprite identity. `scale` is the half-extent of the sprite's bounding square as
/// a fraction of half the shorter frame side.
struct IdentitySpec {
  std::string id;
  ShapeKind shape = ShapeKind::circle;
  Rgb color{1.0, 1.0, 1.0};
  Stripes stripes;
  double scale = 0.5;

  double half_extent(std::size_t height, std::size_t width) const;
  /// Analytic sprite area / frame area.
  double area_fraction(std::size_t height, std::size_t width) const;
  /// Throws SpecError unless the sprite covers 10-40% of the frame.
  void validate(std::size_t height, std::size_t width) const;
};

struct MotionSpec {
  std::string id;
  MotionFamily family = MotionFamily::linear_bounce;
  double amplitude = 4.0;  // px
  double period = 8.0;     // frames
  double phase = 0.0;      // radians
};

/// Sprite centre offset (dy, dx) from the frame centre and size multiplier at frame f.
struct TrajectoryPoint {
  double dy = 0.0;
  double dx = 0.0;
  double size = 1.0;
};

TrajectoryPoint trajectory(const MotionSpec& motion, std::size_t frame, double half_extent);

/// Throws SpecError when the sprite would leave the frame at any of the F frames.
void validate_pair(const IdentitySpec& identity, const std::optional<MotionSpec>& motion, std::size_t frames,
                   std::size_t height, std::size_t width);

/// Deterministic render on a black background with 2x2 supersampling. `seed` adds a
/// fixed sub-pixel offset of the sprite centre (constant over the clip). A missing
/// motion renders a static clip.
Video render_clip(const IdentitySpec& identity, const std::optional<MotionSpec>& motion, std::size_t frames,
                  std::size_t height, std::size_t width, std::uint64_t seed);

/// Appearance-free sprite used for motion clips.
IdentitySpec neutral_sprite();
inline constexpr double kNeutralMinDistance = 0.2;
double rgb_distance(const Rgb& a, const Rgb& b);

/// Concept tokens: identity slot 1 + shape index, motion slot 1 + family index;
/// slot 0 is the generic sprite / static clip.
PromptTokens concept_tokens(const IdentitySpec* identity, const MotionSpec* motion);

std::vector<IdentitySpec> default_identities();
std::vector<MotionSpec> default_motions();

struct ClipRecord {
  std::string clip_id;
  std::optional<std::string> identity_id;
  std::optional<std::string> motion_id;
  PromptTokens tokens;
  std::string video_path;                     // relative to the corpus directory
  std::optional<std::string> reference_path;  // relative; identity clips only
  bool operator==(const ClipRecord&) const = default;
};

struct Manifest {
  std::size_t frames = 0, height = 0, width = 0;
  std::uint64_t seed = 0;
  std::vector<IdentitySpec> identities;
  std::vector<MotionSpec> motions;
  std::vector<ClipRecord> clips;
};

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const std::string& text);
Manifest read_manifest(const std::filesystem::path& path);

/// Renders one static clip (+ reference PPM) per identity and one neutral-sprite clip
/// per motion into `out_dir`, then writes manifest.json.
Manifest build_corpus(const std::vector<IdentitySpec>& identities, const std::vector<MotionSpec>& motions,
                      const std::filesystem::path& out_dir, std::size_t frames, std::size_t height,
                      std::size_t width, std::uint64_t seed);

/// Random sprite/motion pair for backbone pretraining. Static with probability 0.25.
struct GenericClip {
  Video video;
  PromptTokens tokens;
};
GenericClip random_generic_clip(Rng& rng, std::size_t frames, std::size_t height, std::size_t width);

}  // namespace dualreal
