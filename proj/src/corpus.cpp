#include "dualreal/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace dualreal {

namespace {

using json = nlohmann::json;
constexpr double kPi = std::numbers::pi;
constexpr double kStarInner = 0.5;
constexpr double kJitter = 0.5;  // max sub-pixel centre offset per axis

double triangle_wave(double theta) { return (2.0 / kPi) * std::asin(std::sin(theta)); }

// Unit-area factor: sprite area = factor * h^2 for bounding half-extent h.
double area_factor(ShapeKind s) {
  switch (s) {
    case ShapeKind::circle: return kPi;
    case ShapeKind::square: return 4.0;
    case ShapeKind::triangle: return 2.0;
    case ShapeKind::star: return 5.0 * kStarInner * std::sin(kPi / 5.0);
  }
  return 0.0;
}

bool inside_star(double u, double v, double h) {
  // Ray cast against the 10-vertex star outline.
  std::array<double, 10> xs{}, ys{};
  for (int k = 0; k < 10; ++k) {
    const double a = -kPi / 2.0 + k * kPi / 5.0;
    const double r = (k % 2 == 0) ? h : kStarInner * h;
    xs[k] = r * std::cos(a);
    ys[k] = r * std::sin(a);
  }
  bool in = false;
  for (int i = 0, j = 9; i < 10; j = i++) {
    if ((ys[i] > v) != (ys[j] > v) && u < (xs[j] - xs[i]) * (v - ys[i]) / (ys[j] - ys[i]) + xs[i]) in = !in;
  }
  return in;
}

bool inside(ShapeKind s, double u, double v, double h) {
  switch (s) {
    case ShapeKind::circle: return u * u + v * v <= h * h;
    case ShapeKind::square: return std::abs(u) <= h && std::abs(v) <= h;
    case ShapeKind::triangle: return v <= h && v >= -h && std::abs(u) <= 0.5 * (v + h);
    case ShapeKind::star: return inside_star(u, v, h);
  }
  return false;
}

// Largest |offset| along each axis plus the largest size multiplier over the clip.
struct Extent {
  double dy = 0.0, dx = 0.0, size = 1.0;
};

Extent clip_extent(const std::optional<MotionSpec>& motion, std::size_t frames, double h) {
  Extent e;
  if (!motion) return e;
  for (std::size_t f = 0; f < frames; ++f) {
    const auto p = trajectory(*motion, f, h);
    e.dy = std::max(e.dy, std::abs(p.dy));
    e.dx = std::max(e.dx, std::abs(p.dx));
    e.size = std::max(e.size, p.size);
  }
  return e;
}

}  // namespace

std::string_view to_string(ShapeKind s) {
  switch (s) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
    case ShapeKind::star: return "star";
  }
  return "?";
}

std::string_view to_string(MotionFamily m) {
  switch (m) {
    case MotionFamily::linear_bounce: return "linear-bounce";
    case MotionFamily::circular_orbit: return "circular-orbit";
    case MotionFamily::zigzag: return "zigzag";
    case MotionFamily::scale_pulse: return "scale-pulse";
  }
  return "?";
}

ShapeKind shape_from_string(std::string_view s) {
  for (auto k : {ShapeKind::circle, ShapeKind::square, ShapeKind::triangle, ShapeKind::star})
    if (to_string(k) == s) return k;
  throw SpecError("unknown shape '" + std::string(s) + "'");
}

MotionFamily motion_from_string(std::string_view s) {
  for (auto k : {MotionFamily::linear_bounce, MotionFamily::circular_orbit, MotionFamily::zigzag,
                 MotionFamily::scale_pulse})
    if (to_string(k) == s) return k;
  throw SpecError("unknown motion family '" + std::string(s) + "'");
}

double IdentitySpec::half_extent(std::size_t height, std::size_t width) const {
  return scale * 0.5 * static_cast<double>(std::min(height, width));
}

double IdentitySpec::area_fraction(std::size_t height, std::size_t width) const {
  const double h = half_extent(height, width);
  return area_factor(shape) * h * h / static_cast<double>(height * width);
}

void IdentitySpec::validate(std::size_t height, std::size_t width) const {
  for (double c : color)
    if (!(c >= 0.0 && c <= 1.0)) throw SpecError("identity '" + id + "': colour outside [0, 1]");
  if (!(stripes.contrast >= 0.0 && stripes.contrast <= 1.0)) throw SpecError("identity '" + id + "': stripe contrast outside [0, 1]");
  if (!(stripes.period > 0.0)) throw SpecError("identity '" + id + "': stripe period must be positive");
  const double a = area_fraction(height, width);
  if (!(a >= 0.10 && a <= 0.40)) {
    throw SpecError("identity '" + id + "': sprite covers " + std::to_string(a * 100.0) +
                    "% of the frame, outside 10-40%");
  }
}

TrajectoryPoint trajectory(const MotionSpec& m, std::size_t frame, double half_extent) {
  const double theta = 2.0 * kPi * static_cast<double>(frame) / m.period + m.phase;
  TrajectoryPoint p;
  switch (m.family) {
    case MotionFamily::linear_bounce: p.dx = m.amplitude * triangle_wave(theta); break;
    case MotionFamily::circular_orbit:
      p.dx = m.amplitude * std::cos(theta);
      p.dy = m.amplitude * std::sin(theta);
      break;
    case MotionFamily::zigzag:
      p.dx = m.amplitude * triangle_wave(theta);
      p.dy = 0.5 * m.amplitude * triangle_wave(3.0 * theta);
      break;
    case MotionFamily::scale_pulse: p.size = 1.0 + m.amplitude * std::sin(theta) / half_extent; break;
  }
  return p;
}

void validate_pair(const IdentitySpec& identity, const std::optional<MotionSpec>& motion, std::size_t frames,
                   std::size_t height, std::size_t width) {
  identity.validate(height, width);
  if (motion) {
    if (!(motion->period > 0.0)) throw SpecError("motion '" + motion->id + "': period must be positive");
    if (!(motion->amplitude >= 0.0)) throw SpecError("motion '" + motion->id + "': amplitude must be non-negative");
  }
  const double h = identity.half_extent(height, width);
  const auto e = clip_extent(motion, frames, h);
  const double reach_y = e.dy + h * e.size + kJitter;
  const double reach_x = e.dx + h * e.size + kJitter;
  if (reach_y > 0.5 * static_cast<double>(height) || reach_x > 0.5 * static_cast<double>(width)) {
    throw SpecError("identity '" + identity.id + "' under motion '" + (motion ? motion->id : "static") +
                    "' leaves the frame");
  }
}

Video render_clip(const IdentitySpec& identity, const std::optional<MotionSpec>& motion, std::size_t frames,
                  std::size_t height, std::size_t width, std::uint64_t seed) {
  validate_pair(identity, motion, frames, height, width);
  Rng rng(seed);
  const double jy = rng.uniform(-kJitter, kJitter);
  const double jx = rng.uniform(-kJitter, kJitter);
  const double h = identity.half_extent(height, width);
  const double ca = std::cos(identity.stripes.angle), sa = std::sin(identity.stripes.angle);

  Video v(frames, height, width, 3);
  for (std::size_t f = 0; f < frames; ++f) {
    const auto p = motion ? trajectory(*motion, f, h) : TrajectoryPoint{};
    const double cy = 0.5 * static_cast<double>(height) + p.dy + jy;
    const double cx = 0.5 * static_cast<double>(width) + p.dx + jx;
    const double hh = h * p.size;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        Rgb acc{0.0, 0.0, 0.0};
        for (int sy = 0; sy < 2; ++sy) {
          for (int sx = 0; sx < 2; ++sx) {
            const double v_ = static_cast<double>(y) + 0.25 + 0.5 * sy - cy;
            const double u = static_cast<double>(x) + 0.25 + 0.5 * sx - cx;
            if (!inside(identity.shape, u, v_, hh)) continue;
            const double phase = 2.0 * kPi * (u * ca + v_ * sa) / identity.stripes.period;
            const double shade = 1.0 - identity.stripes.contrast * 0.5 * (1.0 + std::sin(phase));
            for (int c = 0; c < 3; ++c) acc[c] += identity.color[c] * shade;
          }
        }
        for (std::size_t c = 0; c < 3; ++c) v.at(f, y, x, c) = 0.25 * acc[c];
      }
    }
  }
  return v;
}

IdentitySpec neutral_sprite() {
  IdentitySpec s;
  s.id = "neutral";
  s.shape = ShapeKind::circle;
  s.color = {0.5, 0.5, 0.5};
  s.stripes = {6.0, 0.0, 0.0};
  s.scale = 0.45;
  return s;
}

double rgb_distance(const Rgb& a, const Rgb& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

PromptTokens concept_tokens(const IdentitySpec* identity, const MotionSpec* motion) {
  PromptTokens t;
  t.identity = identity ? 1 + static_cast<std::size_t>(identity->shape) : 0;
  t.motion = motion ? 1 + static_cast<std::size_t>(motion->family) : 0;
  return t;
}

std::vector<IdentitySpec> default_identities() {
  return {
      {"red-circle", ShapeKind::circle, {0.90, 0.15, 0.10}, {6.0, 0.0, 0.3}, 0.45},
      {"blue-square", ShapeKind::square, {0.15, 0.30, 0.90}, {5.0, kPi / 4.0, 0.4}, 0.40},
      {"green-triangle", ShapeKind::triangle, {0.20, 0.85, 0.25}, {4.0, kPi / 2.0, 0.3}, 0.55},
      {"yellow-star", ShapeKind::star, {0.95, 0.85, 0.10}, {7.0, kPi / 3.0, 0.2}, 0.65},
  };
}

std::vector<MotionSpec> default_motions() {
  return {
      {"bounce", MotionFamily::linear_bounce, 5.0, 8.0, 0.0},
      {"orbit", MotionFamily::circular_orbit, 4.5, 8.0, 0.0},
      {"zigzag", MotionFamily::zigzag, 4.5, 8.0, 0.0},
      {"pulse", MotionFamily::scale_pulse, 2.0, 4.0, 0.0},
  };
}

namespace {

json to_json(const IdentitySpec& s) {
  return {{"id", s.id},
          {"shape", to_string(s.shape)},
          {"color", s.color},
          {"stripes", {{"period", s.stripes.period}, {"angle", s.stripes.angle}, {"contrast", s.stripes.contrast}}},
          {"scale", s.scale}};
}

json to_json(const MotionSpec& m) {
  return {{"id", m.id}, {"family", to_string(m.family)}, {"amplitude", m.amplitude}, {"period", m.period}, {"phase", m.phase}};
}

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<std::string> optional_string(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::string>();
}

}  // namespace

std::string manifest_to_json(const Manifest& m) {
  json j;
  j["format"] = "dualreal-corpus";
  j["version"] = 1;
  j["frames"] = m.frames;
  j["height"] = m.height;
  j["width"] = m.width;
  j["seed"] = m.seed;
  j["identities"] = json::array();
  for (const auto& s : m.identities) j["identities"].push_back(to_json(s));
  j["motions"] = json::array();
  for (const auto& s : m.motions) j["motions"].push_back(to_json(s));
  j["clips"] = json::array();
  for (const auto& c : m.clips) {
    j["clips"].push_back({{"clip_id", c.clip_id},
                          {"identity_id", optional_json(c.identity_id)},
                          {"motion_id", optional_json(c.motion_id)},
                          {"tokens", {{"identity", c.tokens.identity}, {"motion", c.tokens.motion}}},
                          {"video_path", c.video_path},
                          {"reference_path", optional_json(c.reference_path)}});
  }
  return j.dump(2);
}

Manifest manifest_from_json(const std::string& text) {
  Manifest m;
  try {
    const auto j = json::parse(text);
    m.frames = j.at("frames").get<std::size_t>();
    m.height = j.at("height").get<std::size_t>();
    m.width = j.at("width").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("identities")) {
      IdentitySpec id;
      id.id = s.at("id").get<std::string>();
      id.shape = shape_from_string(s.at("shape").get<std::string>());
      id.color = s.at("color").get<Rgb>();
      id.stripes = {s.at("stripes").at("period").get<double>(), s.at("stripes").at("angle").get<double>(),
                    s.at("stripes").at("contrast").get<double>()};
      id.scale = s.at("scale").get<double>();
      m.identities.push_back(id);
    }
    for (const auto& s : j.at("motions")) {
      m.motions.push_back({s.at("id").get<std::string>(), motion_from_string(s.at("family").get<std::string>()),
                           s.at("amplitude").get<double>(), s.at("period").get<double>(), s.at("phase").get<double>()});
    }
    for (const auto& c : j.at("clips")) {
      ClipRecord r;
      r.clip_id = c.at("clip_id").get<std::string>();
      r.identity_id = optional_string(c.at("identity_id"));
      r.motion_id = optional_string(c.at("motion_id"));
      r.tokens = {c.at("tokens").at("identity").get<std::size_t>(), c.at("tokens").at("motion").get<std::size_t>()};
      r.video_path = c.at("video_path").get<std::string>();
      r.reference_path = optional_string(c.at("reference_path"));
      m.clips.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str());
}

Manifest build_corpus(const std::vector<IdentitySpec>& identities, const std::vector<MotionSpec>& motions,
                      const std::filesystem::path& out_dir, std::size_t frames, std::size_t height,
                      std::size_t width, std::uint64_t seed) {
  if (identities.empty() || motions.empty()) throw SpecError("build_corpus: identity and motion lists must be non-empty");
  const auto gray = neutral_sprite();
  for (const auto& id : identities) {
    if (rgb_distance(id.color, gray.color) < kNeutralMinDistance) {
      throw SpecError("identity '" + id.id + "' is too close to the neutral motion sprite colour");
    }
    validate_pair(id, std::nullopt, frames, height, width);
  }
  for (const auto& m : motions) validate_pair(gray, m, frames, height, width);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  Manifest man{frames, height, width, seed, identities, motions, {}};
  std::uint64_t stream = 0;
  for (const auto& id : identities) {
    const auto clip = render_clip(id, std::nullopt, frames, height, width, Rng::derive(seed, stream++).next_u64());
    ClipRecord r{"identity-" + id.id, id.id, std::nullopt, concept_tokens(&id, nullptr),
                 "identity-" + id.id + ".drv", "identity-" + id.id + ".ppm"};
    write_drv1(out_dir / r.video_path, clip);
    write_ppm(out_dir / *r.reference_path, clip.image());
    man.clips.push_back(std::move(r));
  }
  for (const auto& m : motions) {
    const auto clip = render_clip(gray, m, frames, height, width, Rng::derive(seed, stream++).next_u64());
    ClipRecord r{"motion-" + m.id, std::nullopt, m.id, concept_tokens(nullptr, &m), "motion-" + m.id + ".drv",
                 std::nullopt};
    write_drv1(out_dir / r.video_path, clip);
    man.clips.push_back(std::move(r));
  }
  std::ofstream out(out_dir / "manifest.json");
  out << manifest_to_json(man) << '\n';
  if (!out) throw IoError("cannot write manifest in " + out_dir.string());
  return man;
}

GenericClip random_generic_clip(Rng& rng, std::size_t frames, std::size_t height, std::size_t width) {
  IdentitySpec id;
  id.id = "generic";
  id.shape = static_cast<ShapeKind>(rng.index(4));
  for (auto& c : id.color) c = rng.uniform(0.05, 0.95);
  id.stripes = {rng.uniform(4.0, 8.0), rng.uniform(0.0, kPi), rng.uniform(0.0, 0.5)};
  const double area = rng.uniform(0.12, 0.25) * static_cast<double>(height * width);
  const double h = std::sqrt(area / area_factor(id.shape));
  id.scale = h / (0.5 * static_cast<double>(std::min(height, width)));

  std::optional<MotionSpec> motion;
  if (!rng.bernoulli(0.25)) {
    MotionSpec m;
    m.id = "generic";
    m.family = static_cast<MotionFamily>(rng.index(4));
    const double room = 0.5 * static_cast<double>(std::min(height, width)) - h - kJitter - 1e-9;
    const double max_amp = m.family == MotionFamily::scale_pulse ? std::min(room, 0.3 * h) : room;
    m.amplitude = rng.uniform(std::min(1.0, max_amp), max_amp);
    m.period = rng.uniform(4.0, 12.0);
    m.phase = rng.uniform(0.0, 2.0 * kPi);
    motion = m;
  }
  GenericClip out;
  out.video = render_clip(id, motion, frames, height, width, rng.next_u64());
  out.tokens = concept_tokens(&id, motion ? &*motion : nullptr);
  if (rng.bernoulli(0.2)) out.tokens.identity = 0;
  return out;
}

}  // namespace dualreal
