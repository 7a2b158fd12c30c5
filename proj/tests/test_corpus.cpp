#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "dualreal/corpus.hpp"

using namespace dualreal;
namespace fs = std::filesystem;

namespace {

struct Centroid {
  double y = 0.0, x = 0.0, mass = 0.0;
};

Centroid centroid(const Video& v, std::size_t f) {
  Centroid c;
  for (std::size_t y = 0; y < v.height; ++y)
    for (std::size_t x = 0; x < v.width; ++x) {
      double w = 0.0;
      for (std::size_t ch = 0; ch < v.channels; ++ch) w += v.at(f, y, x, ch);
      c.y += w * (static_cast<double>(y) + 0.5);
      c.x += w * (static_cast<double>(x) + 0.5);
      c.mass += w;
    }
  c.y /= c.mass;
  c.x /= c.mass;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dualreal_corpus_" + name);
  fs::remove_all(dir);
  return dir;
}

MotionSpec find_motion(MotionFamily fam) {
  for (const auto& m : default_motions())
    if (m.family == fam) return m;
  FAIL("missing default motion");
  return {};
}

}  // namespace

TEST_CASE("identity clips are static") {
  for (const auto& id : default_identities()) {
    const auto v = render_clip(id, std::nullopt, 8, 32, 32, 3);
    for (std::size_t f = 1; f < 8; ++f)
      CHECK(std::equal(v.frame(f).data.begin(), v.frame(f).data.end(), v.frame(0).data.begin()));
  }
}

TEST_CASE("rendered motion follows the trajectory") {
  const auto sprite = neutral_sprite();
  const double h = sprite.half_extent(32, 32);
  for (auto fam : {MotionFamily::linear_bounce, MotionFamily::circular_orbit, MotionFamily::zigzag}) {
    const auto m = find_motion(fam);
    const auto v = render_clip(sprite, m, 8, 32, 32, 17);
    // A full period has zero-mean displacement, so the clip-mean centroid is the rest position.
    double my = 0.0, mx = 0.0;
    for (std::size_t f = 0; f < 8; ++f) {
      const auto c = centroid(v, f);
      my += c.y / 8.0;
      mx += c.x / 8.0;
    }
    for (std::size_t f = 0; f < 8; ++f) {
      const auto c = centroid(v, f);
      const auto p = trajectory(m, f, h);
      CHECK(std::abs((c.y - my) - p.dy) < 1.0);
      CHECK(std::abs((c.x - mx) - p.dx) < 1.0);
    }
  }

  // Scale pulse changes the sprite area by size^2 and keeps the centre fixed.
  const auto pulse = find_motion(MotionFamily::scale_pulse);
  const auto v = render_clip(sprite, pulse, 8, 32, 32, 17);
  const auto c0 = centroid(v, 0);
  for (std::size_t f = 1; f < 8; ++f) {
    const auto c = centroid(v, f);
    const double s = trajectory(pulse, f, h).size / trajectory(pulse, 0, h).size;
    CHECK(c.mass / c0.mass == doctest::Approx(s * s).epsilon(0.08));
    CHECK(std::abs(c.y - c0.y) < 0.5);
    CHECK(std::abs(c.x - c0.x) < 0.5);
  }
}

TEST_CASE("orbit example: centroid tracks the circle within one pixel") {
  MotionSpec orbit{"orbit", MotionFamily::circular_orbit, 4.0, 8.0, 0.0};
  const auto v = render_clip(neutral_sprite(), orbit, 8, 32, 32, 0);
  const auto jitter = [&] {
    // Seed 0 still offsets the centre by a fixed sub-pixel amount; recover it from the mean.
    double y = 0.0, x = 0.0;
    for (std::size_t f = 0; f < 8; ++f) {
      y += centroid(v, f).y / 8.0;
      x += centroid(v, f).x / 8.0;
    }
    return std::make_pair(y - 16.0, x - 16.0);
  }();
  CHECK(std::abs(jitter.first) <= 0.5 + 1e-9);
  CHECK(std::abs(jitter.second) <= 0.5 + 1e-9);
  for (std::size_t f = 0; f < 8; ++f) {
    const double th = 2.0 * std::numbers::pi * static_cast<double>(f) / 8.0;
    const auto c = centroid(v, f);
    CHECK(std::hypot(c.x - 16.0 - 4.0 * std::cos(th), c.y - 16.0 - 4.0 * std::sin(th)) < 1.0);
  }
}

TEST_CASE("default specs satisfy the coverage and colour constraints") {
  for (const auto& id : default_identities()) {
    CHECK_NOTHROW(id.validate(32, 32));
    const double a = id.area_fraction(32, 32);
    CHECK((a >= 0.10 && a <= 0.40));
    CHECK(rgb_distance(id.color, neutral_sprite().color) >= kNeutralMinDistance);
    // Rendered coverage agrees with the analytic area.
    const auto v = render_clip(id, std::nullopt, 1, 32, 32, 1);
    double covered = 0.0;
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        double m = 0.0;
        for (std::size_t ch = 0; ch < 3; ++ch) m = std::max(m, v.at(0, y, x, ch) / id.color[ch]);
        covered += std::min(m, 1.0);
      }
    CHECK(covered / 1024.0 == doctest::Approx(a).epsilon(0.05));
    for (const auto& m : default_motions()) CHECK_NOTHROW(validate_pair(id, m, 8, 32, 32));
  }
  CHECK(rgb_distance({0, 0, 0}, {0.3, 0.4, 0.0}) == doctest::Approx(0.5));
}

TEST_CASE("invalid specs are rejected") {
  IdentitySpec big{"big", ShapeKind::square, {1, 0, 0}, {}, 0.9};
  CHECK_THROWS_AS(big.validate(32, 32), SpecError);
  IdentitySpec tiny{"tiny", ShapeKind::circle, {1, 0, 0}, {}, 0.1};
  CHECK_THROWS_AS(tiny.validate(32, 32), SpecError);
  MotionSpec wild{"wild", MotionFamily::linear_bounce, 12.0, 8.0, 0.0};
  CHECK_THROWS_AS(validate_pair(default_identities()[0], wild, 8, 32, 32), SpecError);
  CHECK_THROWS_AS(shape_from_string("hexagon"), SpecError);
  CHECK_THROWS_AS(motion_from_string("spiral"), SpecError);
  CHECK(motion_from_string("circular-orbit") == MotionFamily::circular_orbit);
  CHECK(to_string(MotionFamily::scale_pulse) == "scale-pulse");
}

TEST_CASE("concept tokens") {
  const auto ids = default_identities();
  const auto mos = default_motions();
  CHECK(concept_tokens(nullptr, nullptr) == PromptTokens{0, 0});
  CHECK(concept_tokens(&ids[0], nullptr) == PromptTokens{1 + static_cast<std::size_t>(ids[0].shape), 0});
  CHECK(concept_tokens(nullptr, &mos[1]) == PromptTokens{0, 1 + static_cast<std::size_t>(mos[1].family)});
}

TEST_CASE("corpus build writes every clip and is deterministic") {
  const auto ids = default_identities();
  const auto mos = default_motions();
  const auto a = scratch_dir("a");
  const auto b = scratch_dir("b");
  const auto ma = build_corpus(ids, mos, a, 8, 32, 32, 42);
  const auto mb = build_corpus(ids, mos, b, 8, 32, 32, 42);
  CHECK(ma.clips.size() == ids.size() + mos.size());
  CHECK(ma.clips == mb.clips);
  std::size_t references = 0;
  for (const auto& clip : ma.clips) {
    REQUIRE(fs::exists(a / clip.video_path));
    CHECK(slurp(a / clip.video_path) == slurp(b / clip.video_path));
    const auto v = read_drv1(a / clip.video_path);
    CHECK(v.frames == 8);
    CHECK(v.height == 32);
    if (clip.reference_path) {
      ++references;
      const auto ref = read_ppm(a / *clip.reference_path);
      CHECK(ref.height == 32);
      CHECK(clip.identity_id.has_value());
      CHECK_FALSE(clip.motion_id.has_value());
    } else {
      CHECK(clip.motion_id.has_value());
      CHECK(clip.tokens.identity == 0);
    }
  }
  CHECK(references == ids.size());
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));

  const auto c = scratch_dir("c");
  build_corpus(ids, mos, c, 8, 32, 32, 43);
  const auto motion_clip = ma.clips.back().video_path;
  CHECK(slurp(a / motion_clip) != slurp(c / motion_clip));
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("manifest round trip") {
  Manifest m;
  m.frames = 8;
  m.height = 32;
  m.width = 32;
  m.seed = 18446744073709551557ULL;
  m.identities = default_identities();
  m.identities[1].stripes = {5.0, 0.3, 0.4};
  m.motions = default_motions();
  m.clips.push_back({"identity-x", "x", std::nullopt, {2, 0}, "identity-x.drv", "identity-x.ppm"});
  m.clips.push_back({"motion-y", std::nullopt, "y", {0, 3}, "motion-y.drv", std::nullopt});
  const auto back = manifest_from_json(manifest_to_json(m));
  CHECK(back.frames == 8);
  CHECK(back.seed == m.seed);
  CHECK(back.clips == m.clips);
  REQUIRE(back.identities.size() == m.identities.size());
  for (std::size_t i = 0; i < m.identities.size(); ++i) {
    CHECK(back.identities[i].id == m.identities[i].id);
    CHECK(back.identities[i].shape == m.identities[i].shape);
    CHECK(back.identities[i].color == m.identities[i].color);
    CHECK(back.identities[i].scale == m.identities[i].scale);
    CHECK(back.identities[i].stripes.contrast == m.identities[i].stripes.contrast);
    CHECK(back.identities[i].stripes.angle == m.identities[i].stripes.angle);
  }
  for (std::size_t i = 0; i < m.motions.size(); ++i) {
    CHECK(back.motions[i].family == m.motions[i].family);
    CHECK(back.motions[i].amplitude == m.motions[i].amplitude);
  }
  CHECK_THROWS_AS(manifest_from_json("{not json"), IoError);
  CHECK_THROWS_AS(manifest_from_json("{}"), IoError);
}

TEST_CASE("generic pretraining clips") {
  Rng rng(4);
  int static_clips = 0;
  for (int i = 0; i < 200; ++i) {
    const auto g = random_generic_clip(rng, 4, 16, 16);
    CHECK(g.video.frames == 4);
    CHECK(g.tokens.identity <= 4);
    CHECK(g.tokens.motion <= 4);
    for (double v : g.video.data) CHECK((v >= 0.0 && v <= 1.0));
    if (g.tokens.motion == 0) ++static_clips;
  }
  // 25% static; 3 sigma for 200 draws is about 18.
  CHECK(std::abs(static_clips - 50) <= 19);
}
