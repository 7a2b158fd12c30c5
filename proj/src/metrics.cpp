#include "dualreal/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace dualreal {

namespace {

double luminance(const ImageView& im, std::size_t y, std::size_t x) {
  if (im.channels < 3) return im.at(y, x, 0);
  return 0.299 * im.at(y, x, 0) + 0.587 * im.at(y, x, 1) + 0.114 * im.at(y, x, 2);
}

// Frozen normalisation constants from 800 frames of random generic sprite clips
// (seed 20261016). Means are per feature; standard deviations are pooled within each
// feature group, because per-feature values for the near-zero odd moments are tiny
// and would amplify sub-pixel rendering noise.
constexpr std::array<double, ToyEncoder::raw_dim> kFeatureMean = {
    0.123, 0.1668, 0.156, 0.1496, 0.1525, 0.1178, 0.1029, 0.03143,
    0.1415, 0.171, 0.1483, 0.1663, 0.1374, 0.1109, 0.09638, 0.02821,
    0.1141, 0.1784, 0.1748, 0.1655, 0.1571, 0.1127, 0.06747, 0.03,
    0.2389, -0.0004069, 0.2581, -5.253e-05, 0.01931, -6.472e-05, -0.02626, 0.0003089,
    0.01509, 0.01493, 0.0006172, 0.02172, 0.2503, 0.248, 0.02303, 0.0175,
    0.2991, 0.2955, 0.01658, 0.007004, 0.03429, 0.03351, 0.006231,
};
constexpr double kHistStd = 0.2065;
constexpr double kMoment2Std = 0.117;
constexpr double kMoment3Std = 0.04343;
constexpr double kLumaStd = 0.08403;

double feature_std(std::size_t k) {
  if (k < 24) return kHistStd;
  if (k < 27) return kMoment2Std;
  if (k < 31) return kMoment3Std;
  return kLumaStd;
}

void require_frames(const Video& v, std::size_t n, const char* what) {
  if (v.frames < n) {
    throw MetricError(std::string(what) + ": needs at least " + std::to_string(n) + " frames, got " +
                      std::to_string(v.frames));
  }
}

}  // namespace

std::vector<double> ToyEncoder::raw_features(const ImageView& im) {
  std::vector<double> f(raw_dim, 0.0);
  if (im.height * im.width == 0) throw MetricError("ToyEncoder: empty image");

  // Soft-binned histograms (linear interpolation between bin centres), each pixel
  // weighted by its brightest channel so the black background does not dominate
  // and the features do not depend on sprite size.
  const std::size_t hist_channels = std::min<std::size_t>(im.channels, 3);
  double total_weight = 0.0;
  for (std::size_t y = 0; y < im.height; ++y) {
    for (std::size_t x = 0; x < im.width; ++x) {
      double weight = 0.0;
      for (std::size_t c = 0; c < hist_channels; ++c) weight = std::max(weight, std::clamp(im.at(y, x, c), 0.0, 1.0));
      if (weight == 0.0) continue;
      total_weight += weight;
      for (std::size_t c = 0; c < hist_channels; ++c) {
        const double pos = std::clamp(std::clamp(im.at(y, x, c), 0.0, 1.0) * 8.0 - 0.5, 0.0, 7.0);
        const auto lo = std::min<std::size_t>(static_cast<std::size_t>(pos), 6);
        const double frac = pos - static_cast<double>(lo);
        f[c * 8 + lo] += weight * (1.0 - frac);
        f[c * 8 + lo + 1] += weight * frac;
      }
    }
  }
  if (total_weight > 0.0)
    for (std::size_t k = 0; k < 24; ++k) f[k] /= total_weight;

  double m00 = 0.0, m10 = 0.0, m01 = 0.0;
  for (std::size_t y = 0; y < im.height; ++y) {
    for (std::size_t x = 0; x < im.width; ++x) {
      const double l = luminance(im, y, x);
      m00 += l;
      m10 += l * static_cast<double>(x);
      m01 += l * static_cast<double>(y);
    }
  }
  if (m00 > 1e-12) {
    const double xc = m10 / m00;
    const double yc = m01 / m00;
    constexpr std::array<std::array<int, 2>, 7> orders = {{{2, 0}, {1, 1}, {0, 2}, {3, 0}, {2, 1}, {1, 2}, {0, 3}}};
    for (std::size_t k = 0; k < orders.size(); ++k) {
      const auto [p, q] = orders[k];
      double mu = 0.0;
      for (std::size_t y = 0; y < im.height; ++y) {
        for (std::size_t x = 0; x < im.width; ++x) {
          const double dx = static_cast<double>(x) - xc;
          const double dy = static_cast<double>(y) - yc;
          mu += std::pow(dx, p) * std::pow(dy, q) * luminance(im, y, x);
        }
      }
      f[24 + k] = mu / std::pow(m00, 1.0 + 0.5 * (p + q));
    }
  }

  for (std::size_t by = 0; by < 4; ++by) {
    for (std::size_t bx = 0; bx < 4; ++bx) {
      const std::size_t y0 = by * im.height / 4, y1 = (by + 1) * im.height / 4;
      const std::size_t x0 = bx * im.width / 4, x1 = (bx + 1) * im.width / 4;
      double s = 0.0;
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) s += luminance(im, y, x);
      const std::size_t n = (y1 - y0) * (x1 - x0);
      f[31 + by * 4 + bx] = n == 0 ? 0.0 : s / static_cast<double>(n);
    }
  }
  return f;
}

std::vector<double> ToyEncoder::encode(const ImageView& image) const {
  auto raw = raw_features(image);
  for (std::size_t k = 0; k < raw_dim; ++k) raw[k] = (raw[k] - kFeatureMean[k]) / feature_std(k);
  raw.resize(dim_, 0.0);
  return raw;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw MetricError("cosine: length mismatch");
  const double ab = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double aa = std::inner_product(a.begin(), a.end(), a.begin(), 0.0);
  const double bb = std::inner_product(b.begin(), b.end(), b.begin(), 0.0);
  if (aa == 0.0 || bb == 0.0) throw MetricError("cosine: zero-norm embedding");
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

double identity_similarity(const std::vector<std::vector<double>>& frame_embeddings,
                           std::span<const double> reference_embedding) {
  if (frame_embeddings.empty()) throw MetricError("identity_similarity: no frames");
  double s = 0.0;
  for (const auto& e : frame_embeddings) s += cosine(e, reference_embedding);
  return s / static_cast<double>(frame_embeddings.size());
}

double identity_similarity(const Video& video, const ImageView& reference, const ToyEncoder& enc) {
  if (reference.height != video.height || reference.width != video.width || reference.channels != video.channels) {
    throw MetricError("identity_similarity: reference and video frames differ in shape");
  }
  std::vector<std::vector<double>> embs;
  for (std::size_t f = 0; f < video.frames; ++f) embs.push_back(enc.encode(video.frame(f)));
  return identity_similarity(embs, enc.encode(reference));
}

double temporal_flickering(const Video& video) {
  require_frames(video, 2, "temporal_flickering");
  const std::size_t n = video.frame_size();
  double s = 0.0;
  for (std::size_t f = 0; f + 1 < video.frames; ++f)
    for (std::size_t i = 0; i < n; ++i) s += std::abs(video.data[(f + 1) * n + i] - video.data[f * n + i]);
  return 1.0 - s / static_cast<double>((video.frames - 1) * n);
}

double motion_smoothness(const Video& video) {
  require_frames(video, 3, "motion_smoothness");
  const std::size_t n = video.frame_size();
  double s = 0.0;
  for (std::size_t f = 1; f + 1 < video.frames; ++f) {
    for (std::size_t i = 0; i < n; ++i) {
      s += std::abs(video.data[(f + 1) * n + i] - 2.0 * video.data[f * n + i] + video.data[(f - 1) * n + i]);
    }
  }
  return 1.0 - s / (2.0 * static_cast<double>((video.frames - 2) * n));
}

double temporal_consistency(const std::vector<std::vector<double>>& frame_embeddings) {
  if (frame_embeddings.size() < 2) throw MetricError("temporal_consistency: needs at least 2 frames");
  double s = 0.0;
  for (std::size_t f = 0; f + 1 < frame_embeddings.size(); ++f) s += cosine(frame_embeddings[f], frame_embeddings[f + 1]);
  return s / static_cast<double>(frame_embeddings.size() - 1);
}

double temporal_consistency(const Video& video, const ToyEncoder& enc) {
  require_frames(video, 2, "temporal_consistency");
  std::vector<std::vector<double>> embs;
  for (std::size_t f = 0; f < video.frames; ++f) embs.push_back(enc.encode(video.frame(f)));
  return temporal_consistency(embs);
}

BlockFlow block_flow(const ImageView& from, const ImageView& to) {
  const std::size_t h = from.height, w = from.width, ch = from.channels;
  if (h % kFlowBlock != 0 || w % kFlowBlock != 0) {
    throw MetricError("dynamic_degree: frame " + std::to_string(h) + "x" + std::to_string(w) +
                      " is not divisible into 8x8 blocks");
  }
  BlockFlow flow;
  const auto wrap = [](long v, std::size_t n) { return static_cast<std::size_t>(((v % static_cast<long>(n)) + static_cast<long>(n)) % static_cast<long>(n)); };
  for (std::size_t by = 0; by < h; by += kFlowBlock) {
    for (std::size_t bx = 0; bx < w; bx += kFlowBlock) {
      double best = std::numeric_limits<double>::infinity();
      int best_dy = 0, best_dx = 0, best_mag2 = 0;
      for (int dy = -kFlowRadius; dy <= kFlowRadius; ++dy) {
        for (int dx = -kFlowRadius; dx <= kFlowRadius; ++dx) {
          double sad = 0.0;
          for (std::size_t y = by; y < by + kFlowBlock; ++y) {
            const std::size_t ty = wrap(static_cast<long>(y) + dy, h);
            for (std::size_t x = bx; x < bx + kFlowBlock; ++x) {
              const std::size_t tx = wrap(static_cast<long>(x) + dx, w);
              for (std::size_t c = 0; c < ch; ++c) sad += std::abs(to.at(ty, tx, c) - from.at(y, x, c));
            }
          }
          const int mag2 = dy * dy + dx * dx;
          // Scan order is already lexicographic in (dy, dx), so only a strictly
          // smaller SAD or an equal SAD with a shorter vector replaces the incumbent.
          if (sad < best || (sad == best && mag2 < best_mag2)) {
            best = sad;
            best_dy = dy;
            best_dx = dx;
            best_mag2 = mag2;
          }
        }
      }
      flow.dy.push_back(best_dy);
      flow.dx.push_back(best_dx);
    }
  }
  return flow;
}

double dynamic_degree(const Video& video) {
  require_frames(video, 2, "dynamic_degree");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t f = 0; f + 1 < video.frames; ++f) {
    const auto flow = block_flow(video.frame(f), video.frame(f + 1));
    for (std::size_t b = 0; b < flow.dy.size(); ++b) {
      s += std::hypot(static_cast<double>(flow.dy[b]), static_cast<double>(flow.dx[b]));
      ++count;
    }
  }
  return s / static_cast<double>(count);
}

double dd_deviation(double dd, std::span<const double> reference_dds) {
  if (reference_dds.empty()) throw MetricError("dd_deviation: empty reference set");
  const double mean = std::accumulate(reference_dds.begin(), reference_dds.end(), 0.0) /
                      static_cast<double>(reference_dds.size());
  return std::abs(dd - mean);
}

double dd_deviation(const Video& video, const std::vector<Video>& references) {
  std::vector<double> dds;
  for (const auto& r : references) dds.push_back(dynamic_degree(r));
  return dd_deviation(dynamic_degree(video), dds);
}

MetricReport evaluate_clip(std::string clip_id, const Video& video, const ImageView& reference,
                           std::span<const double> reference_dds, const ToyEncoder& enc) {
  MetricReport r;
  r.clip_id = std::move(clip_id);
  std::vector<std::vector<double>> embs;
  for (std::size_t f = 0; f < video.frames; ++f) embs.push_back(enc.encode(video.frame(f)));
  const auto ref = enc.encode(reference);
  for (const auto& e : embs) r.identity_trace.push_back(cosine(e, ref));
  r.identity_similarity = identity_similarity(embs, ref);
  r.temporal_flickering = temporal_flickering(video);
  r.motion_smoothness = motion_smoothness(video);
  r.temporal_consistency = temporal_consistency(embs);
  const std::size_t n = video.frame_size();
  for (std::size_t f = 0; f + 1 < video.frames; ++f) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(video.data[(f + 1) * n + i] - video.data[f * n + i]);
    r.flicker_trace.push_back(1.0 - s / static_cast<double>(n));
    r.consistency_trace.push_back(cosine(embs[f], embs[f + 1]));
  }
  r.dynamic_degree = dynamic_degree(video);
  r.dd_deviation = dd_deviation(r.dynamic_degree, reference_dds);
  return r;
}

std::string report_row(const MetricReport& r) {
  std::ostringstream os;
  os << std::setprecision(9) << r.clip_id << ',' << r.identity_similarity << ',' << r.temporal_flickering << ','
     << r.motion_smoothness << ',' << r.temporal_consistency << ',' << r.dynamic_degree << ',' << r.dd_deviation;
  return os.str();
}

void write_report_csv(const std::filesystem::path& path, const std::vector<MetricReport>& reports) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << kReportHeader << '\n';
  for (const auto& r : reports) out << report_row(r) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace dualreal
