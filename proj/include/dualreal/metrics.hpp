#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualreal/video.hpp"

namespace dualreal {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Hand-crafted, deterministic image embedding used both as the reference-image
/// condition and as the feature extractor for the similarity metrics.
///
/// Raw features, in order: 3 x 8-bin colour histograms (fractions of pixels),
/// 7 scale-normalised central moments of luminance mass (orders 2 and 3), and a
/// 4 x 4 block-mean luminance grid. Each feature is z-scored with frozen constants
/// and the vector is truncated (or zero-padded) to `dim`.
class ToyEncoder {
 public:
  static constexpr std::size_t raw_dim = 24 + 7 + 16;
  static constexpr std::size_t default_dim = 32;

  explicit ToyEncoder(std::size_t dim = default_dim) : dim_(dim) {}
  std::size_t dim() const { return dim_; }

  /// Un-normalised feature vector of length raw_dim.
  static std::vector<double> raw_features(const ImageView& image);
  std::vector<double> encode(const ImageView& image) const;
  std::vector<double> encode(const Video& single_image) const { return encode(single_image.image()); }

 private:
  std::size_t dim_;
};

/// Cosine similarity; throws MetricError when either vector has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);

double identity_similarity(const Video& video, const ImageView& reference, const ToyEncoder& enc = ToyEncoder());
/// Same metric on precomputed embeddings (one per frame).
double identity_similarity(const std::vector<std::vector<double>>& frame_embeddings,
                           std::span<const double> reference_embedding);

double temporal_flickering(const Video& video);
double motion_smoothness(const Video& video);
double temporal_consistency(const Video& video, const ToyEncoder& enc = ToyEncoder());
double temporal_consistency(const std::vector<std::vector<double>>& frame_embeddings);

/// Block-matching displacement field between two frames: one (dy, dx) per 8x8 block.
struct BlockFlow {
  std::vector<int> dy;
  std::vector<int> dx;
};

inline constexpr std::size_t kFlowBlock = 8;
inline constexpr int kFlowRadius = 4;

BlockFlow block_flow(const ImageView& from, const ImageView& to);
double dynamic_degree(const Video& video);
double dd_deviation(const Video& video, const std::vector<Video>& references);
/// |dd - mean(reference_dds)|, for callers that cache the reference values.
double dd_deviation(double dd, std::span<const double> reference_dds);

struct MetricReport {
  std::string clip_id;
  double identity_similarity = 0.0;
  double temporal_flickering = 0.0;
  double motion_smoothness = 0.0;
  double temporal_consistency = 0.0;
  double dynamic_degree = 0.0;
  double dd_deviation = 0.0;
  std::vector<double> identity_trace;   // per frame
  std::vector<double> flicker_trace;    // per adjacent pair
  std::vector<double> consistency_trace;
};

MetricReport evaluate_clip(std::string clip_id, const Video& video, const ImageView& reference,
                           std::span<const double> reference_dds, const ToyEncoder& enc = ToyEncoder());

inline constexpr const char* kReportHeader =
    "clip_id,identity_sim,t_flicker,motion_smooth,t_cons,dynamic_degree,dd_deviation";

std::string report_row(const MetricReport& r);
void write_report_csv(const std::filesystem::path& path, const std::vector<MetricReport>& reports);

}  // namespace dualreal
