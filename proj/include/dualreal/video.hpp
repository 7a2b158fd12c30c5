#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace dualreal {

/// Read-only view of one H x W x C frame, row-major, channel fastest.
struct ImageView {
  std::span<const double> data;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * width + x) * channels + c];
  }
};

/// F x H x W x C clip with values nominally in [0, 1].
struct Video {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  Video() = default;
  Video(std::size_t f, std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : frames(f), height(h), width(w), channels(c), data(f * h * w * c, fill) {}

  std::size_t frame_size() const { return height * width * channels; }
  double& at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) {
    return data[((f * height + y) * width + x) * channels + c];
  }
  double at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) const {
    return data[((f * height + y) * width + x) * channels + c];
  }
  ImageView frame(std::size_t f) const {
    return {std::span<const double>(data).subspan(f * frame_size(), frame_size()), height, width,
            channels};
  }
  /// Single-frame copy of frame f.
  Video frame_copy(std::size_t f) const;
  /// Clip of `count` copies of this clip's first frame.
  Video repeat_first(std::size_t count) const;
  ImageView image() const { return frame(0); }
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "DRV1" container: magic, u32 version, u32 F, H, W, C, then f64 little-endian values.
void write_drv1(const std::filesystem::path& path, const Video& video);
Video read_drv1(const std::filesystem::path& path);

/// Binary 8-bit PPM (P6). Values are clamped to [0, 1] and rounded to the nearest level.
void write_ppm(const std::filesystem::path& path, const ImageView& image);
Video read_ppm(const std::filesystem::path& path);

}  // namespace dualreal
