#include "dualreal/video.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace dualreal {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

Video Video::frame_copy(std::size_t f) const {
  Video out(1, height, width, channels);
  const auto v = frame(f).data;
  std::copy(v.begin(), v.end(), out.data.begin());
  return out;
}

Video Video::repeat_first(std::size_t count) const {
  Video out(count, height, width, channels);
  const auto v = frame(0).data;
  for (std::size_t f = 0; f < count; ++f) {
    std::copy(v.begin(), v.end(), out.data.begin() + static_cast<std::ptrdiff_t>(f * frame_size()));
  }
  return out;
}

namespace {

constexpr std::uint32_t kDrvVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& is, const std::filesystem::path& path) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IoError(path.string() + ": truncated header");
  return v;
}

}  // namespace

void write_drv1(const std::filesystem::path& path, const Video& video) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write("DRV1", 4);
  put_u32(os, kDrvVersion);
  put_u32(os, static_cast<std::uint32_t>(video.frames));
  put_u32(os, static_cast<std::uint32_t>(video.height));
  put_u32(os, static_cast<std::uint32_t>(video.width));
  put_u32(os, static_cast<std::uint32_t>(video.channels));
  os.write(reinterpret_cast<const char*>(video.data.data()),
           static_cast<std::streamsize>(video.data.size() * sizeof(double)));
  if (!os) throw IoError("write failed: " + path.string());
}

Video read_drv1(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "DRV1", 4) != 0) {
    throw IoError(path.string() + ": not a DRV1 file");
  }
  const auto version = get_u32(is, path);
  if (version != kDrvVersion) throw IoError(path.string() + ": unsupported DRV1 version " + std::to_string(version));
  const auto f = get_u32(is, path), h = get_u32(is, path), w = get_u32(is, path), c = get_u32(is, path);
  Video v(f, h, w, c);
  if (!is.read(reinterpret_cast<char*>(v.data.data()),
               static_cast<std::streamsize>(v.data.size() * sizeof(double)))) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  return v;
}

void write_ppm(const std::filesystem::path& path, const ImageView& image) {
  if (image.channels != 3) throw IoError("PPM output needs 3 channels");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::string bytes(image.data.size(), '\0');
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    const double v = std::clamp(image.data[i], 0.0, 1.0);
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

Video read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w == 0 || h == 0) throw IoError(path.string() + ": unsupported PPM header");
  is.get();
  std::string bytes(w * h * 3, '\0');
  if (!is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw IoError(path.string() + ": truncated PPM data");
  }
  Video v(1, h, w, 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    v.data[i] = static_cast<double>(static_cast<unsigned char>(bytes[i])) / 255.0;
  }
  return v;
}

}  // namespace dualreal
