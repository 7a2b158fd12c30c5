#include "dualreal/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "dualreal/video.hpp"

namespace dualreal {

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

constexpr char kMagic[4] = {'D', 'R', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError(path.string() + ": truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamRegistry& registry) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(kMagic, 4);
  put(os, kVersion);
  for (const auto& e : registry.entries()) {
    put(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put(os, static_cast<std::uint8_t>(e.tag));
    put(os, static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) put(os, static_cast<std::uint64_t>(d));
    const auto data = e.tensor.data();
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, ParamRegistry& registry,
                     const std::function<bool(Tag)>& filter) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path.string() + ": not a DRCK file");
  const auto version = get<std::uint32_t>(is, path);
  if (version != kVersion) throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));

  std::set<std::string> seen;
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto len = get<std::uint32_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw IoError(path.string() + ": truncated checkpoint");
    const auto tag = tag_from_byte(get<std::uint8_t>(is, path));
    if (!tag) throw IoError(path.string() + ": invalid tag for '" + name + "'");
    const auto rank = get<std::uint32_t>(is, path);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(is, path));
    std::vector<double> data(shape_numel(shape));
    if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
      throw IoError(path.string() + ": truncated checkpoint");
    }
    if (!filter(*tag)) continue;
    if (!registry.contains(name)) throw IoError(path.string() + ": unknown parameter '" + name + "'");
    const auto& entry = registry.entry(name);
    if (entry.tag != *tag) throw IoError(path.string() + ": tag mismatch for '" + name + "'");
    if (entry.tensor.shape() != shape) {
      throw IoError(path.string() + ": shape mismatch for '" + name + "': file " + to_string(shape) + ", model " +
                    to_string(entry.tensor.shape()));
    }
    Tensor leaf = entry.tensor;
    std::copy(data.begin(), data.end(), leaf.mutable_data().begin());
    seen.insert(name);
  }
  for (const auto& e : registry.entries()) {
    if (filter(e.tag) && !seen.count(e.name)) throw IoError(path.string() + ": missing parameter '" + e.name + "'");
  }
}

void load_checkpoint(const std::filesystem::path& path, ParamRegistry& registry) {
  load_checkpoint(path, registry, [](Tag) { return true; });
}

}  // namespace dualreal
