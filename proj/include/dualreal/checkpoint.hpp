#pragma once

#include <filesystem>
#include <functional>

#include "dualreal/params.hpp"

namespace dualreal {

/// "DRCK" container: magic, u32 version, then per parameter
/// u32 name length, name bytes, u8 tag, u32 rank, u64 extents, f64 little-endian data.
void save_checkpoint(const std::filesystem::path& path, const ParamRegistry& registry);

/// Overwrites the values of `registry` in place. Every stored entry must exist with the
/// same shape and tag, and every registry entry must be present in the file.
void load_checkpoint(const std::filesystem::path& path, ParamRegistry& registry);

/// Same, restricted to entries whose tag satisfies `filter`; other file entries are skipped.
void load_checkpoint(const std::filesystem::path& path, ParamRegistry& registry, const std::function<bool(Tag)>& filter);

}  // namespace dualreal
