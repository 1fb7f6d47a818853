#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mcwes/tensor.hpp"

namespace mcwes::checkpoint {

/// Binary parameter snapshot. Layout: magic "MCWC", version u32, count u32,
/// then per parameter: name length u16, name bytes, rank u32, dims u32 each,
/// payload f64 little-endian.
inline constexpr uint32_t kVersion = 1;

void save(const std::string& path,
          const std::vector<std::pair<std::string, Tensor>>& params);

/// Throws DataError on missing file, bad magic, unsupported version or a
/// truncated / oversized payload.
std::vector<std::pair<std::string, Tensor>> load(const std::string& path);

}  // namespace mcwes::checkpoint
