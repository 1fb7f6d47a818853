#include "mcwes/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "mcwes/errors.hpp"
#include "mcwes/wire.hpp"

namespace mcwes::checkpoint {

void save(const std::string& path,
          const std::vector<std::pair<std::string, Tensor>>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot open for writing: " + path);
  os.write("MCWC", 4);
  wire::put_u32(os, kVersion);
  wire::put_u32(os, static_cast<uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    if (name.size() > 0xffff) throw DataError("checkpoint: parameter name too long");
    wire::put_u16(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    wire::put_u32(os, static_cast<uint32_t>(tensor.rank()));
    for (int i = 0; i < tensor.rank(); ++i)
      wire::put_u32(os, static_cast<uint32_t>(tensor.dim(i)));
    for (double v : tensor.data()) wire::put_f64(os, v);
  }
  if (!os) throw DataError("checkpoint: write failed: " + path);
}

std::vector<std::pair<std::string, Tensor>> load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "MCWC", 4) != 0)
    throw DataError("checkpoint: bad magic: " + path);
  const uint32_t version = wire::get_u32(is, "checkpoint");
  if (version != kVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const uint32_t count = wire::get_u32(is, "checkpoint");
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = wire::get_u16(is, "checkpoint");
    std::string name(name_len, '\0');
    if (name_len > 0 && !is.read(name.data(), name_len))
      throw DataError("checkpoint: truncated file");
    const uint32_t rank = wire::get_u32(is, "checkpoint");
    if (rank > 8) throw DataError("checkpoint: implausible rank");
    std::vector<int> shape;
    int64_t n = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      const uint32_t d = wire::get_u32(is, "checkpoint");
      if (d == 0 || d > (1u << 24)) throw DataError("checkpoint: implausible dimension");
      shape.push_back(static_cast<int>(d));
      n *= d;
    }
    std::vector<double> data(static_cast<size_t>(n));
    for (double& v : data) v = wire::get_f64(is, "checkpoint");
    out.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
  }
  // Nothing may trail the last record.
  is.peek();
  if (!is.eof()) throw DataError("checkpoint: trailing bytes: " + path);
  return out;
}

}  // namespace mcwes::checkpoint
