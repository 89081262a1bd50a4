#pragma once

#include <filesystem>
#include <iosfwd>

#include "scunetpp/tensor.hpp"

namespace scunet {

// Binary tensor records: magic "TSR1", u8 dtype (0 = f32, 1 = f64), u8 rank,
// rank x u32 little-endian extents, then the row-major payload little-endian.
enum class Tsr1Dtype : uint8_t { F32 = 0, F64 = 1 };

void write_tsr1(std::ostream& os, const Tensor& t, Tsr1Dtype dtype);
Tensor read_tsr1(std::istream& is, Tsr1Dtype* dtype_out = nullptr);

void save_tsr1(const std::filesystem::path& path, const Tensor& t, Tsr1Dtype dtype);
Tensor load_tsr1(const std::filesystem::path& path, Tsr1Dtype* dtype_out = nullptr);

}  // namespace scunet
