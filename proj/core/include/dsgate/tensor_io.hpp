#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dsgate/tensor.hpp"

namespace dsgate {

// "DST1" container: 4-byte magic, 1 dtype byte (0x01 = 32-bit real,
// 0x02 = 64-bit real), four little-endian uint32 extents (B,C,H,W), then
// B*C*H*W little-endian reals in row-major order. No padding, no checksum.
enum class DType : unsigned char { f32 = 0x01, f64 = 0x02 };

void save_tensor(const Tensor4& x, const std::filesystem::path& path, DType dtype = DType::f64);
Tensor4 load_tensor(const std::filesystem::path& path);

// Named parameter bundles: a directory of DST1 files plus a UTF-8 manifest
// ("manifest.txt", one `name=relative-path` line per tensor, fixed order).
using NamedTensors = std::vector<std::pair<std::string, Tensor4>>;

void save_bundle(const std::filesystem::path& dir,
                 const std::vector<std::pair<std::string, const Tensor4*>>& params);
NamedTensors load_bundle(const std::filesystem::path& dir);

}  // namespace dsgate
