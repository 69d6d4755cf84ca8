#pragma once

#include <filesystem>

#include "expert/tensor.hpp"

namespace expert::harness {

// Binary tensor files exchanged with external feature extractors:
//
//   bytes 0..3   magic "TEN1"
//   byte  4      ndim (u8, 1..8)
//   next  4*ndim dims (u32, little-endian)
//   rest         row-major float32 payload, little-endian
//
// Values widen to double on read and narrow to float32 on write.
// Malformed content throws FormatError carrying the failing byte offset.
Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);

}  // namespace expert::harness
