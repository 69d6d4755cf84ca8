#pragma once

#include <cstdint>
#include <filesystem>

namespace expert::harness {

// Writes a self-contained corpus of n image/mask pairs under
// <dir>/images and <dir>/masks: each image is a bright elliptical blob on
// a darker textured background, the mask is the blob's exact support.
// Deterministic in (n, resolution, seed).
void write_blob_dataset(const std::filesystem::path& dir, int n, int resolution,
                        std::uint64_t seed);

}  // namespace expert::harness
