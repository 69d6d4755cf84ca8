#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "expert/tensor.hpp"

namespace expert::harness {

// Image/mask reading and writing (PNG/JPEG via OpenCV imgcodecs).
// Images load as (3, H, W) RGB in [0, 1]; masks load as (H, W) binarized
// at 128 (pixel >= 128 -> 1). write_mask rounds prob*255 half away from
// zero to 8-bit grayscale.
Tensor read_image(const std::filesystem::path& path);
Tensor read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Tensor& probabilities);

struct DatasetEntry {
  std::string id;
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
};

// Index of a dataset laid out as <root>/images/<id>.<ext> and
// <root>/masks/<id>.png, sorted by id for deterministic iteration.
// A missing mask for an image raises InputError unless skip_undecodable.
struct DatasetIndex {
  std::filesystem::path root;
  std::vector<DatasetEntry> entries;

  static DatasetIndex scan(const std::filesystem::path& root, bool skip_undecodable = false);
  std::size_t size() const { return entries.size(); }
};

struct Sample {
  std::string id;
  Tensor image;  // (3, R, R) in [0, 1]
  Tensor mask;   // (R, R) binary
};

// Loads and bilinearly resizes an entry to the given square resolution;
// the mask is re-binarized at 0.5 after resizing.
Sample load_sample(const DatasetEntry& entry, int resolution);

}  // namespace expert::harness
