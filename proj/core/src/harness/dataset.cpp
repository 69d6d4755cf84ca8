#include "expert/harness/dataset.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "expert/errors.hpp"
#include "expert/ops.hpp"

namespace expert::harness {

Tensor read_image(const std::filesystem::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw InputError("cannot decode image: " + path.string());
  }
  Tensor out({3, bgr.rows, bgr.cols});
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      // BGR byte order -> RGB channel planes.
      out.at(0, y, x) = row[x][2] / 255.0;
      out.at(1, y, x) = row[x][1] / 255.0;
      out.at(2, y, x) = row[x][0] / 255.0;
    }
  }
  return out;
}

Tensor read_mask(const std::filesystem::path& path) {
  const cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) {
    throw InputError("cannot decode mask: " + path.string());
  }
  Tensor out({gray.rows, gray.cols});
  for (int y = 0; y < gray.rows; ++y) {
    const auto* row = gray.ptr<unsigned char>(y);
    for (int x = 0; x < gray.cols; ++x) {
      out[y * static_cast<std::int64_t>(gray.cols) + x] = row[x] >= 128 ? 1.0 : 0.0;
    }
  }
  return out;
}

void write_mask(const std::filesystem::path& path, const Tensor& probabilities) {
  if (probabilities.rank() != 2) {
    throw InputError("write_mask expects a rank-2 probability map, got " +
                     probabilities.shape_str());
  }
  const auto h = static_cast<int>(probabilities.dim(0));
  const auto w = static_cast<int>(probabilities.dim(1));
  cv::Mat gray(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y) {
    auto* row = gray.ptr<unsigned char>(y);
    for (int x = 0; x < w; ++x) {
      const double p = probabilities[y * static_cast<std::int64_t>(w) + x];
      const long v = std::lround(std::clamp(p, 0.0, 1.0) * 255.0);
      row[x] = static_cast<unsigned char>(v);
    }
  }
  if (!cv::imwrite(path.string(), gray)) {
    throw InputError("cannot write mask: " + path.string());
  }
}

DatasetIndex DatasetIndex::scan(const std::filesystem::path& root, bool skip_undecodable) {
  namespace fs = std::filesystem;
  const fs::path images_dir = root / "images";
  const fs::path masks_dir = root / "masks";
  if (!fs::is_directory(images_dir)) {
    throw InputError("dataset has no images directory: " + images_dir.string());
  }
  if (!fs::is_directory(masks_dir)) {
    throw InputError("dataset has no masks directory: " + masks_dir.string());
  }
  static const std::set<std::string> image_exts = {".png", ".jpg", ".jpeg", ".bmp"};

  DatasetIndex index;
  index.root = root;
  for (const auto& entry : fs::directory_iterator(images_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (!image_exts.count(ext)) continue;
    const std::string id = entry.path().stem().string();
    const fs::path mask = masks_dir / (id + ".png");
    if (!fs::exists(mask)) {
      if (skip_undecodable) continue;
      throw InputError("image '" + id + "' has no mask at " + mask.string());
    }
    index.entries.push_back(DatasetEntry{id, entry.path(), mask});
  }
  if (index.entries.empty()) {
    throw InputError("dataset is empty: " + root.string());
  }
  std::sort(index.entries.begin(), index.entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) { return a.id < b.id; });
  return index;
}

Sample load_sample(const DatasetEntry& entry, int resolution) {
  Sample s;
  s.id = entry.id;
  const Tensor image = read_image(entry.image_path);
  s.image = ops::bilinear_resize_value(image, resolution, resolution);
  const Tensor mask = read_mask(entry.mask_path);
  const Tensor resized =
      ops::bilinear_resize_value(mask.reshaped({1, mask.dim(0), mask.dim(1)}), resolution,
                                 resolution);
  Tensor bin({resolution, resolution});
  for (std::int64_t i = 0; i < bin.numel(); ++i) bin[i] = resized[i] >= 0.5 ? 1.0 : 0.0;
  s.mask = std::move(bin);
  return s;
}

}  // namespace expert::harness
