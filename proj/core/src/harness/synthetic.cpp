#include "expert/harness/synthetic.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <string>

#include "expert/errors.hpp"
#include "expert/rng.hpp"

namespace expert::harness {

void write_blob_dataset(const std::filesystem::path& dir, int n, int resolution,
                        std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (n <= 0) throw InputError("blob dataset needs n > 0");
  if (resolution < 8) throw InputError("blob dataset needs resolution >= 8");
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");

  const double r = resolution;
  for (int i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "blob_%03d", i);
    Rng rng(seed, std::string("blob/") + id);

    const double cx = r * (0.25 + 0.5 * rng.uniform());
    const double cy = r * (0.25 + 0.5 * rng.uniform());
    const double ax = r * (0.10 + 0.15 * rng.uniform());
    const double ay = r * (0.10 + 0.15 * rng.uniform());
    const double theta = 2.0 * M_PI * rng.uniform();
    const double ct = std::cos(theta), st = std::sin(theta);

    // Blob and background colors kept well apart so the task is learnable
    // at desk scale.
    const double fg[3] = {0.70 + 0.25 * rng.uniform(), 0.70 + 0.25 * rng.uniform(),
                          0.55 + 0.25 * rng.uniform()};
    const double bg[3] = {0.05 + 0.15 * rng.uniform(), 0.05 + 0.15 * rng.uniform(),
                          0.10 + 0.15 * rng.uniform()};

    cv::Mat image(resolution, resolution, CV_8UC3);
    cv::Mat mask(resolution, resolution, CV_8UC1);
    for (int y = 0; y < resolution; ++y) {
      auto* img_row = image.ptr<cv::Vec3b>(y);
      auto* mask_row = mask.ptr<unsigned char>(y);
      for (int x = 0; x < resolution; ++x) {
        const double dx = (x + 0.5) - cx;
        const double dy = (y + 0.5) - cy;
        const double u = (ct * dx + st * dy) / ax;
        const double v = (-st * dx + ct * dy) / ay;
        const bool inside = u * u + v * v <= 1.0;
        mask_row[x] = inside ? 255 : 0;
        for (int c = 0; c < 3; ++c) {
          const double base = inside ? fg[c] : bg[c];
          const double noisy = std::clamp(base + 0.04 * rng.normal(), 0.0, 1.0);
          // RGB channel -> BGR byte order.
          img_row[x][2 - c] = static_cast<unsigned char>(std::lround(noisy * 255.0));
        }
      }
    }
    const fs::path image_path = dir / "images" / (std::string(id) + ".png");
    const fs::path mask_path = dir / "masks" / (std::string(id) + ".png");
    if (!cv::imwrite(image_path.string(), image)) {
      throw InputError("cannot write image: " + image_path.string());
    }
    if (!cv::imwrite(mask_path.string(), mask)) {
      throw InputError("cannot write mask: " + mask_path.string());
    }
  }
}

}  // namespace expert::harness
