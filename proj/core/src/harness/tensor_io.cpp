#include "expert/harness/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "expert/errors.hpp"

namespace expert::harness {

namespace {

constexpr char kMagic[4] = {'T', 'E', 'N', '1'};

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open tensor file: " + path.string());
  }
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

Tensor read_tensor(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad tensor magic", 0);
  }
  if (bytes.size() < 5) {
    throw FormatError(path.string() + ": truncated before ndim", 4);
  }
  const unsigned ndim = bytes[4];
  if (ndim < 1 || ndim > 8) {
    throw FormatError(path.string() + ": ndim " + std::to_string(ndim) + " out of range [1,8]", 4);
  }
  std::size_t offset = 5;
  std::vector<std::int64_t> shape;
  std::int64_t numel = 1;
  for (unsigned i = 0; i < ndim; ++i) {
    if (bytes.size() < offset + 4) {
      throw FormatError(path.string() + ": truncated inside dims", offset);
    }
    const std::uint32_t d = read_u32_le(bytes.data() + offset);
    if (d == 0) {
      throw FormatError(path.string() + ": zero dimension", offset);
    }
    shape.push_back(static_cast<std::int64_t>(d));
    numel *= d;
    offset += 4;
  }
  const std::size_t payload = static_cast<std::size_t>(numel) * 4;
  if (bytes.size() != offset + payload) {
    throw FormatError(path.string() + ": payload size " + std::to_string(bytes.size() - offset) +
                          " does not match shape (expected " + std::to_string(payload) + " bytes)",
                      offset);
  }
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < numel; ++i) {
    float f;
    std::memcpy(&f, bytes.data() + offset + static_cast<std::size_t>(i) * 4, 4);
    t[i] = static_cast<double>(f);
  }
  return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  if (tensor.rank() < 1 || tensor.rank() > 8) {
    throw InputError("tensor files require rank 1..8, got " + tensor.shape_str());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw InputError("cannot open tensor file for writing: " + path.string());
  }
  out.write(kMagic, 4);
  const unsigned char ndim = static_cast<unsigned char>(tensor.rank());
  out.put(static_cast<char>(ndim));
  for (int i = 0; i < tensor.rank(); ++i) {
    const auto d = static_cast<std::uint32_t>(tensor.dim(i));
    unsigned char le[4] = {static_cast<unsigned char>(d & 0xff),
                           static_cast<unsigned char>((d >> 8) & 0xff),
                           static_cast<unsigned char>((d >> 16) & 0xff),
                           static_cast<unsigned char>((d >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(le), 4);
  }
  for (std::int64_t i = 0; i < tensor.numel(); ++i) {
    const float f = static_cast<float>(tensor[i]);
    static_assert(sizeof(float) == 4);
    char buf[4];
    std::memcpy(buf, &f, 4);
    out.write(buf, 4);
  }
  if (!out) {
    throw InputError("failed writing tensor file: " + path.string());
  }
}

}  // namespace expert::harness
