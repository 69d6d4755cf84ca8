#include "expert/harness/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "expert/errors.hpp"
#include "expert/harness/run_config_json.hpp"

namespace expert::harness {

namespace {

constexpr char kMagic[8] = {'X', 'P', 'R', 'T', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw InputError("cannot open checkpoint for writing: " + path.string());
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) u32(static_cast<std::uint32_t>(t.dim(i)));
    bytes(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double));
  }
  bool ok() const { return static_cast<bool>(out_); }

private:
  std::ofstream out_;
};

class Reader {
public:
  explicit Reader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint: " + path_);
    data_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  void bytes(void* p, std::size_t n) {
    if (offset_ + n > data_.size()) {
      throw FormatError(path_ + ": truncated checkpoint", offset_);
    }
    std::memcpy(p, data_.data() + offset_, n);
    offset_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Tensor tensor() {
    const std::uint32_t rank = u32();
    if (rank > 8) throw FormatError(path_ + ": tensor rank " + std::to_string(rank), offset_ - 4);
    std::vector<std::int64_t> shape;
    std::int64_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t d = u32();
      if (d == 0) throw FormatError(path_ + ": zero tensor dimension", offset_ - 4);
      shape.push_back(d);
      numel *= d;
    }
    Tensor t(std::move(shape));
    bytes(t.data(), static_cast<std::size_t>(numel) * sizeof(double));
    return t;
  }
  std::size_t offset() const { return offset_; }
  bool exhausted() const { return offset_ == data_.size(); }

private:
  std::string path_;
  std::vector<unsigned char> data_;
  std::size_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w(path);
  w.bytes(kMagic, 8);
  w.u32(kVersion);
  w.u64(static_cast<std::uint64_t>(ckpt.step));
  w.str(serialize_run_config(ckpt.config));
  w.u32(static_cast<std::uint32_t>(ckpt.trainable.size()));
  for (const auto& [name, tensor] : ckpt.trainable) {
    w.str(name);
    w.tensor(tensor);
  }
  w.u32(ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    w.u64(static_cast<std::uint64_t>(ckpt.adam_step));
    w.u32(static_cast<std::uint32_t>(ckpt.optimizer.size()));
    for (const auto& [name, slot] : ckpt.optimizer) {
      w.str(name);
      w.tensor(slot.m);
      w.tensor(slot.v);
    }
  }
  if (!w.ok()) {
    throw InputError("failed writing checkpoint: " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError(path.string() + ": bad checkpoint magic", 0);
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " +
                          std::to_string(version),
                      8);
  }
  Checkpoint ckpt;
  ckpt.step = static_cast<std::int64_t>(r.u64());
  ckpt.config = parse_run_config(r.str());
  const std::uint32_t n_params = r.u32();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    ckpt.trainable.emplace(std::move(name), r.tensor());
  }
  ckpt.has_optimizer = r.u32() != 0;
  if (ckpt.has_optimizer) {
    ckpt.adam_step = static_cast<std::int64_t>(r.u64());
    const std::uint32_t n_slots = r.u32();
    for (std::uint32_t i = 0; i < n_slots; ++i) {
      std::string name = r.str();
      Tensor m = r.tensor();
      Tensor v = r.tensor();
      ckpt.optimizer.emplace(std::move(name), AdamW::Slot{std::move(m), std::move(v)});
    }
  }
  if (!r.exhausted()) {
    throw FormatError(path.string() + ": trailing bytes after checkpoint payload", r.offset());
  }
  return ckpt;
}

}  // namespace expert::harness
