#pragma once

#include <stdexcept>
#include <string>

namespace expert {

// Base of every error thrown by this library. Catch sites that only care
// about "our fault vs. caller's fault" can catch the two branches below.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid or inconsistent configuration. Message names the offending field.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Tensor rank/dimension mismatch detected by an op or module.
class ShapeError : public Error {
public:
  using Error::Error;
};

// A transition hook returned a residual that violates its contract
// (wrong shape, non-finite values, wrong count).
class HookContractError : public Error {
public:
  using Error::Error;
};

// A parameter could not be assigned to the frozen/trainable partition,
// or the partition failed a coverage check.
class PartitionError : public Error {
public:
  using Error::Error;
};

// Malformed file content (tensor files, checkpoints). Carries the byte
// offset at which decoding failed.
class FormatError : public Error {
public:
  FormatError(const std::string& what, std::uint64_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::uint64_t offset;
};

// Invalid runtime input: missing files, bad image data, empty datasets.
class InputError : public Error {
public:
  using Error::Error;
};

}  // namespace expert
