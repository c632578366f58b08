#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace evalkit {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// Raised for malformed or inconsistent configuration and input files.
class ConfigError : public std::runtime_error {
 public:
  enum class Kind {
    Syntax,
    UnknownKey,
    TypeMismatch,
    MissingField,
    Invalid,
    DuplicateAbbr,
    MissingDataset,
    CapabilityMismatch,
    Io,
  };

  ConfigError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Raised while executing a task. Retryable errors are transient (transport,
// non-2xx, malformed bodies); permanent ones will fail again on retry.
class TaskError : public std::runtime_error {
 public:
  TaskError(const std::string& what, bool retryable)
      : std::runtime_error(what), retryable_(retryable) {}

  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

// FNV-1a, 64 bit. Stable across processes and platforms.
class Fnv1a64 {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  Fnv1a64& update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= kPrime;
    }
    return *this;
  }

  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = kOffset;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string to_hex(std::uint64_t value);

std::string read_file(const fs::path& path);

// Writes the whole file, flushes and fsyncs it before returning.
void write_file_durably(const fs::path& path, std::string_view content);

std::vector<std::string> split_whitespace(std::string_view text);
std::string trim(std::string_view text);

// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace evalkit
