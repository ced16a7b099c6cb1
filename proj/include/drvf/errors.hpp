#pragma once

#include <stdexcept>
#include <string>

namespace drvf {

// Dimension or shape disagreement between operands.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values, singular matrices and similar numeric failures.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (out-of-range hyper-parameters, unknown ids).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse: stale caches, too few samples for a statistic.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Corrupt or truncated files.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace drvf
