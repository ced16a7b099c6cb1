#pragma once

// Shared container layout for parameter and dataset files:
//
//   offset 0   8 bytes  ASCII magic
//   offset 8   8 bytes  header length H, unsigned little-endian
//   offset 16  H bytes  UTF-8 JSON header
//   offset 16+H         payload of little-endian IEEE-754 binary64 values
//
// The header says how many values follow; trailing bytes are an error.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace drvf::io {

using nlohmann::json;

class Writer {
 public:
  Writer(std::string_view magic, const json& header);

  void put(double v);
  void put(std::span<const double> v);

  const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(std::vector<std::uint8_t> bytes, std::string_view magic);
  static Reader open(const std::filesystem::path& path, std::string_view magic);

  const json& header() const noexcept { return header_; }
  // Throws FormatError when fewer than `count` values remain.
  std::vector<double> take(std::size_t count);
  double take_one();
  // Throws FormatError if unread payload bytes remain.
  void finish() const;
  std::size_t offset() const noexcept { return pos_; }

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  json header_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace drvf::io
