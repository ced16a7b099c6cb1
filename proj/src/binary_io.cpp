#include "drvf/binary_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "drvf/errors.hpp"

namespace drvf::io {
namespace {

constexpr std::size_t kMagicLen = 8;
constexpr std::size_t kPreamble = 16;

void put_u64(std::vector<std::uint8_t>& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

Writer::Writer(std::string_view magic, const json& header) {
  if (magic.size() != kMagicLen) throw UsageError("io::Writer: magic must be 8 bytes");
  buf_.assign(magic.begin(), magic.end());
  const std::string text = header.dump();
  put_u64(buf_, text.size());
  buf_.insert(buf_.end(), text.begin(), text.end());
}

void Writer::put(double v) { put_u64(buf_, std::bit_cast<std::uint64_t>(v)); }

void Writer::put(std::span<const double> v) {
  buf_.reserve(buf_.size() + 8 * v.size());
  for (double x : v) put(x);
}

void Writer::save(const std::filesystem::path& path) const { write_file(path, buf_); }

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Reader::Reader(std::vector<std::uint8_t> bytes, std::string_view magic)
    : buf_(std::move(bytes)) {
  if (buf_.size() < kPreamble) throw FormatError("file shorter than preamble", buf_.size());
  if (!std::equal(magic.begin(), magic.end(), buf_.begin())) {
    throw FormatError("bad magic, expected " + std::string(magic), 0);
  }
  const std::uint64_t hlen = get_u64(buf_.data() + kMagicLen);
  if (hlen > buf_.size() - kPreamble) {
    throw FormatError("header length " + std::to_string(hlen) + " exceeds file size",
                      kMagicLen);
  }
  const auto* begin = reinterpret_cast<const char*>(buf_.data() + kPreamble);
  header_ = json::parse(begin, begin + hlen, nullptr, false);
  if (header_.is_discarded() || !header_.is_object()) {
    throw FormatError("header is not a JSON object", kPreamble);
  }
  pos_ = kPreamble + hlen;
}

Reader Reader::open(const std::filesystem::path& path, std::string_view magic) {
  return Reader(read_file(path), magic);
}

std::vector<double> Reader::take(std::size_t count) {
  if (count > (buf_.size() - pos_) / 8) {
    throw FormatError("truncated payload: need " + std::to_string(count) + " values, " +
                          std::to_string((buf_.size() - pos_) / 8) + " remain",
                      pos_);
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::bit_cast<double>(get_u64(buf_.data() + pos_));
    pos_ += 8;
  }
  return out;
}

double Reader::take_one() { return take(1).front(); }

void Reader::finish() const {
  if (pos_ != buf_.size()) {
    throw FormatError(std::to_string(buf_.size() - pos_) + " trailing bytes after payload",
                      pos_);
  }
}

}  // namespace drvf::io
