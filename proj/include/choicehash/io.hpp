#pragma once

// Little-endian byte streams for the structure file formats.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace choicehash {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void words(std::span<const std::uint64_t> ws) {
    for (auto w : ws) u64(w);
  }
  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  std::string str() const { return {bytes_.begin(), bytes_.end()}; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  void expect_magic(std::string_view tag) {
    need(tag.size());
    if (data_.substr(pos_, tag.size()) != tag) {
      throw FormatError("bad magic, expected '" + std::string(tag) + "'");
    }
    pos_ += tag.size();
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::vector<std::uint64_t> words(std::size_t count) {
    need(count * 8);
    std::vector<std::uint64_t> out(count);
    for (auto& w : out) w = get(8);
    return out;
  }
  bool at_end() const noexcept { return pos_ == data_.size(); }
  void expect_end() const {
    if (!at_end()) throw FormatError("trailing bytes after structure");
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("truncated structure file");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

/// Bit stream packed LSB-first into 64-bit words.
class BitPacker {
 public:
  void push(std::uint64_t value, std::uint32_t bits) {
    for (std::uint32_t b = 0; b < bits; ++b) {
      if (count_ % 64 == 0) words_.push_back(0);
      if ((value >> b) & 1ULL) words_.back() |= 1ULL << (count_ % 64);
      ++count_;
    }
  }
  const std::vector<std::uint64_t>& words() const noexcept { return words_; }

 private:
  std::vector<std::uint64_t> words_;
  std::uint64_t count_ = 0;
};

inline std::uint64_t read_bits(std::span<const std::uint64_t> words, std::uint64_t pos, std::uint32_t bits) {
  std::uint64_t v = 0;
  for (std::uint32_t b = 0; b < bits; ++b, ++pos) {
    v |= ((words[pos / 64] >> (pos % 64)) & 1ULL) << b;
  }
  return v;
}

}  // namespace choicehash
