#pragma once

// Little-endian primitive readers/writers shared by the dataset and model
// file formats. Readers track their byte offset so format errors can point
// at the failing position.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rbs/error.hpp"

namespace rbs::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts are not supported");

class ByteWriter {
public:
  void bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buffer_.insert(buffer_.end(), p, p + size);
  }
  void text(std::string_view s) { bytes(s.data(), s.size()); }
  void u16(std::uint16_t v) { bytes(&v, sizeof v); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void f64s(std::span<const double> v) { bytes(v.data(), v.size_bytes()); }

  std::size_t size() const noexcept { return buffer_.size(); }
  std::vector<std::uint8_t>& buffer() noexcept { return buffer_; }
  const std::vector<std::uint8_t>& buffer() const noexcept { return buffer_; }

private:
  std::vector<std::uint8_t> buffer_;
};

class ByteReader {
public:
  ByteReader(std::span<const std::uint8_t> data, std::size_t base_offset = 0)
      : data_(data), base_(base_offset) {}

  void bytes(void* out, std::size_t size, std::string_view what) {
    require(size, what);
    std::memcpy(out, data_.data() + pos_, size);
    pos_ += size;
  }
  std::string text(std::size_t size, std::string_view what) {
    std::string s(size, '\0');
    bytes(s.data(), size, what);
    return s;
  }
  std::uint16_t u16(std::string_view what) { return scalar<std::uint16_t>(what); }
  std::uint32_t u32(std::string_view what) { return scalar<std::uint32_t>(what); }
  std::uint64_t u64(std::string_view what) { return scalar<std::uint64_t>(what); }
  double f64(std::string_view what) { return scalar<double>(what); }
  void f64s(std::span<double> out, std::string_view what) {
    bytes(out.data(), out.size_bytes(), what);
  }

  std::size_t offset() const noexcept { return base_ + pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
  template <class T>
  T scalar(std::string_view what) {
    T v;
    bytes(&v, sizeof v, what);
    return v;
  }
  void require(std::size_t size, std::string_view what) const {
    if (size > data_.size() - pos_) {
      throw FormatError("truncated file: expected " + std::to_string(size) + " bytes of " +
                            std::string(what) + ", " + std::to_string(data_.size() - pos_) +
                            " available",
                        offset());
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> data);

}  // namespace rbs::io
