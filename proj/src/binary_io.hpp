#pragma once

// Little-endian helpers shared by the model and index file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "ragtune/error.hpp"

namespace ragtune::detail {

template <typename T>
void append_le(std::vector<unsigned char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  static_assert(sizeof(T) == sizeof(U));
  U bits;
  std::memcpy(&bits, &value, sizeof bits);
  for (std::size_t i = 0; i < sizeof bits; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

inline void append_floats_le(std::vector<unsigned char>& out, std::span<const float> values) {
  const std::size_t offset = out.size();
  out.resize(offset + values.size() * 4);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data() + offset, values.data(), values.size() * 4);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, &values[i], 4);
      for (int b = 0; b < 4; ++b) out[offset + 4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
  }
}

class Reader {
 public:
  Reader(std::span<const unsigned char> data, std::string what) : data_(data), what_(std::move(what)) {}

  template <typename T>
  T read() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(data_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    T value;
    std::memcpy(&value, &bits, sizeof value);
    return value;
  }

  std::string read_bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void read_floats(std::span<float> out) {
    need(out.size() * 4);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), data_.data() + pos_, out.size() * 4);
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(data_[pos_ + 4 * i + b]) << (8 * b);
        std::memcpy(&out[i], &bits, 4);
      }
    }
    pos_ += out.size() * 4;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(Errc::CorruptFile, what_, "truncated");
  }

  std::span<const unsigned char> data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const unsigned char> bytes);

}  // namespace ragtune::detail
