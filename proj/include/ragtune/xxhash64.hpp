#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace ragtune {

/// XXH64 (reference algorithm, little-endian reads).
std::uint64_t xxh64(std::span<const unsigned char> data, std::uint64_t seed) noexcept;

inline std::uint64_t xxh64(std::string_view text, std::uint64_t seed) noexcept {
  return xxh64(std::span<const unsigned char>(
                   reinterpret_cast<const unsigned char*>(text.data()), text.size()),
               seed);
}

/// Streaming XXH64 for large payloads (model matrices, files).
class Xxh64State {
 public:
  explicit Xxh64State(std::uint64_t seed) noexcept;
  void update(std::span<const unsigned char> data) noexcept;
  void update(std::string_view text) noexcept {
    update(std::span<const unsigned char>(
        reinterpret_cast<const unsigned char*>(text.data()), text.size()));
  }
  std::uint64_t digest() const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t acc_[4];
  unsigned char buffer_[32];
  std::size_t buffered_ = 0;
  std::uint64_t total_ = 0;
};

}  // namespace ragtune
