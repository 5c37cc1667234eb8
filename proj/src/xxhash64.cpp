#include "ragtune/xxhash64.hpp"

#include <bit>
#include <cstring>

namespace ragtune {

namespace {

constexpr std::uint64_t kPrime1 = 0x9E3779B185EBCA87ULL;
constexpr std::uint64_t kPrime2 = 0xC2B2AE3D27D4EB4FULL;
constexpr std::uint64_t kPrime3 = 0x165667B19E3779F9ULL;
constexpr std::uint64_t kPrime4 = 0x85EBCA77C2B2AE63ULL;
constexpr std::uint64_t kPrime5 = 0x27D4EB2F165667C5ULL;

std::uint64_t read64(const unsigned char* p) noexcept {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint32_t read32(const unsigned char* p) noexcept {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t round(std::uint64_t acc, std::uint64_t input) noexcept {
  acc += input * kPrime2;
  acc = std::rotl(acc, 31);
  return acc * kPrime1;
}

std::uint64_t merge_round(std::uint64_t acc, std::uint64_t val) noexcept {
  acc ^= round(0, val);
  return acc * kPrime1 + kPrime4;
}

std::uint64_t finalize(std::uint64_t h, const unsigned char* p, std::size_t len) noexcept {
  while (len >= 8) {
    h ^= round(0, read64(p));
    h = std::rotl(h, 27) * kPrime1 + kPrime4;
    p += 8;
    len -= 8;
  }
  if (len >= 4) {
    h ^= static_cast<std::uint64_t>(read32(p)) * kPrime1;
    h = std::rotl(h, 23) * kPrime2 + kPrime3;
    p += 4;
    len -= 4;
  }
  while (len > 0) {
    h ^= static_cast<std::uint64_t>(*p) * kPrime5;
    h = std::rotl(h, 11) * kPrime1;
    ++p;
    --len;
  }
  h ^= h >> 33;
  h *= kPrime2;
  h ^= h >> 29;
  h *= kPrime3;
  h ^= h >> 32;
  return h;
}

std::uint64_t converge(const std::uint64_t acc[4]) noexcept {
  std::uint64_t h = std::rotl(acc[0], 1) + std::rotl(acc[1], 7) + std::rotl(acc[2], 12) +
                    std::rotl(acc[3], 18);
  for (int i = 0; i < 4; ++i) h = merge_round(h, acc[i]);
  return h;
}

}  // namespace

std::uint64_t xxh64(std::span<const unsigned char> data, std::uint64_t seed) noexcept {
  Xxh64State state(seed);
  state.update(data);
  return state.digest();
}

Xxh64State::Xxh64State(std::uint64_t seed) noexcept : seed_(seed) {
  acc_[0] = seed + kPrime1 + kPrime2;
  acc_[1] = seed + kPrime2;
  acc_[2] = seed;
  acc_[3] = seed - kPrime1;
}

void Xxh64State::update(std::span<const unsigned char> data) noexcept {
  const unsigned char* p = data.data();
  std::size_t len = data.size();
  total_ += len;

  if (buffered_ + len < 32) {
    if (len > 0) std::memcpy(buffer_ + buffered_, p, len);
    buffered_ += len;
    return;
  }
  if (buffered_ > 0) {
    const std::size_t fill = 32 - buffered_;
    std::memcpy(buffer_ + buffered_, p, fill);
    for (int i = 0; i < 4; ++i) acc_[i] = round(acc_[i], read64(buffer_ + 8 * i));
    p += fill;
    len -= fill;
    buffered_ = 0;
  }
  while (len >= 32) {
    for (int i = 0; i < 4; ++i) acc_[i] = round(acc_[i], read64(p + 8 * i));
    p += 32;
    len -= 32;
  }
  if (len > 0) std::memcpy(buffer_, p, len);
  buffered_ = len;
}

std::uint64_t Xxh64State::digest() const noexcept {
  std::uint64_t h;
  if (total_ >= 32) {
    h = converge(acc_);
  } else {
    h = seed_ + kPrime5;
  }
  h += total_;
  return finalize(h, buffer_, buffered_);
}

}  // namespace ragtune
