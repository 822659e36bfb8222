#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace cps {

/// 64-bit FNV-1a, used for fingerprints and artifact hashes (not cryptographic).
class Fnv1a {
 public:
  void update(std::span<const std::uint8_t> bytes) noexcept {
    for (auto b : bytes) {
      state_ ^= b;
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) noexcept {
    update(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  }
  std::uint64_t digest() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string fnv1a_hex(std::string_view s) {
  Fnv1a h;
  h.update(s);
  return h.hex();
}

/// Hash of a file's full contents; throws DataError when unreadable.
std::string file_hash(const std::string& path);

}  // namespace cps
