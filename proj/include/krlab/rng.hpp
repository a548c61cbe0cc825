#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace krlab {

/// Purpose tags for substreams. A stream is keyed by (master seed, tag, ids...),
/// so changing one experiment axis never shifts the draws of another.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kData = 2;
inline constexpr std::uint64_t kAnchors = 3;
inline constexpr std::uint64_t kPool = 4;
inline constexpr std::uint64_t kBoundary = 5;
inline constexpr std::uint64_t kSgd = 6;
inline constexpr std::uint64_t kValidation = 7;
inline constexpr std::uint64_t kMonteCarlo = 8;
inline constexpr std::uint64_t kTest = 99;
}  // namespace stream

/// A seeded engine with the draws the library needs.
class Stream {
 public:
  Stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  double gaussian() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// One uniform bit mapped to {-1, +1}.
  double rademacher() { return (engine_() >> 63) != 0 ? 1.0 : -1.0; }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace krlab
