#include "krlab/rng.hpp"

#include <vector>

namespace krlab {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Stream::Stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t key = splitmix64(seed);
  for (std::uint64_t id : path) key = splitmix64(key ^ splitmix64(id + 0x632be59bd9b4e019ULL));
  std::vector<std::uint32_t> words;
  for (std::uint64_t v : {key, splitmix64(key), splitmix64(key + 1)}) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  engine_.seed(seq);
}

}  // namespace krlab
