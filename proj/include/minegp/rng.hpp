#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace minegp {

// Deterministic random stream. All randomness in the library flows from a
// single seed through named substreams, so component draw order does not
// depend on scheduling. mt19937_64 plus inverse-CDF normals keeps sequences
// bit-identical across platforms.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0);

  // Independent child stream; derivation uses only the parent's seed, not its
  // current position, so substream(name) is stable no matter how many draws
  // the parent has made.
  RngStream substream(std::string_view name) const;
  RngStream substream(std::uint64_t index) const;

  std::uint64_t next_u64();
  double uniform();  // open interval (0,1)
  double normal();   // standard normal via inverse CDF
  std::uint64_t bounded(std::uint64_t n);  // uniform on [0, n)
  int uniform_int(int lo, int hi);         // inclusive range

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(bounded(i))]);
    }
  }

  // m distinct values from {0..n-1}, in random order
  std::vector<int> sample_without_replacement(int n, int m);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
};

}  // namespace minegp
