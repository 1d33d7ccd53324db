#include "minegp/rng.hpp"

#include <stdexcept>

#include "minegp/stats.hpp"

namespace minegp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) : seed_(seed), eng_(splitmix64(seed)) {}

RngStream RngStream::substream(std::string_view name) const {
  return RngStream(splitmix64(seed_ ^ fnv1a(name)));
}

RngStream RngStream::substream(std::uint64_t index) const {
  return RngStream(splitmix64(seed_ ^ splitmix64(0x5851F42D4C957F2Dull + index)));
}

std::uint64_t RngStream::next_u64() { return eng_(); }

double RngStream::uniform() {
  // 53 random bits, shifted into (0,1): never exactly 0 or 1
  return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() { return norm_quantile(uniform()); }

std::uint64_t RngStream::bounded(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::bounded: n must be > 0");
  const std::uint64_t limit = ~0ull - (~0ull % n);
  std::uint64_t r;
  do {
    r = eng_();
  } while (r >= limit);
  return r % n;
}

int RngStream::uniform_int(int lo, int hi) {
  if (hi < lo) throw std::invalid_argument("RngStream::uniform_int: hi < lo");
  return lo + static_cast<int>(bounded(static_cast<std::uint64_t>(hi - lo) + 1));
}

std::vector<int> RngStream::sample_without_replacement(int n, int m) {
  if (m > n) throw std::invalid_argument("sample_without_replacement: m > n");
  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  // partial Fisher-Yates: first m entries are the sample
  for (int i = 0; i < m; ++i) {
    const int j = i + static_cast<int>(bounded(static_cast<std::uint64_t>(n - i)));
    std::swap(all[i], all[j]);
  }
  all.resize(m);
  return all;
}

}  // namespace minegp
