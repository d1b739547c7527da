#include "lam3c/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace lam3c {

namespace {
constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += kGoldenGamma;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_string(std::string_view text) {
  // FNV-1a, then mixed.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return splitmix64(h);
}

std::uint64_t CounterRng::next_u64() {
  const std::uint64_t value = splitmix64(key_ + counter_ * kGoldenGamma);
  ++counter_;
  return value;
}

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t CounterRng::below(std::uint64_t n) {
  if (n <= 1) {
    return 0;
  }
  // Rejection sampling on the top of the range keeps the result unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = next_u64();
  while (x >= limit) {
    x = next_u64();
  }
  return x % n;
}

double CounterRng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) {
    u1 = uniform();
  }
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

CounterRng CounterRng::fork(std::uint64_t tag) const {
  return CounterRng(splitmix64(key_ ^ splitmix64(tag + 0x632BE59BD9B4E019ULL)));
}

CounterRng CounterRng::fork(std::string_view tag) const { return fork(hash_string(tag)); }

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, CounterRng& rng) {
  k = std::min(k, n);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  // Partial Fisher-Yates over the first k slots.
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(all[i], all[j]);
  }
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace lam3c
