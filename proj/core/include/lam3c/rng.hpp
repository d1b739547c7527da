#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace lam3c {

// Counter-based generator: draw n of stream `key` is splitmix64(key + n * golden_gamma).
// Any two implementations of the same mixing function reproduce identical streams,
// independent of platform or draw interleaving across streams.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller; consumes two draws per call.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream; the parent counter is not advanced.
  CounterRng fork(std::uint64_t tag) const;
  CounterRng fork(std::string_view tag) const;

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_string(std::string_view text);

// k distinct indices from [0, n) in ascending order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, CounterRng& rng);

}  // namespace lam3c
