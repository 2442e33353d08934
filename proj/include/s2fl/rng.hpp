#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace s2fl {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic random stream. The engine (mt19937_64) is fully specified by
// the standard; the distributions are hand-rolled because the std::*_distribution
// algorithms are implementation-defined, which would break byte-identical
// reruns of a config across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1), 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via the Marsaglia polar method; the paired value is
  // discarded so draw counts stay a pure function of the stream position.
  double normal();

  // Gamma(shape, 1) via Marsaglia-Tsang. shape > 0.
  double gamma(double shape);

  // k proportions summing to 1, each component Gamma(alpha)/sum.
  std::vector<double> dirichlet(double alpha, int k);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // k distinct values from {0, ..., n-1}, in draw order.
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  std::mt19937_64 eng_;
};

// Substream derivation: hash the root seed through a path of tags so that
// independent parts of a run (dataset, per-round sampling, per-client batches)
// never share engine state.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path);

inline Rng derive_rng(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(root, path));
}

}  // namespace s2fl
