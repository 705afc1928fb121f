#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace cprl {

/// splitmix64 step, used to derive independent stream seeds from one master seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded generator with fully specified output conversions. mt19937_64 is
/// bit-exact by standard; the uniform/normal/shuffle conversions are done
/// here rather than through std distributions so streams reproduce across
/// library versions.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; generates pairs, caches the spare.
    double normal();

    /// Uniform integer in [0, n); n must be positive.
    std::size_t below(std::size_t n);

    template <class T>
    void shuffle(std::vector<T>& v) {
        if (v.empty()) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) std::swap(v[i], v[below(i + 1)]);
    }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace cprl
