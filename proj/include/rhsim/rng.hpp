#pragma once

#include <cstdint>

namespace rhsim {

// Deterministic 64-bit generator (splitmix64). Used everywhere instead of
// std distributions so that streams are identical across standard libraries
// and platforms. Every consumer derives its own stream via substream().
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, bound) via rejection; bound must be > 0.
    uint64_t below(uint64_t bound) {
        const uint64_t threshold = -bound % bound;
        for (;;) {
            uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform double in [0, 1).
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Independent stream keyed by a small tag. Seeding two Rngs from the
    // same (seed, tag) pair yields identical streams.
    static Rng substream(uint64_t seed, uint64_t tag) {
        Rng mix(seed ^ (0xa0761d6478bd642fULL * (tag + 1)));
        mix.next();
        return Rng(mix.next());
    }

  private:
    uint64_t state_;
};

}  // namespace rhsim
