#pragma once

#include <cmath>
#include <cstdint>

namespace qdm {

// Counter-based random streams. Every draw is a pure function of
// (seed, key1, key2, counter), so noise synthesis is reproducible regardless
// of pixel evaluation order or worker count.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Keyed stream: successive values come from incrementing an internal counter.
class RngStream {
public:
    RngStream(uint64_t seed, uint64_t key1 = 0, uint64_t key2 = 0) {
        state_ = splitmix64(splitmix64(splitmix64(seed) ^ key1) ^ key2);
        ctr_ = 0;
    }

    uint64_t next_u64() { return splitmix64(state_ + 0x632be59bd9b4e019ULL * ++ctr_); }

    // uniform in (0, 1); never returns exactly 0 so log() below is safe
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // standard normal via Box-Muller (branch free, platform independent)
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_uniform();
        double u2 = next_uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    uint64_t state_;
    uint64_t ctr_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace qdm
