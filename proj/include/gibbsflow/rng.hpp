#pragma once

#include <cmath>
#include <cstdint>

namespace gibbsflow {

// Counter-based stream generator built on the SplitMix64 mixing function.
// Every draw is a pure function of (seed, stream, counter), so ensembles are
// reproducible and independent of evaluation order under parallelism.
namespace detail {
inline uint64_t splitmix64_mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

class CounterRng {
  public:
    CounterRng(uint64_t seed, uint64_t stream)
        : key_(detail::splitmix64_mix(seed ^ 0x5851f42d4c957f2dULL) ^
               detail::splitmix64_mix(stream * 0xda942042e4dd58b5ULL + 0x2545f4914f6cdd1dULL)) {}

    /// Derive a child stream, e.g. per segment or per dyadic level.
    CounterRng child(uint64_t substream) const {
        CounterRng r(*this);
        r.key_ = detail::splitmix64_mix(key_ ^ (substream * 0x9e3779b97f4a7c15ULL + 1ULL));
        r.counter_ = 0;
        r.have_cached_ = false;
        return r;
    }

    uint64_t next_u64() { return detail::splitmix64_mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

    /// Uniform in (0,1), never exactly 0 or 1.
    double uniform() {
        const uint64_t u = next_u64();
        return (static_cast<double>(u >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; the paired draw is cached.
    double gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 6.283185307179586476925286766559 * u2;
        cached_ = rad * std::sin(ang);
        have_cached_ = true;
        return rad * std::cos(ang);
    }

  private:
    uint64_t key_;
    uint64_t counter_ = 0;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace gibbsflow
