#pragma once

#include <cstdint>
#include <vector>

namespace gzsl::num {

// Deterministic, platform-independent random stream.
//
// Algorithm: xoshiro256++ (Blackman & Vigna), state seeded through
// splitmix64. Gaussians come from a Box-Muller transform with the spare
// value cached in the state, so the stream is a pure function of the
// seed regardless of how draws are grouped into calls.
class RngState {
public:
    explicit RngState(std::uint64_t seed);

    std::uint64_t next_u64();

    // uniform double in [0, 1), 53-bit resolution
    double uniform();
    double uniform(double lo, double hi);

    // standard normal draw
    double normal();

    // unbiased integer in [0, n); n must be > 0
    std::uint64_t below(std::uint64_t n);

    // derive an independent child stream; advances this stream once
    RngState split();

    std::uint64_t seed() const { return seed_; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t s_[4] = {};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace gzsl::num
