#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace flowcap {

// Seeded generator with platform-independent draws. std::mt19937_64 is fully
// specified by the standard, but the std distributions are not, so uniform
// and normal variates are derived from raw 64-bit outputs here.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    // Inclusive range [lo, hi].
    int range(int lo, int hi);
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    // Textual engine state (the standard's stream format) for checkpoints.
    std::string state() const;
    void set_state(const std::string& s);

private:
    std::mt19937_64 engine_;
};

// splitmix64-based mixing of a base seed with a string key (e.g. a video id).
std::uint64_t derive_seed(std::uint64_t base, std::string_view key);

}  // namespace flowcap
