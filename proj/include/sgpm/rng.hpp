#ifndef SGPM_RNG_HPP
#define SGPM_RNG_HPP

#include <array>
#include <cstdint>
#include <vector>

namespace sgpm {

// xoshiro256** with splitmix64 seeding. Every distribution below is pinned
// to an exact algorithm so that identical seeds give identical streams on
// any platform, and the 4-word state serializes directly into checkpoints.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Independent stream derived from (seed, stream_id); used to give data
    // generation, weight init, training and basis sampling separate streams.
    static Rng derive(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t next_u64();

    // Uniform in [0,1) with 53-bit resolution.
    double uniform01();
    double uniform(double lo, double hi);

    // Unbiased integer in [0, n); n must be >= 1.
    std::uint64_t below(std::uint64_t n);

    bool bernoulli(double p);

    // Standard normal via polar Box-Muller; stateless between calls.
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    // k distinct indices drawn from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    std::array<std::uint64_t, 4> state() const { return s_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

private:
    std::array<std::uint64_t, 4> s_{};
};

} // namespace sgpm

#endif
