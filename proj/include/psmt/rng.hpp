#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>

namespace psmt {

// Seeded random stream. Substreams are derived from (seed, tags...) so that
// any consumer can be replayed from counters alone.
class Rng {
public:
    Rng() : engine_(0) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    // Inclusive range.
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
    bool bernoulli(double p) { return p > 0.0 && uniform() < p; }

    std::mt19937_64& engine() { return engine_; }

    [[nodiscard]] std::string state() const;
    void restore(const std::string& state);

private:
    std::mt19937_64 engine_;
};

// Stream tags used across the trainer, kept in one place so that two
// consumers never share a substream.
namespace stream {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t labelled_order = 2;
inline constexpr std::uint64_t unlabelled_order = 3;
inline constexpr std::uint64_t step = 4;
inline constexpr std::uint64_t split = 5;
inline constexpr std::uint64_t generate = 6;
}  // namespace stream

}  // namespace psmt
