#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace stratkit {

std::uint64_t splitmix64(std::uint64_t x);

/// Stable 64-bit tag for a string, used to key RNG streams by role name.
std::uint64_t stream_tag(const char* name);

/// Pseudo-random stream. Streams are addressed by a counter path
/// (master seed, replication, role, ...) so that every consumer gets an
/// independent, reproducible sequence regardless of scheduling.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static Rng derive(std::uint64_t master, std::initializer_list<std::uint64_t> path);

    double uniform();
    double normal();
    bool bernoulli(double p) { return uniform() < p; }
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace stratkit
