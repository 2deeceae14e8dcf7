#include "stratkit/rng.hpp"

namespace stratkit {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_tag(const char* name) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char* p = name; *p != '\0'; ++p) {
        h ^= static_cast<unsigned char>(*p);
        h *= 0x100000001b3ULL;
    }
    return h;
}

Rng Rng::derive(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = splitmix64(master);
    for (std::uint64_t step : path) h = splitmix64(h ^ splitmix64(step + 0x632be59bd9b4e019ULL));
    return Rng(h);
}

double Rng::uniform() {
    // 53 random bits -> [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() { return normal_(engine_); }

std::uint64_t Rng::below(std::uint64_t bound) {
    // Lemire-style rejection keeps this unbiased and independent of the stdlib.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t r = engine_();
        if (r >= threshold) return r % bound;
    }
}

}  // namespace stratkit
