#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace ulb {

// splitmix64 step (Vigna). Passes BigCrush, two ops per draw, and the state
// transition is a plain counter, which makes derived streams cheap.
inline std::uint64_t splitmix64_next(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Stateless mix of two 64-bit values; used to derive independent substreams
// from a base seed plus tags such as world/experiment/model index.
inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) noexcept {
    std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    return splitmix64_next(s);
}

// FNV-1a over a string tag, so substreams can be named ("init", "shuffle").
inline std::uint64_t hash_tag(std::string_view tag) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
    return mix(seed, tag);
}
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) noexcept {
    return mix(seed, hash_tag(tag));
}
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a) noexcept {
    return mix(derive_seed(seed, tag), a);
}
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a,
                                 std::uint64_t b) noexcept {
    return mix(mix(derive_seed(seed, tag), a), b);
}

// Deterministic generator. Not std::mt19937 + <random> distributions: the
// standard leaves distribution algorithms implementation-defined, and the
// pool store needs checkpoints that reproduce bit-for-bit from the manifest
// seeds alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() noexcept { return splitmix64_next(state_); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // unbiased integer in [0, n) via rejection
    std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t threshold = -n % n;  // 2^64 mod n
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // standard normal via Marsaglia polar rejection (sqrt/log only)
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = uniform(-1.0, 1.0);
            v = uniform(-1.0, 1.0);
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    template <class T>
    void shuffle(std::vector<T>& v) noexcept {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace ulb
