#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace lachesis {

// splitmix64 generator. Chosen over <random> engines because the output of
// std::uniform_*_distribution is implementation-defined; every draw here is
// a pure function of the seed, so pipelines replay bit-for-bit anywhere.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [0, n). Multiply-shift; the modulo bias is far below
    // anything observable at our sample counts.
    std::uint32_t next_below(std::uint32_t n) {
        return static_cast<std::uint32_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    bool next_bernoulli(double p) { return next_double() < p; }

    // Independent derived stream; pure function of current state and salt,
    // does not consume from this generator. Streams are addressed as
    // base.split(fold).split(purpose_tag).
    SplitMix64 split(std::uint64_t salt) const {
        std::uint64_t z = state_ ^ (0x9E3779B97F4A7C15ULL * (salt + 0x632BE59BD9B4E019ULL));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return SplitMix64(z ^ (z >> 31));
    }

    SplitMix64 split(std::string_view purpose) const { return split(hash_tag(purpose)); }

    // FNV-1a, used to turn purpose strings into stream salts.
    static std::uint64_t hash_tag(std::string_view s) {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001B3ULL;
        }
        return h;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = next_below(static_cast<std::uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::uint64_t state_;
};

}  // namespace lachesis
