#include "transim/sampling.hpp"

#include <cmath>

namespace transim {

namespace {

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

}  // namespace

RandomStream::RandomStream(const StreamKey& key) noexcept {
    // Chain the three key fields through the finalizer so that flipping any
    // bit of any field changes the whole state.
    std::uint64_t h = splitmix64_mix(key.master_seed + kGolden);
    h = splitmix64_mix(h ^ (key.replication_index + 2 * kGolden));
    h = splitmix64_mix(h ^ (key.purpose_tag + 3 * kGolden));
    for (auto& word : s_) {
        h += kGolden;
        word = splitmix64_mix(h);
    }
}

RandomStream::result_type RandomStream::operator()() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RandomStream::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_normal_ = v * scale;
    has_spare_ = true;
    return u * scale;
}

ArmCounts sample_arm(const OrdinalDistribution& dist, std::int64_t n, RandomStream& stream) {
    const auto cdf = dist.cumulative();
    std::vector<std::int64_t> counts(cdf.size(), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        const double u = stream.uniform();
        std::size_t k = 0;
        while (u >= cdf[k]) ++k;  // cdf.back() == 1.0 > u terminates the scan
        ++counts[k];
    }
    return ArmCounts(std::move(counts));
}

}  // namespace transim
