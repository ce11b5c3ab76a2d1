#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "transim/trial_model.hpp"

namespace transim {

/// Identifies the consumer of a random stream within one replication.
/// Values are part of the reproducibility contract; never renumber them.
enum class StreamPurpose : std::uint32_t {
    h1_sampling = 1,
    h0_sampling = 2,
    fisher_mc_h1 = 3,
    fisher_mc_h0 = 4,
    error_injection = 5,
    synthetic_data = 6,
};

/// The derived stream is a pure function of these three fields.
/// `purpose_tag` is a StreamPurpose, optionally xor-ed with a cell index
/// shifted above the low byte (see `tag_for_cell`).
struct StreamKey {
    std::uint64_t master_seed = 0;
    std::uint64_t replication_index = 0;
    std::uint64_t purpose_tag = 0;
};

constexpr std::uint64_t tag_for_cell(StreamPurpose purpose, std::uint64_t cell_index) noexcept {
    return static_cast<std::uint64_t>(purpose) ^ (cell_index << 8);
}

/// Recorded in every results document.
inline constexpr std::string_view kGeneratorId = "xoshiro256** seeded by splitmix64(seed,replication,tag) v1";

/// xoshiro256** with its state derived by SplitMix64 mixing of a StreamKey.
/// Satisfies UniformRandomBitGenerator. Uniform and normal variates are
/// produced by fixed, platform-independent transforms (no std::*_distribution,
/// whose output is implementation-defined).
class RandomStream {
public:
    using result_type = std::uint64_t;

    explicit RandomStream(const StreamKey& key) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept;

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Standard normal by the Marsaglia polar method.
    double normal() noexcept;

private:
    std::array<std::uint64_t, 4> s_{};
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

inline RandomStream derive_stream(const StreamKey& key) noexcept { return RandomStream(key); }

/// n independent categorical draws by inverse CDF; returns counts per category.
ArmCounts sample_arm(const OrdinalDistribution& dist, std::int64_t n, RandomStream& stream);

}  // namespace transim
