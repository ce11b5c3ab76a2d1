#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "transim/engine_support.hpp"
#include "transim/sampling.hpp"
#include "transim/stat_tests.hpp"
#include "transim/trial_model.hpp"

namespace transim {

enum class Hypothesis : std::uint8_t { h1, h0 };

std::string_view to_string(Hypothesis h) noexcept;

/// Rejection tallies for one (test, N, hypothesis) cell.
/// rejections + non_rejections + not_estimable == replications.
struct RejectionSummary {
    std::int64_t rejections = 0;
    std::int64_t non_rejections = 0;
    std::int64_t not_estimable = 0;
    std::int64_t r_effective = 0;     // replications - not_estimable
    std::optional<double> estimate;   // rejections / r_effective
    std::optional<double> mc_se;
    std::optional<double> ci_low;     // estimate -/+ 1.96 mc_se, clipped to [0, 1]
    std::optional<double> ci_high;

    bool operator==(const RejectionSummary&) const = default;
};

struct PowerCell {
    TestId test{};
    std::int64_t total_n = 0;
    std::int64_t n_control = 0;
    std::int64_t n_intervention = 0;
    RejectionSummary h1;  // power
    RejectionSummary h0;  // type-I error, both arms drawn from control

    const RejectionSummary& at(Hypothesis h) const noexcept { return h == Hypothesis::h1 ? h1 : h0; }
    bool operator==(const PowerCell&) const = default;
};

struct PowerResults {
    PowerStudyConfig config;
    std::vector<PowerCell> cells;  // test-major (canonical test order), then N ascending
    Provenance provenance;

    const PowerCell* find(TestId test, std::int64_t total_n) const noexcept;
    bool operator==(const PowerResults&) const = default;
};

/// sqrt(p (1 - p) / r); absent when r_effective == 0.
std::optional<double> mc_standard_error(double p_hat, std::int64_t r_effective);

RejectionSummary summarize_rejections(std::int64_t rejections, std::int64_t non_rejections,
                                      std::int64_t not_estimable);

/// Computes one test on one simulated dataset. `fisher_stream` is consumed
/// only by the Monte Carlo Fisher path.
using TestApplier = std::function<TestResult(TestId, const ArmCounts& control,
                                             const ArmCounts& intervention, RandomStream& fisher_stream)>;

/// Applies every test in `config.tests` to one dataset, sharing a single
/// proportional-odds fit between the Wald and likelihood-ratio tests.
std::vector<TestResult> apply_tests(const PowerStudyConfig& config, const ArmCounts& control,
                                    const ArmCounts& intervention, RandomStream& fisher_stream);

struct PowerRunOptions : RunOptions {
    /// Replaces the built-in tests (stubs in property tests).
    TestApplier test_override;
};

/// Simulation driver: for every N and replication, simulates H1 and H0
/// datasets from independent streams, applies the selected tests and counts
/// rejections at p <= alpha. Results do not depend on the worker count.
/// Throws ValidationError for invalid configs and Cancelled on stop.
PowerResults run_power_study(const PowerStudyConfig& config, const PowerRunOptions& options = {});

}  // namespace transim
