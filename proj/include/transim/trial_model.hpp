#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace transim {

inline constexpr double kProbabilitySumTolerance = 1e-6;

/// A single problem found while validating a user-supplied document.
/// `path` names the offending field using dotted/bracketed JSON notation
/// (e.g. "control[2]", "alpha").
struct ValidationIssue {
    std::string path;
    std::string message;

    bool operator==(const ValidationIssue&) const = default;
};

/// Thrown by constructors and loaders when inputs violate a documented
/// contract. Carries every issue found, not just the first.
class ValidationError : public std::exception {
public:
    explicit ValidationError(std::vector<ValidationIssue> issues);
    explicit ValidationError(std::string path, std::string message);

    const std::vector<ValidationIssue>& issues() const noexcept { return issues_; }
    const char* what() const noexcept override { return summary_.c_str(); }

private:
    std::vector<ValidationIssue> issues_;
    std::string summary_;
};

/// Probability vector over K >= 2 ordered categories (rank 1 first).
///
/// Construction validates the vector (non-negative, sum within 1e-6 of one)
/// and then divides by the sum, so the stored probabilities sum to one up to
/// rounding. The cumulative vector always ends at exactly 1.0.
class OrdinalDistribution {
public:
    explicit OrdinalDistribution(std::vector<double> probs);

    /// Issues that would make the constructor throw; empty when valid.
    static std::vector<ValidationIssue> check(std::span<const double> probs,
                                              std::string_view path = "probs");

    std::size_t categories() const noexcept { return probs_.size(); }
    std::span<const double> probs() const noexcept { return probs_; }
    std::span<const double> cumulative() const noexcept { return cumulative_; }

private:
    std::vector<double> probs_;
    std::vector<double> cumulative_;
};

/// Integer control:intervention weights, stored in lowest terms.
class AllocationRatio {
public:
    AllocationRatio() = default;
    AllocationRatio(std::int64_t control_weight, std::int64_t intervention_weight);

    std::int64_t control_weight() const noexcept { return control_; }
    std::int64_t intervention_weight() const noexcept { return intervention_; }

    bool operator==(const AllocationRatio&) const = default;

private:
    std::int64_t control_ = 1;
    std::int64_t intervention_ = 1;
};

enum class TestId : std::uint8_t {
    mann_whitney,
    chi_square,
    fisher_exact,
    prop_odds_wald,
    prop_odds_lrt,
    dichotomized_chi_square,
};

inline constexpr TestId kAllTests[] = {
    TestId::mann_whitney,   TestId::chi_square,    TestId::fisher_exact,
    TestId::prop_odds_wald, TestId::prop_odds_lrt, TestId::dichotomized_chi_square,
};

std::string_view to_string(TestId id) noexcept;
std::optional<TestId> parse_test_id(std::string_view name) noexcept;

/// Everything needed to run one ordinal-endpoint power study.
///
/// Probabilities are kept as typed by the user; `validate_config` checks
/// them and the engine renormalizes through OrdinalDistribution.
struct PowerStudyConfig {
    std::vector<double> control;
    std::vector<double> intervention;
    std::vector<std::int64_t> total_sizes;
    AllocationRatio allocation;
    std::vector<TestId> tests;  // in canonical enum order, no duplicates
    double alpha = 0.05;
    std::int64_t replications = 10000;
    std::uint64_t seed = 0;
    std::optional<int> dichotomization_cut;  // 1-based category index

    bool operator==(const PowerStudyConfig&) const = default;
};

/// Realized sample of one arm: patients per category.
struct ArmCounts {
    std::vector<std::int64_t> counts;

    ArmCounts() = default;
    explicit ArmCounts(std::vector<std::int64_t> c) : counts(std::move(c)) {}

    std::int64_t n() const noexcept;
    std::size_t categories() const noexcept { return counts.size(); }

    bool operator==(const ArmCounts&) const = default;
};

/// Returns every violated invariant; an empty list means the config is
/// accepted unchanged.
std::vector<ValidationIssue> validate_config(const PowerStudyConfig& config);

/// Throws ValidationError listing every violation, or returns the config.
const PowerStudyConfig& require_valid(const PowerStudyConfig& config);

struct ArmSizes {
    std::int64_t control;
    std::int64_t intervention;

    bool operator==(const ArmSizes&) const = default;
};

/// Splits N patients as floor(N*a/(a+b)) control and the remainder to
/// intervention. Throws ValidationError if either arm would be empty.
ArmSizes arm_sizes(std::int64_t total, const AllocationRatio& allocation);

}  // namespace transim
