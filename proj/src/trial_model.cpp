#include "transim/trial_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace transim {

namespace {

std::string join_issues(const std::vector<ValidationIssue>& issues) {
    std::ostringstream os;
    for (std::size_t i = 0; i < issues.size(); ++i) {
        if (i) os << "; ";
        os << issues[i].path << ": " << issues[i].message;
    }
    return os.str();
}

std::string fmt_number(double x) {
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
}

}  // namespace

ValidationError::ValidationError(std::vector<ValidationIssue> issues)
    : issues_(std::move(issues)), summary_(join_issues(issues_)) {}

ValidationError::ValidationError(std::string path, std::string message)
    : ValidationError(std::vector<ValidationIssue>{{std::move(path), std::move(message)}}) {}

std::vector<ValidationIssue> OrdinalDistribution::check(std::span<const double> probs,
                                                        std::string_view path) {
    std::vector<ValidationIssue> issues;
    const std::string base(path);
    if (probs.size() < 2) {
        issues.push_back({base, "needs at least 2 categories, got " + std::to_string(probs.size())});
    }
    bool finite = true;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!std::isfinite(probs[i])) {
            issues.push_back({base + "[" + std::to_string(i) + "]", "probability is not a finite number"});
            finite = false;
        } else if (probs[i] < 0.0) {
            issues.push_back({base + "[" + std::to_string(i) + "]",
                              "negative probability " + fmt_number(probs[i])});
        }
    }
    if (finite && !probs.empty()) {
        const double sum = std::accumulate(probs.begin(), probs.end(), 0.0);
        if (std::abs(sum - 1.0) > kProbabilitySumTolerance) {
            issues.push_back({base, "probabilities sum to " + fmt_number(sum) +
                                        ", exceeds tolerance 1e-06 around 1"});
        }
    }
    return issues;
}

OrdinalDistribution::OrdinalDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (auto issues = check(probs_); !issues.empty()) throw ValidationError(std::move(issues));
    const double sum = std::accumulate(probs_.begin(), probs_.end(), 0.0);
    for (double& p : probs_) p /= sum;
    cumulative_.resize(probs_.size());
    std::partial_sum(probs_.begin(), probs_.end(), cumulative_.begin());
    cumulative_.back() = 1.0;
}

AllocationRatio::AllocationRatio(std::int64_t control_weight, std::int64_t intervention_weight) {
    if (control_weight < 1 || intervention_weight < 1) {
        throw ValidationError("allocation", "weights must be positive integers");
    }
    const std::int64_t g = std::gcd(control_weight, intervention_weight);
    control_ = control_weight / g;
    intervention_ = intervention_weight / g;
}

std::string_view to_string(TestId id) noexcept {
    switch (id) {
        case TestId::mann_whitney: return "mann_whitney";
        case TestId::chi_square: return "chi_square";
        case TestId::fisher_exact: return "fisher_exact";
        case TestId::prop_odds_wald: return "prop_odds_wald";
        case TestId::prop_odds_lrt: return "prop_odds_lrt";
        case TestId::dichotomized_chi_square: return "dichotomized_chi_square";
    }
    return "unknown";
}

std::optional<TestId> parse_test_id(std::string_view name) noexcept {
    for (TestId id : kAllTests) {
        if (to_string(id) == name) return id;
    }
    return std::nullopt;
}

std::int64_t ArmCounts::n() const noexcept {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

ArmSizes arm_sizes(std::int64_t total, const AllocationRatio& allocation) {
    const std::int64_t a = allocation.control_weight();
    const std::int64_t b = allocation.intervention_weight();
    const std::int64_t n_control = total * a / (a + b);
    const ArmSizes sizes{n_control, total - n_control};
    if (sizes.control < 1 || sizes.intervention < 1) {
        throw ValidationError("total_sizes", "total " + std::to_string(total) + " with allocation " +
                                                 std::to_string(a) + ":" + std::to_string(b) +
                                                 " leaves an arm empty");
    }
    return sizes;
}

std::vector<ValidationIssue> validate_config(const PowerStudyConfig& config) {
    std::vector<ValidationIssue> issues;
    auto append = [&issues](std::vector<ValidationIssue> more) {
        issues.insert(issues.end(), std::make_move_iterator(more.begin()),
                      std::make_move_iterator(more.end()));
    };
    append(OrdinalDistribution::check(config.control, "control"));
    append(OrdinalDistribution::check(config.intervention, "intervention"));
    if (config.control.size() != config.intervention.size()) {
        issues.push_back({"intervention", "category count mismatch: control has " +
                                              std::to_string(config.control.size()) +
                                              ", intervention has " +
                                              std::to_string(config.intervention.size())});
    }

    if (config.total_sizes.empty()) {
        issues.push_back({"total_sizes", "at least one sample size is required"});
    }
    for (std::size_t i = 0; i < config.total_sizes.size(); ++i) {
        const std::int64_t n = config.total_sizes[i];
        const std::string path = "total_sizes[" + std::to_string(i) + "]";
        if (n < 4) {
            issues.push_back({path, "total sample size must be at least 4, got " + std::to_string(n)});
            continue;
        }
        if (i > 0 && n <= config.total_sizes[i - 1]) {
            issues.push_back({path, "sample sizes must be strictly increasing (sorted, no duplicates)"});
        }
        try {
            (void)arm_sizes(n, config.allocation);
        } catch (const ValidationError& e) {
            issues.push_back({path, e.issues().front().message});
        }
    }

    if (config.tests.empty()) {
        issues.push_back({"tests", "test set is empty"});
    }
    for (std::size_t i = 1; i < config.tests.size(); ++i) {
        if (config.tests[i] <= config.tests[i - 1]) {
            issues.push_back({"tests", "duplicate or non-canonical test ordering"});
            break;
        }
    }

    if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
        issues.push_back({"alpha", "significance level must lie in (0,1), got " + fmt_number(config.alpha)});
    }
    if (config.replications < 1) {
        issues.push_back({"replications", "replication count must be at least 1"});
    }

    const bool wants_cut = std::find(config.tests.begin(), config.tests.end(),
                                     TestId::dichotomized_chi_square) != config.tests.end();
    const int k = static_cast<int>(config.control.size());
    if (config.dichotomization_cut) {
        const int j = *config.dichotomization_cut;
        if (j < 1 || j > k - 1) {
            issues.push_back({"dichotomization_cut", "cut must lie in [1, " + std::to_string(k - 1) +
                                                         "], got " + std::to_string(j)});
        }
    } else if (wants_cut) {
        issues.push_back({"dichotomization_cut", "required when dichotomized_chi_square is selected"});
    }
    return issues;
}

const PowerStudyConfig& require_valid(const PowerStudyConfig& config) {
    if (auto issues = validate_config(config); !issues.empty()) {
        throw ValidationError(std::move(issues));
    }
    return config;
}

}  // namespace transim
