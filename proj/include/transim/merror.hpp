#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "transim/engine_support.hpp"
#include "transim/sampling.hpp"
#include "transim/trial_model.hpp"

namespace transim {

/// Which columns play which part in the regression outcome ~ exposure + confounders.
struct Roles {
    std::string outcome;
    std::string exposure;
    std::vector<std::string> confounders;

    /// outcome, exposure, confounders... in that order.
    std::vector<std::string> all() const;
    bool operator==(const Roles&) const = default;
};

/// Problems with input data (unreadable file, missing column). Distinct from
/// ValidationError, which covers user-authored configuration.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RankDeficientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Column-major numeric table with regression roles attached.
class Dataset {
public:
    /// Validates: role columns present and distinct, role values finite,
    /// rows >= parameters + 2 (parameters = intercept + exposure + confounders).
    Dataset(std::vector<std::string> names, Eigen::MatrixXd values, Roles roles);

    const std::vector<std::string>& column_names() const noexcept { return names_; }
    const Eigen::MatrixXd& values() const noexcept { return values_; }
    const Roles& roles() const noexcept { return roles_; }
    Eigen::Index rows() const noexcept { return values_.rows(); }
    std::size_t parameters() const noexcept { return roles_.confounders.size() + 2; }

    /// Throws DataError for unknown names.
    Eigen::Index column_index(const std::string& name) const;
    Eigen::VectorXd column(const std::string& name) const { return values_.col(column_index(name)); }

    Dataset with_roles(Roles roles) const { return Dataset(names_, values_, std::move(roles)); }
    Dataset with_values(Eigen::MatrixXd values) const { return Dataset(names_, std::move(values), roles_); }

    bool operator==(const Dataset& other) const;

private:
    std::vector<std::string> names_;
    Eigen::MatrixXd values_;
    Roles roles_;
};

struct LoadedCsv {
    Dataset dataset;
    std::int64_t dropped_rows = 0;  // rows with a missing or non-numeric role value
};

/// Reads an RFC 4180 CSV with a header row ('.' decimal separator). Only role
/// columns are kept. Empty, NA, NaN and unparsable cells count as missing and
/// drop their row.
LoadedCsv load_csv(const std::filesystem::path& path, const Roles& roles);
LoadedCsv parse_csv(std::string_view text, const Roles& roles);

struct SyntheticSpec {
    std::int64_t n = 0;
    std::string outcome = "y";
    std::vector<std::string> covariates;  // exposure first, then confounders
    Eigen::MatrixXd covariance;           // over covariates
    std::vector<double> means;            // defaults to zeros
    double intercept = 0.0;
    std::vector<double> coefficients;     // one per covariate
    double noise_sd = 1.0;
    std::uint64_t seed = 0;
};

std::vector<ValidationIssue> validate_synthetic(const SyntheticSpec& spec);

/// Multivariate normal covariates through a Cholesky factor; outcome is the
/// linear predictor plus N(0, noise_sd^2). Roles default to exposure = first
/// covariate, confounders = the rest.
Dataset synth_dataset(const SyntheticSpec& spec, RandomStream& stream);

struct OlsFit {
    std::vector<std::string> terms;  // "(intercept)", exposure, confounders...
    Eigen::VectorXd coefficients;
    Eigen::VectorXd standard_errors;
    double residual_variance = 0.0;

    double exposure_coefficient() const { return coefficients[1]; }
    bool operator==(const OlsFit& other) const;
};

/// Least squares on [1, exposure, confounders] by column-pivoted Householder
/// QR. Throws RankDeficientError when the design is not of full column rank.
OlsFit ols_fit(const Dataset& dataset);
OlsFit ols_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& design);

/// Sample variance with denominator n - 1.
double sample_variance(const Eigen::VectorXd& column);

/// Adds i.i.d. N(0, tau * var(c)) noise to every target column c, with var(c)
/// the sample variance of the input column. tau == 0 returns the input
/// unchanged. Targets are perturbed in the order given.
Dataset inject_error(const Dataset& dataset, const std::vector<std::string>& targets, double tau,
                     RandomStream& stream);

struct MErrorConfig {
    Roles roles;
    std::vector<std::vector<std::string>> targets;
    std::vector<double> tau_grid;
    std::int64_t replications = 100;
    std::uint64_t seed = 0;

    bool operator==(const MErrorConfig&) const = default;
};

std::vector<ValidationIssue> validate_merror_config(const MErrorConfig& config);

/// Exposure-coefficient distribution for one (target set, tau) cell.
struct MErrorCell {
    std::vector<std::string> target;
    double tau = 0.0;
    std::int64_t r_effective = 0;
    std::int64_t not_estimable = 0;
    std::optional<double> mean;
    std::optional<double> sd;  // denominator r_effective - 1; 0 for one replication
    std::optional<double> q025;
    std::optional<double> q975;
    std::optional<double> relative_bias;  // (mean - baseline) / baseline

    bool operator==(const MErrorCell&) const = default;
};

struct MErrorResults {
    MErrorConfig config;
    std::int64_t rows = 0;
    std::int64_t dropped_rows = 0;
    OlsFit baseline;
    std::vector<MErrorCell> cells;  // target-major, tau ascending
    Provenance provenance;

    const MErrorCell* find(std::size_t target_index, double tau) const noexcept;
    bool operator==(const MErrorResults&) const = default;
};

/// Linear-interpolation quantile (type 7) of an unsorted sample.
double quantile(std::vector<double> values, double prob);

/// Baseline fit on clean data, then R perturbed refits per (target set, tau).
/// Replication i of cell c uses stream (seed, i, error_injection ^ c << 8).
MErrorResults run_merror_study(const Dataset& dataset, const MErrorConfig& config,
                               const RunOptions& options = {}, std::int64_t dropped_rows = 0);

}  // namespace transim
