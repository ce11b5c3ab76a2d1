#include "transim/merror.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace transim {

std::vector<std::string> Roles::all() const {
    std::vector<std::string> out{outcome, exposure};
    out.insert(out.end(), confounders.begin(), confounders.end());
    return out;
}

// ---------------------------------------------------------------- Dataset

Dataset::Dataset(std::vector<std::string> names, Eigen::MatrixXd values, Roles roles)
    : names_(std::move(names)), values_(std::move(values)), roles_(std::move(roles)) {
    if (static_cast<Eigen::Index>(names_.size()) != values_.cols()) {
        throw std::invalid_argument("column name count does not match the value matrix");
    }
    const auto role_columns = roles_.all();
    std::set<std::string> seen;
    for (const auto& name : role_columns) {
        if (name.empty()) throw DataError("role column name is empty");
        if (!seen.insert(name).second) throw DataError("column '" + name + "' is assigned two roles");
        const Eigen::Index c = column_index(name);
        if (!values_.col(c).allFinite()) throw DataError("column '" + name + "' has non-finite values");
    }
    const auto needed = static_cast<Eigen::Index>(parameters() + 2);
    if (values_.rows() < needed) {
        throw DataError("need at least " + std::to_string(needed) + " usable rows, have " +
                        std::to_string(values_.rows()));
    }
}

Eigen::Index Dataset::column_index(const std::string& name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw DataError("missing column '" + name + "'");
    return static_cast<Eigen::Index>(it - names_.begin());
}

bool Dataset::operator==(const Dataset& other) const {
    return names_ == other.names_ && roles_ == other.roles_ && values_.rows() == other.values_.rows() &&
           values_.cols() == other.values_.cols() && values_ == other.values_;
}

// ---------------------------------------------------------------- CSV

namespace {

std::vector<std::vector<std::string>> split_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"': quoted = true; field_started = true; break;
            case ',':
                row.push_back(std::move(field));
                field.clear();
                field_started = true;
                break;
            case '\r': break;
            case '\n':
                if (field_started || !field.empty() || !row.empty()) {
                    row.push_back(std::move(field));
                    rows.push_back(std::move(row));
                }
                row.clear();
                field.clear();
                field_started = false;
                break;
            default: field.push_back(c); field_started = true;
        }
    }
    if (field_started || !field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::optional<double> parse_cell(const std::string& raw) {
    const std::string s = trim(raw);
    if (s.empty()) return std::nullopt;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || !std::isfinite(value)) return std::nullopt;
    return value;
}

}  // namespace

LoadedCsv parse_csv(std::string_view text, const Roles& roles) {
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
    const auto rows = split_csv(text);
    if (rows.empty()) throw DataError("CSV has no header row");

    std::vector<std::string> header;
    for (const auto& h : rows.front()) header.push_back(trim(h));

    const auto wanted = roles.all();
    std::vector<std::size_t> source;
    for (const auto& name : wanted) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError("missing column '" + name + "'");
        source.push_back(static_cast<std::size_t>(it - header.begin()));
    }

    std::vector<std::vector<double>> kept;
    std::int64_t dropped = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        std::vector<double> values;
        values.reserve(source.size());
        for (std::size_t idx : source) {
            if (idx >= rows[r].size()) break;
            const auto v = parse_cell(rows[r][idx]);
            if (!v) break;
            values.push_back(*v);
        }
        if (values.size() == source.size()) {
            kept.push_back(std::move(values));
        } else {
            ++dropped;
        }
    }

    Eigen::MatrixXd m(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(wanted.size()));
    for (std::size_t r = 0; r < kept.size(); ++r) {
        for (std::size_t c = 0; c < wanted.size(); ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = kept[r][c];
        }
    }
    return LoadedCsv{Dataset(wanted, std::move(m), roles), dropped};
}

LoadedCsv load_csv(const std::filesystem::path& path, const Roles& roles) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open data file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), roles);
}

// ---------------------------------------------------------------- synthetic data

std::vector<ValidationIssue> validate_synthetic(const SyntheticSpec& spec) {
    std::vector<ValidationIssue> issues;
    const auto p = static_cast<Eigen::Index>(spec.covariates.size());
    if (spec.covariates.empty()) issues.push_back({"covariates", "at least one covariate (the exposure) is required"});
    if (spec.n < static_cast<std::int64_t>(spec.covariates.size()) + 4) {
        issues.push_back({"n", "sample size too small for the number of parameters"});
    }
    if (spec.covariance.rows() != p || spec.covariance.cols() != p) {
        issues.push_back({"covariance", "must be a square matrix matching the covariate count"});
    } else if (p > 0) {
        if (!spec.covariance.isApprox(spec.covariance.transpose(), 1e-12)) {
            issues.push_back({"covariance", "must be symmetric"});
        } else if (Eigen::LLT<Eigen::MatrixXd> llt(spec.covariance); llt.info() != Eigen::Success) {
            issues.push_back({"covariance", "must be positive definite"});
        }
    }
    if (spec.coefficients.size() != spec.covariates.size()) {
        issues.push_back({"coefficients", "need one coefficient per covariate"});
    }
    if (!spec.means.empty() && spec.means.size() != spec.covariates.size()) {
        issues.push_back({"means", "need one mean per covariate"});
    }
    if (!(spec.noise_sd >= 0.0) || !std::isfinite(spec.noise_sd)) {
        issues.push_back({"noise_sd", "must be a finite non-negative number"});
    }
    return issues;
}

Dataset synth_dataset(const SyntheticSpec& spec, RandomStream& stream) {
    if (auto issues = validate_synthetic(spec); !issues.empty()) throw ValidationError(std::move(issues));
    const auto p = static_cast<Eigen::Index>(spec.covariates.size());
    const auto n = static_cast<Eigen::Index>(spec.n);
    const Eigen::MatrixXd factor = Eigen::LLT<Eigen::MatrixXd>(spec.covariance).matrixL();

    Eigen::MatrixXd values(n, p + 1);
    Eigen::VectorXd z(p);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < p; ++k) z[k] = stream.normal();
        Eigen::VectorXd x = factor * z;
        if (!spec.means.empty()) {
            for (Eigen::Index k = 0; k < p; ++k) x[k] += spec.means[static_cast<std::size_t>(k)];
        }
        double y = spec.intercept;
        for (Eigen::Index k = 0; k < p; ++k) y += spec.coefficients[static_cast<std::size_t>(k)] * x[k];
        if (spec.noise_sd > 0.0) y += spec.noise_sd * stream.normal();
        values(i, 0) = y;
        values.row(i).tail(p) = x.transpose();
    }

    std::vector<std::string> names{spec.outcome};
    names.insert(names.end(), spec.covariates.begin(), spec.covariates.end());
    Roles roles{spec.outcome, spec.covariates.front(),
                std::vector<std::string>(spec.covariates.begin() + 1, spec.covariates.end())};
    return Dataset(std::move(names), std::move(values), std::move(roles));
}

// ---------------------------------------------------------------- OLS

bool OlsFit::operator==(const OlsFit& other) const {
    return terms == other.terms && coefficients.size() == other.coefficients.size() &&
           coefficients == other.coefficients && standard_errors == other.standard_errors &&
           residual_variance == other.residual_variance;
}

OlsFit ols_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& design) {
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();
    if (n <= p) throw RankDeficientError("fewer observations than parameters");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        throw RankDeficientError("design matrix has rank " + std::to_string(qr.rank()) + " < " +
                                 std::to_string(p) + " parameters");
    }
    OlsFit fit;
    fit.coefficients = qr.solve(y);
    const Eigen::VectorXd residuals = y - design * fit.coefficients;
    fit.residual_variance = residuals.squaredNorm() / static_cast<double>(n - p);

    const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd r_inv =
        r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd cov_permuted = r_inv * r_inv.transpose();
    const auto& perm = qr.colsPermutation();
    const Eigen::MatrixXd cov = perm * cov_permuted * perm.transpose();
    fit.standard_errors = (fit.residual_variance * cov.diagonal()).cwiseSqrt();
    return fit;
}

OlsFit ols_fit(const Dataset& dataset) {
    const Roles& roles = dataset.roles();
    const Eigen::Index n = dataset.rows();
    const auto p = static_cast<Eigen::Index>(dataset.parameters());
    Eigen::MatrixXd design(n, p);
    design.col(0).setOnes();
    design.col(1) = dataset.values().col(dataset.column_index(roles.exposure));
    for (std::size_t k = 0; k < roles.confounders.size(); ++k) {
        design.col(static_cast<Eigen::Index>(k) + 2) =
            dataset.values().col(dataset.column_index(roles.confounders[k]));
    }
    OlsFit fit = ols_fit(dataset.values().col(dataset.column_index(roles.outcome)), design);
    fit.terms = {"(intercept)", roles.exposure};
    fit.terms.insert(fit.terms.end(), roles.confounders.begin(), roles.confounders.end());
    return fit;
}

// ---------------------------------------------------------------- error injection

double sample_variance(const Eigen::VectorXd& column) {
    const auto n = column.size();
    if (n < 2) return 0.0;
    const double mean = column.mean();
    return (column.array() - mean).square().sum() / static_cast<double>(n - 1);
}

Dataset inject_error(const Dataset& dataset, const std::vector<std::string>& targets, double tau,
                     RandomStream& stream) {
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be finite and >= 0");
    std::vector<Eigen::Index> columns;
    for (const auto& t : targets) columns.push_back(dataset.column_index(t));
    if (tau == 0.0) return dataset;

    Eigen::MatrixXd values = dataset.values();
    for (Eigen::Index c : columns) {
        const double sd = std::sqrt(tau * sample_variance(dataset.values().col(c)));
        for (Eigen::Index i = 0; i < values.rows(); ++i) values(i, c) += sd * stream.normal();
    }
    return dataset.with_values(std::move(values));
}

// ---------------------------------------------------------------- study

std::vector<ValidationIssue> validate_merror_config(const MErrorConfig& config) {
    std::vector<ValidationIssue> issues;
    const auto role_columns = config.roles.all();
    if (config.roles.outcome.empty()) issues.push_back({"roles.outcome", "outcome column is required"});
    if (config.roles.exposure.empty()) issues.push_back({"roles.exposure", "exposure column is required"});
    {
        std::set<std::string> seen;
        for (const auto& name : role_columns) {
            if (!name.empty() && !seen.insert(name).second) {
                issues.push_back({"roles", "column '" + name + "' is assigned two roles"});
            }
        }
    }
    if (config.targets.empty()) issues.push_back({"targets", "at least one target set is required"});
    for (std::size_t i = 0; i < config.targets.size(); ++i) {
        const std::string path = "targets[" + std::to_string(i) + "]";
        if (config.targets[i].empty()) issues.push_back({path, "target set is empty"});
        std::set<std::string> seen;
        for (const auto& name : config.targets[i]) {
            if (std::find(role_columns.begin(), role_columns.end(), name) == role_columns.end()) {
                issues.push_back({path, "'" + name + "' is not the outcome, exposure or a confounder"});
            }
            if (!seen.insert(name).second) issues.push_back({path, "'" + name + "' listed twice"});
        }
    }
    if (config.tau_grid.empty()) issues.push_back({"tau_grid", "at least one error proportion is required"});
    for (std::size_t i = 0; i < config.tau_grid.size(); ++i) {
        const double tau = config.tau_grid[i];
        const std::string path = "tau_grid[" + std::to_string(i) + "]";
        if (!std::isfinite(tau) || tau < 0.0) {
            issues.push_back({path, "error proportion must be finite and >= 0"});
        } else if (i > 0 && !(tau > config.tau_grid[i - 1])) {
            issues.push_back({path, "tau values must be strictly increasing (sorted, no duplicates)"});
        }
    }
    if (config.replications < 1) issues.push_back({"replications", "replication count must be at least 1"});
    return issues;
}

double quantile(std::vector<double> values, double prob) {
    if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

const MErrorCell* MErrorResults::find(std::size_t target_index, double tau) const noexcept {
    if (target_index >= config.targets.size()) return nullptr;
    for (const auto& c : cells) {
        if (c.target == config.targets[target_index] && c.tau == tau) return &c;
    }
    return nullptr;
}

MErrorResults run_merror_study(const Dataset& input, const MErrorConfig& config, const RunOptions& options,
                               std::int64_t dropped_rows) {
    if (auto issues = validate_merror_config(config); !issues.empty()) throw ValidationError(std::move(issues));
    const auto started = std::chrono::steady_clock::now();
    const std::string started_utc = utc_now_iso8601();

    const Dataset clean = input.roles() == config.roles ? input : input.with_roles(config.roles);
    MErrorResults results;
    results.config = config;
    results.rows = clean.rows();
    results.dropped_rows = dropped_rows;
    results.baseline = ols_fit(clean);
    const double baseline_beta = results.baseline.exposure_coefficient();

    const std::size_t n_taus = config.tau_grid.size();
    const std::size_t n_cells = config.targets.size() * n_taus;
    const auto reps = static_cast<std::size_t>(config.replications);
    std::vector<double> estimates(n_cells * reps, std::numeric_limits<double>::quiet_NaN());
    ProgressTicker ticker(n_cells * reps, options.progress);

    parallel_for(n_cells * reps, resolve_workers(options.workers), options.stop, [&](std::size_t item) {
        const std::size_t cell = item / reps;
        const std::uint64_t rep = item % reps;
        const auto& target = config.targets[cell / n_taus];
        const double tau = config.tau_grid[cell % n_taus];
        RandomStream stream({config.seed, rep, tag_for_cell(StreamPurpose::error_injection, cell)});
        try {
            estimates[item] = ols_fit(inject_error(clean, target, tau, stream)).exposure_coefficient();
        } catch (const RankDeficientError&) {
            // recorded as not estimable (NaN)
        }
        ticker.item_done();
    });

    for (std::size_t cell = 0; cell < n_cells; ++cell) {
        MErrorCell out;
        out.target = config.targets[cell / n_taus];
        out.tau = config.tau_grid[cell % n_taus];
        std::vector<double> ok;
        for (std::size_t rep = 0; rep < reps; ++rep) {
            const double v = estimates[cell * reps + rep];
            if (std::isnan(v)) {
                ++out.not_estimable;
            } else {
                ok.push_back(v);
            }
        }
        out.r_effective = static_cast<std::int64_t>(ok.size());
        if (!ok.empty()) {
            // Shifted by the first value so a constant sample has a bitwise-exact mean.
            double shifted = 0.0;
            for (double v : ok) shifted += v - ok.front();
            const double mean = ok.front() + shifted / static_cast<double>(ok.size());
            double ss = 0.0;
            for (double v : ok) ss += (v - mean) * (v - mean);
            out.mean = mean;
            out.sd = ok.size() > 1 ? std::sqrt(ss / static_cast<double>(ok.size() - 1)) : 0.0;
            out.q025 = quantile(ok, 0.025);
            out.q975 = quantile(ok, 0.975);
            if (baseline_beta != 0.0) out.relative_bias = (mean - baseline_beta) / baseline_beta;
        }
        results.cells.push_back(std::move(out));
    }

    results.provenance.seed = config.seed;
    results.provenance.generator = std::string(kGeneratorId);
    results.provenance.engine_version = std::string(kEngineVersion);
    results.provenance.timing = RunTiming{
        started_utc, std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()};
    return results;
}

}  // namespace transim
