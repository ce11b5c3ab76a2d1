#include "transim/config_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace transim {

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Json parse_config_text(std::string_view text) {
    try {
        return Json::parse(text.begin(), text.end(), nullptr, /*allow_exceptions=*/true,
                           /*ignore_comments=*/true);
    } catch (const Json::parse_error& e) {
        throw ValidationError("(document)", std::string("not valid JSON: ") + e.what());
    }
}

namespace {

std::string join_path(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

// Reads typed fields from one JSON object, recording every problem instead
// of stopping at the first.
class FieldReader {
public:
    FieldReader(const Json& obj, std::string prefix, std::vector<ValidationIssue>& issues)
        : obj_(obj), prefix_(std::move(prefix)), issues_(issues) {
        if (!obj_.is_object()) fail("", "expected an object");
    }

    bool ok_object() const { return obj_.is_object(); }

    const Json* get(const std::string& key, bool required) {
        known_.insert(key);
        if (!obj_.is_object()) return nullptr;
        const auto it = obj_.find(key);
        if (it == obj_.end() || it->is_null()) {
            if (required) fail(key, "is required");
            return nullptr;
        }
        return &*it;
    }

    void number(const std::string& key, double& out, bool required = true) {
        if (const Json* v = get(key, required)) {
            if (v->is_number()) out = v->get<double>();
            else fail(key, "expected a number");
        }
    }

    void integer(const std::string& key, std::int64_t& out, bool required = true) {
        if (const Json* v = get(key, required)) read_integer(*v, key, out);
    }

    void seed(const std::string& key, std::uint64_t& out) {
        const Json* v = get(key, true);
        if (!v) return;
        if (v->is_number_unsigned()) {
            out = v->get<std::uint64_t>();
        } else if (v->is_number_integer()) {
            const auto i = v->get<std::int64_t>();
            if (i < 0) fail(key, "seed must be non-negative");
            else out = static_cast<std::uint64_t>(i);
        } else if (v->is_string()) {
            const auto s = v->get<std::string>();
            try {
                std::size_t used = 0;
                out = std::stoull(s, &used);
                if (used != s.size() || s.starts_with('-')) fail(key, "seed string must be a decimal integer");
            } catch (const std::exception&) {
                fail(key, "seed string must be a decimal integer");
            }
        } else {
            fail(key, "expected a non-negative integer");
        }
    }

    void text(const std::string& key, std::string& out, bool required = true) {
        if (const Json* v = get(key, required)) {
            if (v->is_string()) out = v->get<std::string>();
            else fail(key, "expected a string");
        }
    }

    void numbers(const std::string& key, std::vector<double>& out, bool required = true) {
        if (const Json* v = get(key, required)) read_numbers(*v, key, out);
    }

    void integers(const std::string& key, std::vector<std::int64_t>& out) {
        const Json* v = get(key, true);
        if (!v) return;
        if (!v->is_array()) return fail(key, "expected an array of integers");
        out.clear();
        for (std::size_t i = 0; i < v->size(); ++i) {
            std::int64_t x = 0;
            if (read_integer((*v)[i], key + "[" + std::to_string(i) + "]", x)) out.push_back(x);
        }
    }

    void strings(const std::string& key, std::vector<std::string>& out, bool required = true) {
        if (const Json* v = get(key, required)) read_strings(*v, key, out);
    }

    void read_numbers(const Json& v, const std::string& path, std::vector<double>& out) {
        if (!v.is_array()) return fail(path, "expected an array of numbers");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i].is_number()) out.push_back(v[i].get<double>());
            else fail(path + "[" + std::to_string(i) + "]", "expected a number");
        }
    }

    void read_strings(const Json& v, const std::string& path, std::vector<std::string>& out) {
        if (!v.is_array()) return fail(path, "expected an array of strings");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i].is_string()) out.push_back(v[i].get<std::string>());
            else fail(path + "[" + std::to_string(i) + "]", "expected a string");
        }
    }

    /// Reports keys that no reader asked for (usually typos).
    void reject_unknown() {
        if (!obj_.is_object()) return;
        for (const auto& [key, _] : obj_.items()) {
            if (!known_.contains(key)) fail(key, "unknown key");
        }
    }

    void fail(const std::string& key, std::string message) {
        issues_.push_back({key.empty() ? (prefix_.empty() ? "(document)" : prefix_) : join_path(prefix_, key),
                           std::move(message)});
    }

    const std::string& prefix() const { return prefix_; }

private:
    bool read_integer(const Json& v, const std::string& path, std::int64_t& out) {
        if (v.is_number_integer()) {
            if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
                fail(path, "integer out of range");
                return false;
            }
            out = v.get<std::int64_t>();
            return true;
        }
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9e15) {
                out = static_cast<std::int64_t>(d);
                return true;
            }
        }
        fail(path, "expected an integer");
        return false;
    }

    const Json& obj_;
    std::string prefix_;
    std::vector<ValidationIssue>& issues_;
    std::set<std::string> known_;
};

void throw_if(std::vector<ValidationIssue>& issues) {
    if (!issues.empty()) throw ValidationError(std::move(issues));
}

}  // namespace

// ---------------------------------------------------------------- power

PowerStudyConfig power_config_from_json(const Json& doc) {
    std::vector<ValidationIssue> issues;
    PowerStudyConfig config;
    FieldReader r(doc, "", issues);
    r.numbers("control", config.control);
    r.numbers("intervention", config.intervention);
    r.integers("total_sizes", config.total_sizes);

    if (const Json* alloc = r.get("allocation", false)) {
        FieldReader ar(*alloc, "allocation", issues);
        std::int64_t a = 1, b = 1;
        ar.integer("control", a);
        ar.integer("intervention", b);
        ar.reject_unknown();
        if (a < 1 || b < 1) {
            issues.push_back({"allocation", "weights must be positive integers"});
        } else {
            config.allocation = AllocationRatio(a, b);
        }
    }

    std::vector<std::string> test_names;
    r.strings("tests", test_names);
    for (std::size_t i = 0; i < test_names.size(); ++i) {
        if (auto id = parse_test_id(test_names[i])) {
            config.tests.push_back(*id);
        } else {
            issues.push_back({"tests[" + std::to_string(i) + "]", "unknown test '" + test_names[i] + "'"});
        }
    }
    std::sort(config.tests.begin(), config.tests.end());
    config.tests.erase(std::unique(config.tests.begin(), config.tests.end()), config.tests.end());

    r.number("alpha", config.alpha);
    r.integer("replications", config.replications);
    r.seed("seed", config.seed);
    std::int64_t cut = 0;
    if (r.get("dichotomization_cut", false)) {
        r.integer("dichotomization_cut", cut, false);
        config.dichotomization_cut = static_cast<int>(std::clamp<std::int64_t>(cut, -1, 1 << 20));
    }
    r.reject_unknown();
    throw_if(issues);
    return config;
}

Json to_json(const PowerStudyConfig& c) {
    Json tests = Json::array();
    for (TestId t : c.tests) tests.push_back(std::string(to_string(t)));
    return Json{
        {"control", c.control},
        {"intervention", c.intervention},
        {"total_sizes", c.total_sizes},
        {"allocation", {{"control", c.allocation.control_weight()}, {"intervention", c.allocation.intervention_weight()}}},
        {"tests", tests},
        {"alpha", c.alpha},
        {"replications", c.replications},
        {"seed", c.seed},
        {"dichotomization_cut", c.dichotomization_cut ? Json(*c.dichotomization_cut) : Json(nullptr)},
    };
}

// ---------------------------------------------------------------- merror

MErrorConfig merror_config_from_json(const Json& doc) {
    std::vector<ValidationIssue> issues;
    MErrorConfig config;
    FieldReader r(doc, "", issues);
    if (const Json* roles = r.get("roles", true)) {
        FieldReader rr(*roles, "roles", issues);
        rr.text("outcome", config.roles.outcome);
        rr.text("exposure", config.roles.exposure);
        rr.strings("confounders", config.roles.confounders, false);
        rr.reject_unknown();
    }
    if (const Json* targets = r.get("targets", true)) {
        if (!targets->is_array()) {
            issues.push_back({"targets", "expected an array of column-name arrays"});
        } else {
            for (std::size_t i = 0; i < targets->size(); ++i) {
                std::vector<std::string> set;
                r.read_strings((*targets)[i], "targets[" + std::to_string(i) + "]", set);
                config.targets.push_back(std::move(set));
            }
        }
    }
    r.numbers("tau_grid", config.tau_grid);
    r.integer("replications", config.replications);
    r.seed("seed", config.seed);
    r.reject_unknown();
    throw_if(issues);
    return config;
}

Json to_json(const MErrorConfig& c) {
    return Json{
        {"roles", {{"outcome", c.roles.outcome}, {"exposure", c.roles.exposure}, {"confounders", c.roles.confounders}}},
        {"targets", c.targets},
        {"tau_grid", c.tau_grid},
        {"replications", c.replications},
        {"seed", c.seed},
    };
}

// ---------------------------------------------------------------- synthetic

SyntheticSpec synthetic_spec_from_json(const Json& doc) {
    std::vector<ValidationIssue> issues;
    SyntheticSpec spec;
    FieldReader r(doc, "", issues);
    r.integer("n", spec.n);
    r.text("outcome", spec.outcome, false);
    r.strings("covariates", spec.covariates);
    if (const Json* cov = r.get("covariance", true)) {
        if (!cov->is_array()) {
            issues.push_back({"covariance", "expected an array of rows"});
        } else {
            const auto p = static_cast<Eigen::Index>(cov->size());
            spec.covariance = Eigen::MatrixXd::Zero(p, p);
            for (Eigen::Index i = 0; i < p; ++i) {
                std::vector<double> row;
                const std::string path = "covariance[" + std::to_string(i) + "]";
                const std::size_t before = issues.size();
                r.read_numbers((*cov)[static_cast<std::size_t>(i)], path, row);
                if (issues.size() != before) continue;
                if (static_cast<Eigen::Index>(row.size()) != p) {
                    issues.push_back({path, "row length must equal the number of rows"});
                    continue;
                }
                for (Eigen::Index j = 0; j < p; ++j) spec.covariance(i, j) = row[static_cast<std::size_t>(j)];
            }
        }
    }
    r.numbers("means", spec.means, false);
    r.number("intercept", spec.intercept, false);
    r.numbers("coefficients", spec.coefficients);
    r.number("noise_sd", spec.noise_sd, false);
    r.seed("seed", spec.seed);
    r.reject_unknown();
    throw_if(issues);
    return spec;
}

Json to_json(const SyntheticSpec& s) {
    Json cov = Json::array();
    for (Eigen::Index i = 0; i < s.covariance.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < s.covariance.cols(); ++j) row.push_back(s.covariance(i, j));
        cov.push_back(row);
    }
    Json out{
        {"n", s.n},
        {"outcome", s.outcome},
        {"covariates", s.covariates},
        {"covariance", cov},
        {"intercept", s.intercept},
        {"coefficients", s.coefficients},
        {"noise_sd", s.noise_sd},
        {"seed", s.seed},
    };
    if (!s.means.empty()) out["means"] = s.means;
    return out;
}

}  // namespace transim
