#include "transim/reporting.hpp"

#include <cstdio>
#include <iomanip>
#include <sstream>

namespace transim {

std::string_view to_string(StudyKind kind) noexcept { return kind == StudyKind::power ? "power" : "merror"; }

const Provenance& ResultDocument::provenance() const {
    return std::visit([](const auto& r) -> const Provenance& { return r.provenance; }, results);
}

Provenance& ResultDocument::provenance() {
    return std::visit([](auto& r) -> Provenance& { return r.provenance; }, results);
}

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> read_opt(const Json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<double>();
}

Json to_json(const RejectionSummary& s) {
    return Json{
        {"rejections", s.rejections}, {"non_rejections", s.non_rejections},
        {"not_estimable", s.not_estimable}, {"r_effective", s.r_effective},
        {"estimate", opt(s.estimate)}, {"mc_se", opt(s.mc_se)},
        {"ci_low", opt(s.ci_low)}, {"ci_high", opt(s.ci_high)},
    };
}

RejectionSummary rejection_from_json(const Json& j) {
    RejectionSummary s;
    s.rejections = j.at("rejections").get<std::int64_t>();
    s.non_rejections = j.at("non_rejections").get<std::int64_t>();
    s.not_estimable = j.at("not_estimable").get<std::int64_t>();
    s.r_effective = j.at("r_effective").get<std::int64_t>();
    s.estimate = read_opt(j, "estimate");
    s.mc_se = read_opt(j, "mc_se");
    s.ci_low = read_opt(j, "ci_low");
    s.ci_high = read_opt(j, "ci_high");
    return s;
}

Json to_json(const Provenance& p) {
    Json j{{"seed", p.seed}, {"generator", p.generator}, {"engine_version", p.engine_version}};
    if (p.timing) {
        j["timing"] = {{"started_utc", p.timing->started_utc}, {"wall_time_seconds", p.timing->wall_time_seconds}};
    }
    return j;
}

Provenance provenance_from_json(const Json& j) {
    Provenance p;
    p.seed = j.at("seed").get<std::uint64_t>();
    p.generator = j.at("generator").get<std::string>();
    p.engine_version = j.at("engine_version").get<std::string>();
    if (const auto it = j.find("timing"); it != j.end() && !it->is_null()) {
        p.timing = RunTiming{it->at("started_utc").get<std::string>(), it->at("wall_time_seconds").get<double>()};
    }
    return p;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json power_results_json(const PowerResults& r) {
    Json cells = Json::array();
    for (const auto& c : r.cells) {
        cells.push_back(Json{
            {"test", std::string(to_string(c.test))},
            {"total_n", c.total_n},
            {"n_control", c.n_control},
            {"n_intervention", c.n_intervention},
            {"h1", to_json(c.h1)},
            {"h0", to_json(c.h0)},
        });
    }
    return Json{{"cells", cells}};
}

Json merror_results_json(const MErrorResults& r) {
    Json cells = Json::array();
    for (const auto& c : r.cells) {
        cells.push_back(Json{
            {"target", c.target}, {"tau", c.tau},
            {"r_effective", c.r_effective}, {"not_estimable", c.not_estimable},
            {"mean", opt(c.mean)}, {"sd", opt(c.sd)},
            {"q025", opt(c.q025)}, {"q975", opt(c.q975)},
            {"relative_bias", opt(c.relative_bias)},
        });
    }
    return Json{
        {"rows", r.rows},
        {"dropped_rows", r.dropped_rows},
        {"baseline", {{"terms", r.baseline.terms},
                      {"coefficients", to_std(r.baseline.coefficients)},
                      {"standard_errors", to_std(r.baseline.standard_errors)},
                      {"residual_variance", r.baseline.residual_variance}}},
        {"cells", cells},
    };
}

std::string csv_number(const std::optional<double>& v) {
    if (!v) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace

Json to_json(const ResultDocument& doc) {
    Json j{{"schema_version", doc.schema_version}, {"kind", std::string(to_string(doc.kind()))}};
    if (const auto* p = std::get_if<PowerResults>(&doc.results)) {
        j["config"] = to_json(p->config);
        j["provenance"] = to_json(p->provenance);
        j["results"] = power_results_json(*p);
    } else {
        const auto& m = std::get<MErrorResults>(doc.results);
        j["config"] = to_json(m.config);
        j["provenance"] = to_json(m.provenance);
        j["results"] = merror_results_json(m);
    }
    return j;
}

ResultDocument result_document_from_json(const Json& j) {
    try {
        ResultDocument doc;
        doc.schema_version = j.at("schema_version").get<std::string>();
        if (doc.schema_version != kSchemaVersion) {
            throw ValidationError("schema_version", "unsupported schema '" + doc.schema_version + "'");
        }
        const auto kind = j.at("kind").get<std::string>();
        const Json& res = j.at("results");
        if (kind == "power") {
            PowerResults r;
            r.config = power_config_from_json(j.at("config"));
            r.provenance = provenance_from_json(j.at("provenance"));
            for (const auto& c : res.at("cells")) {
                PowerCell cell;
                const auto name = c.at("test").get<std::string>();
                const auto id = parse_test_id(name);
                if (!id) throw ValidationError("results.cells", "unknown test '" + name + "'");
                cell.test = *id;
                cell.total_n = c.at("total_n").get<std::int64_t>();
                cell.n_control = c.at("n_control").get<std::int64_t>();
                cell.n_intervention = c.at("n_intervention").get<std::int64_t>();
                cell.h1 = rejection_from_json(c.at("h1"));
                cell.h0 = rejection_from_json(c.at("h0"));
                r.cells.push_back(cell);
            }
            doc.results = std::move(r);
        } else if (kind == "merror") {
            MErrorResults r;
            r.config = merror_config_from_json(j.at("config"));
            r.provenance = provenance_from_json(j.at("provenance"));
            r.rows = res.at("rows").get<std::int64_t>();
            r.dropped_rows = res.at("dropped_rows").get<std::int64_t>();
            const Json& b = res.at("baseline");
            r.baseline.terms = b.at("terms").get<std::vector<std::string>>();
            r.baseline.coefficients = to_eigen(b.at("coefficients").get<std::vector<double>>());
            r.baseline.standard_errors = to_eigen(b.at("standard_errors").get<std::vector<double>>());
            r.baseline.residual_variance = b.at("residual_variance").get<double>();
            for (const auto& c : res.at("cells")) {
                MErrorCell cell;
                cell.target = c.at("target").get<std::vector<std::string>>();
                cell.tau = c.at("tau").get<double>();
                cell.r_effective = c.at("r_effective").get<std::int64_t>();
                cell.not_estimable = c.at("not_estimable").get<std::int64_t>();
                cell.mean = read_opt(c, "mean");
                cell.sd = read_opt(c, "sd");
                cell.q025 = read_opt(c, "q025");
                cell.q975 = read_opt(c, "q975");
                cell.relative_bias = read_opt(c, "relative_bias");
                r.cells.push_back(std::move(cell));
            }
            doc.results = std::move(r);
        } else {
            throw ValidationError("kind", "unknown study kind '" + kind + "'");
        }
        return doc;
    } catch (const Json::exception& e) {
        throw ValidationError("(document)", std::string("malformed results document: ") + e.what());
    }
}

std::string serialize_structured(const ResultDocument& doc) { return to_json(doc).dump(2) + "\n"; }

ResultDocument parse_structured(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text.begin(), text.end());
    } catch (const Json::parse_error& e) {
        throw ValidationError("(document)", std::string("not valid JSON: ") + e.what());
    }
    return result_document_from_json(j);
}

std::string to_csv(const ResultDocument& doc) {
    std::ostringstream os;
    if (const auto* p = std::get_if<PowerResults>(&doc.results)) {
        os << "test,total_n,n_control,n_intervention,hypothesis,estimate,mc_se,ci_low,ci_high,"
              "rejections,non_rejections,not_estimable,r_effective\n";
        for (const auto& c : p->cells) {
            for (Hypothesis h : {Hypothesis::h1, Hypothesis::h0}) {
                const auto& s = c.at(h);
                os << to_string(c.test) << ',' << c.total_n << ',' << c.n_control << ',' << c.n_intervention
                   << ',' << to_string(h) << ',' << csv_number(s.estimate) << ',' << csv_number(s.mc_se) << ','
                   << csv_number(s.ci_low) << ',' << csv_number(s.ci_high) << ',' << s.rejections << ','
                   << s.non_rejections << ',' << s.not_estimable << ',' << s.r_effective << '\n';
            }
        }
    } else {
        const auto& m = std::get<MErrorResults>(doc.results);
        os << "target,tau,mean,sd,q025,q975,relative_bias,r_effective,not_estimable\n";
        for (const auto& c : m.cells) {
            os << csv_field(join(c.target, "+")) << ',' << csv_number(c.tau) << ',' << csv_number(c.mean) << ','
               << csv_number(c.sd) << ',' << csv_number(c.q025) << ',' << csv_number(c.q975) << ','
               << csv_number(c.relative_bias) << ',' << c.r_effective << ',' << c.not_estimable << '\n';
        }
    }
    return os.str();
}

std::string render(const ResultDocument& doc, OutputFormat format) {
    return format == OutputFormat::csv ? to_csv(doc) : serialize_structured(doc);
}

void write_results(const ResultDocument& doc, const std::filesystem::path& path, OutputFormat format) {
    write_text_file(path, render(doc, format));
}

PlotData plot_series(const ResultDocument& doc, Hypothesis hypothesis) {
    PlotData plot;
    if (const auto* p = std::get_if<PowerResults>(&doc.results)) {
        plot.x_label = "total sample size";
        plot.y_label = hypothesis == Hypothesis::h1 ? "power" : "type-I error";
        plot.reference_label = "alpha";
        plot.reference_value = p->config.alpha;
        for (TestId test : p->config.tests) {
            PlotSeries s;
            s.label = std::string(to_string(test));
            for (const auto& c : p->cells) {
                if (c.test != test) continue;
                const auto& r = c.at(hypothesis);
                s.x.push_back(static_cast<double>(c.total_n));
                s.y.push_back(r.estimate);
                s.y_error.push_back(r.mc_se ? std::optional<double>(1.96 * *r.mc_se) : std::nullopt);
            }
            plot.series.push_back(std::move(s));
        }
    } else {
        const auto& m = std::get<MErrorResults>(doc.results);
        plot.x_label = "error variance proportion (tau)";
        plot.y_label = "mean exposure coefficient";
        plot.reference_label = "baseline";
        plot.reference_value = m.baseline.exposure_coefficient();
        for (const auto& target : m.config.targets) {
            PlotSeries s;
            s.label = join(target, "+");
            for (const auto& c : m.cells) {
                if (c.target != target) continue;
                s.x.push_back(c.tau);
                s.y.push_back(c.mean);
                s.y_error.push_back(c.sd);
            }
            plot.series.push_back(std::move(s));
        }
    }
    return plot;
}

Json to_json(const PlotData& plot) {
    Json series = Json::array();
    for (const auto& s : plot.series) {
        Json y = Json::array(), err = Json::array();
        for (const auto& v : s.y) y.push_back(opt(v));
        for (const auto& v : s.y_error) err.push_back(opt(v));
        series.push_back(Json{{"label", s.label}, {"x", s.x}, {"y", y}, {"y_error", err}});
    }
    return Json{
        {"x_label", plot.x_label},
        {"y_label", plot.y_label},
        {"series", series},
        {"reference", {{"label", plot.reference_label}, {"value", plot.reference_value}}},
    };
}

std::string summary_table(const ResultDocument& doc) {
    std::ostringstream os;
    auto fixed = [](const std::optional<double>& v, int digits) {
        if (!v) return std::string("NA");
        std::ostringstream s;
        s << std::fixed << std::setprecision(digits) << *v;
        return s.str();
    };
    if (const auto* p = std::get_if<PowerResults>(&doc.results)) {
        os << std::left << std::setw(25) << "test" << std::right << std::setw(8) << "N" << std::setw(10)
           << "power" << std::setw(10) << "+/-1.96se" << std::setw(10) << "type-I" << std::setw(10) << "+/-1.96se"
           << std::setw(9) << "NE(H1)" << std::setw(9) << "NE(H0)" << '\n';
        for (const auto& c : p->cells) {
            auto half = [](const RejectionSummary& s) {
                return s.mc_se ? std::optional<double>(1.96 * *s.mc_se) : std::nullopt;
            };
            os << std::left << std::setw(25) << to_string(c.test) << std::right << std::setw(8) << c.total_n
               << std::setw(10) << fixed(c.h1.estimate, 4) << std::setw(10) << fixed(half(c.h1), 4)
               << std::setw(10) << fixed(c.h0.estimate, 4) << std::setw(10) << fixed(half(c.h0), 4)
               << std::setw(9) << c.h1.not_estimable << std::setw(9) << c.h0.not_estimable << '\n';
        }
    } else {
        const auto& m = std::get<MErrorResults>(doc.results);
        os << "baseline exposure coefficient (" << m.config.roles.exposure
           << "): " << fixed(m.baseline.exposure_coefficient(), 6) << "  (n = " << m.rows;
        if (m.dropped_rows > 0) os << ", dropped " << m.dropped_rows << " incomplete rows";
        os << ")\n";
        os << std::left << std::setw(24) << "target" << std::right << std::setw(8) << "tau" << std::setw(12)
           << "mean" << std::setw(12) << "sd" << std::setw(12) << "q2.5%" << std::setw(12) << "q97.5%"
           << std::setw(11) << "rel.bias" << std::setw(6) << "NE" << '\n';
        for (const auto& c : m.cells) {
            os << std::left << std::setw(24) << join(c.target, "+") << std::right << std::setw(8)
               << fixed(c.tau, 3) << std::setw(12) << fixed(c.mean, 6) << std::setw(12) << fixed(c.sd, 6)
               << std::setw(12) << fixed(c.q025, 6) << std::setw(12) << fixed(c.q975, 6) << std::setw(11)
               << fixed(c.relative_bias, 4) << std::setw(6) << c.not_estimable << '\n';
        }
    }
    return os.str();
}

}  // namespace transim
