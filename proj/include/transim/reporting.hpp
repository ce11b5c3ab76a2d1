#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "transim/config_io.hpp"
#include "transim/merror.hpp"
#include "transim/power_engine.hpp"

namespace transim {

inline constexpr std::string_view kSchemaVersion = "transim.results/1";

enum class StudyKind : std::uint8_t { power, merror };
std::string_view to_string(StudyKind kind) noexcept;

/// A self-describing results file: echoed config, results and provenance.
struct ResultDocument {
    std::string schema_version = std::string(kSchemaVersion);
    std::variant<PowerResults, MErrorResults> results;

    StudyKind kind() const noexcept {
        return std::holds_alternative<PowerResults>(results) ? StudyKind::power : StudyKind::merror;
    }
    const Provenance& provenance() const;
    Provenance& provenance();

    bool operator==(const ResultDocument&) const = default;
};

enum class OutputFormat : std::uint8_t { structured, csv };

Json to_json(const ResultDocument& doc);
/// Throws ValidationError when the document does not follow the schema.
ResultDocument result_document_from_json(const Json& json);

/// Pretty-printed JSON with sorted keys and a trailing newline. The same
/// document always yields the same bytes.
std::string serialize_structured(const ResultDocument& doc);
ResultDocument parse_structured(std::string_view text);

/// One row per (test, N, hypothesis) or per (target set, tau). Numbers use
/// '.' decimals and 17 significant digits; absent values are empty cells.
std::string to_csv(const ResultDocument& doc);

std::string render(const ResultDocument& doc, OutputFormat format);
void write_results(const ResultDocument& doc, const std::filesystem::path& path, OutputFormat format);

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<std::optional<double>> y;
    std::vector<std::optional<double>> y_error;
};

struct PlotData {
    std::string x_label;
    std::string y_label;
    std::vector<PlotSeries> series;
    std::string reference_label;
    double reference_value = 0.0;
};

/// Power documents: one series per test (rejection rate vs total N under
/// `hypothesis`, error bars 1.96 mc_se) and a reference at alpha.
/// Merror documents: one series per target set (mean exposure coefficient vs
/// tau, error bars = sd) and a reference at the baseline coefficient.
PlotData plot_series(const ResultDocument& doc, Hypothesis hypothesis = Hypothesis::h1);
Json to_json(const PlotData& plot);

/// Human-readable table for terminals (power: test x N -> power, type-I).
std::string summary_table(const ResultDocument& doc);

}  // namespace transim
