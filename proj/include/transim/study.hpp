#pragma once

#include <variant>

#include "transim/reporting.hpp"

namespace transim {

/// A measurement-error study ready to run: validated config plus the clean
/// dataset, already restricted to the config's roles.
struct MErrorStudyInput {
    MErrorConfig config;
    Dataset dataset;
    std::int64_t dropped_rows = 0;
};

using StudyRequest = std::variant<PowerStudyConfig, MErrorStudyInput>;

struct CsvText {
    std::string text;
};

/// Where the clean data for a measurement-error study comes from.
using DataSource = std::variant<CsvText, std::filesystem::path, SyntheticSpec>;

/// Validates the config (ValidationError) and loads or synthesizes the data
/// (DataError / IoError). Synthetic data uses stream (spec.seed, 0, synthetic_data).
MErrorStudyInput prepare_merror(const MErrorConfig& config, const DataSource& source);

/// Runs either engine and wraps the results in a ResultDocument. Wall-clock
/// timing is dropped unless `record_timing`, so equal requests give equal bytes.
ResultDocument run_study(const StudyRequest& request, const RunOptions& options = {}, bool record_timing = false);

}  // namespace transim
