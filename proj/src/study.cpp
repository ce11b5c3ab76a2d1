#include "transim/study.hpp"

namespace transim {

MErrorStudyInput prepare_merror(const MErrorConfig& config, const DataSource& source) {
    if (auto issues = validate_merror_config(config); !issues.empty()) throw ValidationError(std::move(issues));

    if (const auto* csv = std::get_if<CsvText>(&source)) {
        auto loaded = parse_csv(csv->text, config.roles);
        return {config, std::move(loaded.dataset), loaded.dropped_rows};
    }
    if (const auto* path = std::get_if<std::filesystem::path>(&source)) {
        auto loaded = load_csv(*path, config.roles);
        return {config, std::move(loaded.dataset), loaded.dropped_rows};
    }
    const auto& spec = std::get<SyntheticSpec>(source);
    RandomStream stream({spec.seed, 0, static_cast<std::uint64_t>(StreamPurpose::synthetic_data)});
    Dataset synthetic = synth_dataset(spec, stream);
    return {config, synthetic.with_roles(config.roles), 0};
}

ResultDocument run_study(const StudyRequest& request, const RunOptions& options, bool record_timing) {
    ResultDocument doc;
    if (const auto* power = std::get_if<PowerStudyConfig>(&request)) {
        PowerRunOptions power_options;
        static_cast<RunOptions&>(power_options) = options;
        doc.results = run_power_study(*power, power_options);
    } else {
        const auto& m = std::get<MErrorStudyInput>(request);
        doc.results = run_merror_study(m.dataset, m.config, options, m.dropped_rows);
    }
    if (!record_timing) doc.provenance().timing.reset();
    return doc;
}

}  // namespace transim
