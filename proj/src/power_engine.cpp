#include "transim/power_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "transim/po_model.hpp"

namespace transim {

namespace {

enum Outcome : std::uint8_t { kNonRejection = 0, kRejection = 1, kNotEstimable = 2 };

Outcome classify(const TestResult& r, double alpha) {
    if (r.status != TestStatus::ok || !r.p_value) return kNotEstimable;
    return *r.p_value <= alpha ? kRejection : kNonRejection;
}

bool uses_po_fit(const std::vector<TestId>& tests) {
    return std::any_of(tests.begin(), tests.end(), [](TestId t) {
        return t == TestId::prop_odds_wald || t == TestId::prop_odds_lrt;
    });
}

}  // namespace

std::string_view to_string(Hypothesis h) noexcept { return h == Hypothesis::h1 ? "h1" : "h0"; }

const PowerCell* PowerResults::find(TestId test, std::int64_t total_n) const noexcept {
    for (const auto& c : cells) {
        if (c.test == test && c.total_n == total_n) return &c;
    }
    return nullptr;
}

std::optional<double> mc_standard_error(double p_hat, std::int64_t r_effective) {
    if (r_effective <= 0) return std::nullopt;
    return std::sqrt(p_hat * (1.0 - p_hat) / static_cast<double>(r_effective));
}

RejectionSummary summarize_rejections(std::int64_t rejections, std::int64_t non_rejections,
                                      std::int64_t not_estimable) {
    RejectionSummary s;
    s.rejections = rejections;
    s.non_rejections = non_rejections;
    s.not_estimable = not_estimable;
    s.r_effective = rejections + non_rejections;
    if (s.r_effective > 0) {
        const double p = static_cast<double>(rejections) / static_cast<double>(s.r_effective);
        s.estimate = p;
        s.mc_se = mc_standard_error(p, s.r_effective);
        s.ci_low = std::max(0.0, p - 1.96 * *s.mc_se);
        s.ci_high = std::min(1.0, p + 1.96 * *s.mc_se);
    }
    return s;
}

std::vector<TestResult> apply_tests(const PowerStudyConfig& config, const ArmCounts& control,
                                    const ArmCounts& intervention, RandomStream& fisher_stream) {
    std::optional<PoFit> fit;
    if (uses_po_fit(config.tests)) fit = fit_proportional_odds(control, intervention);

    std::vector<TestResult> out;
    out.reserve(config.tests.size());
    for (TestId id : config.tests) {
        switch (id) {
            case TestId::mann_whitney: out.push_back(mann_whitney(control, intervention)); break;
            case TestId::chi_square: out.push_back(chi_square(control, intervention)); break;
            case TestId::fisher_exact:
                out.push_back(fisher_exact(control, intervention, fisher_stream));
                break;
            case TestId::prop_odds_wald: out.push_back(po_wald_test(fit)); break;
            case TestId::prop_odds_lrt: out.push_back(po_lrt_test(fit)); break;
            case TestId::dichotomized_chi_square:
                out.push_back(dichotomized_chi_square(control, intervention, config.dichotomization_cut.value()));
                break;
        }
    }
    return out;
}

PowerResults run_power_study(const PowerStudyConfig& config, const PowerRunOptions& options) {
    require_valid(config);
    const auto started = std::chrono::steady_clock::now();
    const std::string started_utc = utc_now_iso8601();

    const OrdinalDistribution control(config.control);
    const OrdinalDistribution intervention(config.intervention);
    const std::size_t n_sizes = config.total_sizes.size();
    const std::size_t n_tests = config.tests.size();
    const auto reps = static_cast<std::size_t>(config.replications);
    const std::size_t items = n_sizes * reps;

    std::vector<ArmSizes> sizes;
    for (auto n : config.total_sizes) sizes.push_back(arm_sizes(n, config.allocation));

    // outcomes[item][test][hypothesis]
    std::vector<std::uint8_t> outcomes(items * n_tests * 2, kNotEstimable);
    ProgressTicker ticker(items, options.progress);

    auto run_tests = [&](const ArmCounts& a, const ArmCounts& b, RandomStream& fisher) {
        if (!options.test_override) return apply_tests(config, a, b, fisher);
        std::vector<TestResult> r;
        for (TestId id : config.tests) r.push_back(options.test_override(id, a, b, fisher));
        return r;
    };

    parallel_for(items, resolve_workers(options.workers), options.stop, [&](std::size_t item) {
        const std::size_t s = item / reps;
        const std::uint64_t rep = item % reps;
        const ArmSizes& arms = sizes[s];

        RandomStream h1_stream({config.seed, rep, tag_for_cell(StreamPurpose::h1_sampling, s)});
        const ArmCounts h1_control = sample_arm(control, arms.control, h1_stream);
        const ArmCounts h1_intervention = sample_arm(intervention, arms.intervention, h1_stream);

        RandomStream h0_stream({config.seed, rep, tag_for_cell(StreamPurpose::h0_sampling, s)});
        const ArmCounts h0_control = sample_arm(control, arms.control, h0_stream);
        const ArmCounts h0_intervention = sample_arm(control, arms.intervention, h0_stream);

        RandomStream fisher_h1({config.seed, rep, tag_for_cell(StreamPurpose::fisher_mc_h1, s)});
        RandomStream fisher_h0({config.seed, rep, tag_for_cell(StreamPurpose::fisher_mc_h0, s)});
        const auto r1 = run_tests(h1_control, h1_intervention, fisher_h1);
        const auto r0 = run_tests(h0_control, h0_intervention, fisher_h0);

        std::uint8_t* slot = outcomes.data() + item * n_tests * 2;
        for (std::size_t t = 0; t < n_tests; ++t) {
            slot[2 * t] = classify(r1[t], config.alpha);
            slot[2 * t + 1] = classify(r0[t], config.alpha);
        }
        ticker.item_done();
    });

    PowerResults results;
    results.config = config;
    for (std::size_t t = 0; t < n_tests; ++t) {
        for (std::size_t s = 0; s < n_sizes; ++s) {
            std::int64_t tally[2][3] = {};
            for (std::size_t rep = 0; rep < reps; ++rep) {
                const std::uint8_t* slot = outcomes.data() + (s * reps + rep) * n_tests * 2 + 2 * t;
                ++tally[0][slot[0]];
                ++tally[1][slot[1]];
            }
            PowerCell cell;
            cell.test = config.tests[t];
            cell.total_n = config.total_sizes[s];
            cell.n_control = sizes[s].control;
            cell.n_intervention = sizes[s].intervention;
            cell.h1 = summarize_rejections(tally[0][kRejection], tally[0][kNonRejection], tally[0][kNotEstimable]);
            cell.h0 = summarize_rejections(tally[1][kRejection], tally[1][kNonRejection], tally[1][kNotEstimable]);
            results.cells.push_back(cell);
        }
    }

    results.provenance.seed = config.seed;
    results.provenance.generator = std::string(kGeneratorId);
    results.provenance.engine_version = std::string(kEngineVersion);
    results.provenance.timing = RunTiming{
        started_utc,
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()};
    return results;
}

}  // namespace transim
