// transim: batch and service entry point.
//
//   transim power  --config study.jsonc [--seed S] [--threads T] [--out PATH] [--format structured|csv] [--quiet]
//   transim merror --config study.jsonc (--data data.csv | --synthetic spec.jsonc) [same flags]
//   transim serve  [--host H] [--port P] [--static-dir DIR] [--threads T]
//
// Exit codes: 0 success, 1 invalid configuration, 2 I/O or data error.

#include <pthread.h>

#include <csignal>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "transim/service.hpp"
#include "transim/study.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitIo = 2;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    std::string out;
    std::string format = "structured";
    bool quiet = false;
    bool timing = false;
};

void add_common(CLI::App& cmd, CommonFlags& f) {
    cmd.add_option("--config", f.config, "Study config document (JSON with comments)")->required();
    cmd.add_option("--seed", f.seed, "Override the config's master seed");
    cmd.add_option("--threads", f.threads, "Worker threads (default: all cores)");
    cmd.add_option("--out", f.out, "Results file (default: results.json or results.csv)");
    cmd.add_option("--format", f.format, "Results format")->check(CLI::IsMember({"structured", "csv"}));
    cmd.add_flag("--quiet", f.quiet, "Do not print the summary table");
    cmd.add_flag("--timing", f.timing, "Record start time and wall time in the results document");
}

void report(const transim::ValidationError& e) {
    for (const auto& issue : e.issues()) std::cerr << "error: " << issue.path << ": " << issue.message << '\n';
}

int finish(const transim::StudyRequest& request, const CommonFlags& f) {
    transim::RunOptions run;
    run.workers = f.threads;
    const auto doc = transim::run_study(request, run, f.timing);
    const auto format = f.format == "csv" ? transim::OutputFormat::csv : transim::OutputFormat::structured;
    const std::string out = !f.out.empty() ? f.out : (format == transim::OutputFormat::csv ? "results.csv" : "results.json");
    transim::write_results(doc, out, format);
    if (!f.quiet) std::cout << transim::summary_table(doc);
    std::cerr << "wrote " << out << '\n';
    return kExitOk;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const transim::ValidationError& e) {
        report(e);
        return kExitInvalid;
    } catch (const transim::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const transim::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    }
}

int cmd_power(const CommonFlags& f) {
    return guarded([&] {
        auto config = transim::power_config_from_json(transim::parse_config_text(transim::read_text_file(f.config)));
        if (f.seed) config.seed = *f.seed;
        transim::require_valid(config);
        return finish(config, f);
    });
}

int cmd_merror(const CommonFlags& f, const std::string& data, const std::string& synthetic) {
    return guarded([&] {
        auto config = transim::merror_config_from_json(transim::parse_config_text(transim::read_text_file(f.config)));
        if (f.seed) config.seed = *f.seed;
        if (auto issues = transim::validate_merror_config(config); !issues.empty()) {
            throw transim::ValidationError(std::move(issues));
        }
        transim::DataSource source;
        if (!data.empty()) {
            source = std::filesystem::path(data);
        } else {
            source = transim::synthetic_spec_from_json(transim::parse_config_text(transim::read_text_file(synthetic)));
        }
        return finish(transim::prepare_merror(config, source), f);
    });
}

int cmd_serve(transim::ServiceOptions options) {
    return guarded([&] {
        transim::Service service(std::move(options));
        std::cerr << "transim service listening on port " << service.start() << '\n';
        // start() serves on a background thread; park here until stop().
        sigset_t set;
        sigemptyset(&set);
        sigaddset(&set, SIGINT);
        sigaddset(&set, SIGTERM);
        int sig = 0;
        sigwait(&set, &sig);
        service.stop();
        return kExitOk;
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"transim - simulation workbench for ordinal-endpoint power and measurement-error studies"};
    app.require_subcommand(1);

    CommonFlags power_flags;
    auto* power = app.add_subcommand("power", "Empirical power and type-I error for a two-arm ordinal trial");
    add_common(*power, power_flags);

    CommonFlags merror_flags;
    std::string data, synthetic;
    auto* merror = app.add_subcommand("merror", "Bias of a regression coefficient under covariate measurement error");
    add_common(*merror, merror_flags);
    auto* data_opt = merror->add_option("--data", data, "CSV file with a header row");
    auto* synth_opt = merror->add_option("--synthetic", synthetic, "Synthetic dataset spec document");
    data_opt->excludes(synth_opt);
    synth_opt->excludes(data_opt);

    auto serve_options = transim::ServiceOptions::from_env();
    auto* serve = app.add_subcommand("serve", "Run the HTTP service (API under /api/v1)");
    serve->add_option("--host", serve_options.host, "Bind address");
    serve->add_option("--port", serve_options.port, "Port (env TRANSIM_PORT, default 8787)");
    serve->add_option("--static-dir", serve_options.static_dir, "Web UI assets served under /");
    serve->add_option("--threads", serve_options.workers_per_job, "Worker threads per job");
    serve->add_option("--queue-limit", serve_options.queue_limit, "Queued plus running jobs");
    serve->add_option("--history-limit", serve_options.history_limit, "Finished jobs kept in memory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInvalid;
    }

    if (power->parsed()) return cmd_power(power_flags);
    if (merror->parsed()) {
        if (data.empty() && synthetic.empty()) {
            std::cerr << "error: merror needs --data or --synthetic\n";
            return kExitInvalid;
        }
        return cmd_merror(merror_flags, data, synthetic);
    }
    // serve blocks SIGINT/SIGTERM for sigwait; block before threads start.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    return cmd_serve(serve_options);
}
