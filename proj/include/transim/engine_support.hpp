#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <string_view>

namespace transim {

inline constexpr std::string_view kEngineVersion = "0.1.0";

/// Wall-clock facts about a run. Kept separate from the rest of the
/// provenance because they differ between otherwise identical runs.
struct RunTiming {
    std::string started_utc;  // ISO-8601
    double wall_time_seconds = 0.0;

    bool operator==(const RunTiming&) const = default;
};

struct Provenance {
    std::uint64_t seed = 0;
    std::string generator;
    std::string engine_version;
    std::optional<RunTiming> timing;

    bool operator==(const Provenance&) const = default;
};

/// Receives completed-work fractions in [0, 1]. The engines serialize calls,
/// so a sink never sees a smaller value after a larger one.
using ProgressSink = std::function<void(double)>;

struct RunOptions {
    unsigned workers = 0;  // 0 = hardware concurrency
    ProgressSink progress;
    std::stop_token stop;
};

/// Thrown by the engines when `RunOptions::stop` is requested mid-run.
class Cancelled : public std::runtime_error {
public:
    Cancelled() : std::runtime_error("run cancelled") {}
};

std::string utc_now_iso8601();

unsigned resolve_workers(unsigned requested) noexcept;

/// Emits progress at most once per 1% of `total` completed items.
class ProgressTicker {
public:
    ProgressTicker(std::size_t total, ProgressSink sink);

    void item_done();

private:
    std::size_t total_;
    ProgressSink sink_;
    std::atomic<std::size_t> done_{0};
    std::mutex emit_mutex_;
    int last_percent_ = -1;
};

/// Runs body(i) for i in [0, count) on `workers` threads. Items are claimed
/// in order from a shared counter; stop is checked before each claim. The
/// first exception thrown by a body stops the run and is rethrown here.
/// Throws Cancelled if stop was requested before all items finished.
void parallel_for(std::size_t count, unsigned workers, std::stop_token stop,
                  const std::function<void(std::size_t)>& body);

}  // namespace transim
