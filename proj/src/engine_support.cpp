#include "transim/engine_support.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <exception>
#include <thread>
#include <vector>

namespace transim {

std::string utc_now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

unsigned resolve_workers(unsigned requested) noexcept {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

ProgressTicker::ProgressTicker(std::size_t total, ProgressSink sink)
    : total_(total), sink_(std::move(sink)) {}

void ProgressTicker::item_done() {
    const std::size_t done = done_.fetch_add(1, std::memory_order_relaxed) + 1;
    if (!sink_ || total_ == 0) return;
    const int percent = static_cast<int>(done * 100 / total_);
    std::lock_guard lock(emit_mutex_);
    if (percent > last_percent_) {
        last_percent_ = percent;
        sink_(done >= total_ ? 1.0 : static_cast<double>(percent) / 100.0);
    }
}

void parallel_for(std::size_t count, unsigned workers, std::stop_token stop,
                  const std::function<void(std::size_t)>& body) {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto work = [&] {
        for (;;) {
            if (failed.load(std::memory_order_relaxed) || stop.stop_requested()) return;
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };

    const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (n == 1) {
        work();
    } else {
        std::vector<std::jthread> threads;
        threads.reserve(n);
        for (unsigned t = 0; t < n; ++t) threads.emplace_back(work);
    }
    if (error) std::rethrow_exception(error);
    if (stop.stop_requested() && next.load() < count) throw Cancelled();
}

}  // namespace transim
