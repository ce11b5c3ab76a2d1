#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "transim/study.hpp"

namespace httplib {
class Server;
}

namespace transim {

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 8787;                 // 0 picks a free port
    std::size_t queue_limit = 8;     // queued + running jobs
    std::size_t history_limit = 100; // finished jobs kept in memory
    unsigned job_concurrency = 1;    // jobs running at once
    unsigned workers_per_job = 0;    // 0 = hardware concurrency
    std::filesystem::path static_dir;

    /// Defaults overridden by TRANSIM_HOST, TRANSIM_PORT, TRANSIM_QUEUE_LIMIT,
    /// TRANSIM_HISTORY_LIMIT, TRANSIM_JOB_CONCURRENCY, TRANSIM_THREADS and
    /// TRANSIM_STATIC_DIR.
    static ServiceOptions from_env();
};

enum class JobState : std::uint8_t { queued, running, done, failed, cancelled };
std::string_view to_string(JobState state) noexcept;

class QueueFull : public std::runtime_error {
public:
    QueueFull() : std::runtime_error("job queue is full") {}
};

/// In-memory job table plus the runner threads that execute studies.
/// All public members are safe to call concurrently; status reads never wait
/// on a running study.
class JobManager {
public:
    explicit JobManager(const ServiceOptions& options);
    ~JobManager();

    JobManager(const JobManager&) = delete;
    JobManager& operator=(const JobManager&) = delete;

    /// Enqueues a validated request. Throws QueueFull at the bound.
    std::string submit(StudyRequest request);

    /// Job status as JSON; nullopt for unknown ids.
    std::optional<Json> status(const std::string& id) const;

    enum class Lookup { ok, unknown, not_ready };
    /// Finished result document (shared, immutable).
    std::pair<Lookup, std::shared_ptr<const ResultDocument>> result(const std::string& id) const;

    /// Requests cooperative cancellation. Queued jobs are cancelled at once.
    bool cancel(const std::string& id);

    void shutdown();

private:
    struct Job;

    void run_loop(std::stop_token stop);
    void finish(const std::shared_ptr<Job>& job);
    static Json status_json(const Job& job);

    ServiceOptions options_;
    mutable std::mutex mutex_;
    std::condition_variable_any wake_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;
    std::deque<std::string> queue_;
    std::deque<std::string> finished_order_;
    std::size_t active_ = 0;  // queued + running
    std::vector<std::jthread> runners_;
};

/// HTTP facade over JobManager: JSON API under /api/v1, static UI under /.
class Service {
public:
    explicit Service(ServiceOptions options);
    ~Service();

    /// Binds and serves on a background thread; returns the bound port.
    int start();
    /// Binds and serves on the calling thread until stop().
    bool run();
    void stop();

    JobManager& jobs() noexcept { return *jobs_; }

private:
    void install_routes();

    ServiceOptions options_;
    std::unique_ptr<JobManager> jobs_;
    std::unique_ptr<httplib::Server> server_;
    std::jthread listener_;
    int bound_port_ = 0;
};

/// Parses and validates a POST /api/v1/simulations body. Throws
/// ValidationError (422) with per-field paths such as "alpha" or "data", or
/// std::invalid_argument (400) for bodies that are not JSON objects.
StudyRequest parse_submission(std::string_view body);

}  // namespace transim
