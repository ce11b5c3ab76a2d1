#include "transim/service.hpp"

#include <atomic>
#include <cstdlib>
#include <random>

#include <httplib.h>

namespace transim {

namespace {

std::string make_job_id() {
    static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
    thread_local std::random_device device;
    std::string id(22, '?');
    for (auto& c : id) c = kAlphabet[device() & 63u];
    return id;
}

template <typename T>
T env_or(const char* name, T fallback) {
    const char* raw = std::getenv(name);
    if (!raw || !*raw) return fallback;
    try {
        if constexpr (std::is_same_v<T, std::string>) {
            return raw;
        } else {
            const long long v = std::stoll(raw);
            return v < 0 ? fallback : static_cast<T>(v);
        }
    } catch (const std::exception&) {
        return fallback;
    }
}

Json issues_json(const std::vector<ValidationIssue>& issues) {
    Json errors = Json::array();
    for (const auto& i : issues) errors.push_back({{"path", i.path}, {"message", i.message}});
    return Json{{"errors", errors}};
}

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(2) + "\n", "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, Json{{"error", message}});
}

bool wants_csv(const httplib::Request& req) {
    if (req.has_param("format")) return req.get_param_value("format") == "csv";
    const auto accept = req.get_header_value("Accept");
    return accept.find("text/csv") != std::string::npos;
}

}  // namespace

ServiceOptions ServiceOptions::from_env() {
    ServiceOptions o;
    o.host = env_or<std::string>("TRANSIM_HOST", o.host);
    o.port = env_or<int>("TRANSIM_PORT", o.port);
    o.queue_limit = env_or<std::size_t>("TRANSIM_QUEUE_LIMIT", o.queue_limit);
    o.history_limit = env_or<std::size_t>("TRANSIM_HISTORY_LIMIT", o.history_limit);
    o.job_concurrency = env_or<unsigned>("TRANSIM_JOB_CONCURRENCY", o.job_concurrency);
    o.workers_per_job = env_or<unsigned>("TRANSIM_THREADS", o.workers_per_job);
    o.static_dir = env_or<std::string>("TRANSIM_STATIC_DIR", "");
    return o;
}

std::string_view to_string(JobState state) noexcept {
    switch (state) {
        case JobState::queued: return "queued";
        case JobState::running: return "running";
        case JobState::done: return "done";
        case JobState::failed: return "failed";
        case JobState::cancelled: return "cancelled";
    }
    return "unknown";
}

// ---------------------------------------------------------------- submission parsing

StudyRequest parse_submission(std::string_view body) {
    Json j;
    try {
        j = Json::parse(body.begin(), body.end());
    } catch (const Json::parse_error& e) {
        throw std::invalid_argument(std::string("body is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("body must be a JSON object");
    if (!j.contains("config") || !j["config"].is_object()) {
        throw ValidationError("config", "a config object is required");
    }
    const std::string kind = j.value("kind", "");
    if (kind == "power") {
        auto config = power_config_from_json(j["config"]);
        require_valid(config);
        return config;
    }
    if (kind == "merror") {
        const auto config = merror_config_from_json(j["config"]);
        if (auto issues = validate_merror_config(config); !issues.empty()) throw ValidationError(std::move(issues));
        DataSource source;
        if (j.contains("data") && j["data"].is_string()) {
            source = CsvText{j["data"].get<std::string>()};
        } else if (j.contains("synthetic") && j["synthetic"].is_object()) {
            try {
                source = synthetic_spec_from_json(j["synthetic"]);
            } catch (ValidationError& e) {
                auto issues = e.issues();
                for (auto& i : issues) i.path = "synthetic." + i.path;
                throw ValidationError(std::move(issues));
            }
        } else {
            throw ValidationError("data", "merror studies need inline CSV 'data' or a 'synthetic' spec");
        }
        try {
            return prepare_merror(config, source);
        } catch (const DataError& e) {
            throw ValidationError("data", e.what());
        }
    }
    throw ValidationError("kind", "kind must be 'power' or 'merror'");
}

// ---------------------------------------------------------------- jobs

struct JobManager::Job {
    std::string id;
    StudyKind kind{};
    JobState state = JobState::queued;
    std::atomic<double> progress{0.0};
    std::string submitted_utc, started_utc, finished_utc;
    std::string error;
    std::optional<StudyRequest> request;
    std::shared_ptr<const ResultDocument> document;
    std::stop_source stop;
};

JobManager::JobManager(const ServiceOptions& options) : options_(options) {
    const unsigned runners = std::max(1u, options_.job_concurrency);
    for (unsigned i = 0; i < runners; ++i) {
        runners_.emplace_back([this](std::stop_token st) { run_loop(st); });
    }
}

JobManager::~JobManager() { shutdown(); }

void JobManager::shutdown() {
    {
        std::lock_guard lock(mutex_);
        for (auto& [_, job] : jobs_) job->stop.request_stop();
    }
    for (auto& r : runners_) r.request_stop();
    wake_.notify_all();
    runners_.clear();
}

std::string JobManager::submit(StudyRequest request) {
    auto job = std::make_shared<Job>();
    job->kind = std::holds_alternative<PowerStudyConfig>(request) ? StudyKind::power : StudyKind::merror;
    job->request = std::move(request);
    job->submitted_utc = utc_now_iso8601();
    {
        std::lock_guard lock(mutex_);
        if (active_ >= options_.queue_limit) throw QueueFull();
        do {
            job->id = make_job_id();
        } while (jobs_.contains(job->id));
        jobs_.emplace(job->id, job);
        queue_.push_back(job->id);
        ++active_;
    }
    wake_.notify_one();
    return job->id;
}

Json JobManager::status_json(const Job& job) {
    auto ts = [](const std::string& s) { return s.empty() ? Json(nullptr) : Json(s); };
    Json j{
        {"id", job.id},
        {"kind", std::string(to_string(job.kind))},
        {"state", std::string(to_string(job.state))},
        {"progress", job.progress.load()},
        {"submitted_at", ts(job.submitted_utc)},
        {"started_at", ts(job.started_utc)},
        {"finished_at", ts(job.finished_utc)},
        {"error", job.error.empty() ? Json(nullptr) : Json(job.error)},
    };
    return j;
}

std::optional<Json> JobManager::status(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return status_json(*it->second);
}

std::pair<JobManager::Lookup, std::shared_ptr<const ResultDocument>> JobManager::result(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) return {Lookup::unknown, nullptr};
    if (it->second->state != JobState::done) return {Lookup::not_ready, nullptr};
    return {Lookup::ok, it->second->document};
}

bool JobManager::cancel(const std::string& id) {
    std::shared_ptr<Job> job;
    {
        std::lock_guard lock(mutex_);
        const auto it = jobs_.find(id);
        if (it == jobs_.end()) return false;
        job = it->second;
        if (job->state == JobState::queued) {
            queue_.erase(std::find(queue_.begin(), queue_.end(), id));
            job->state = JobState::cancelled;
            job->finished_utc = utc_now_iso8601();
            job->request.reset();
            --active_;
            finished_order_.push_back(id);
        } else if (job->state == JobState::running) {
            job->stop.request_stop();
        }
    }
    return true;
}

// Caller holds mutex_.
void JobManager::finish(const std::shared_ptr<Job>& job) {
    job->finished_utc = utc_now_iso8601();
    job->request.reset();
    --active_;
    finished_order_.push_back(job->id);
    while (finished_order_.size() > options_.history_limit) {
        jobs_.erase(finished_order_.front());
        finished_order_.pop_front();
    }
}

void JobManager::run_loop(std::stop_token stop) {
    for (;;) {
        std::shared_ptr<Job> job;
        {
            std::unique_lock lock(mutex_);
            if (!wake_.wait(lock, stop, [this] { return !queue_.empty(); })) return;
            job = jobs_.at(queue_.front());
            queue_.pop_front();
            job->state = JobState::running;
            job->started_utc = utc_now_iso8601();
        }

        RunOptions run;
        run.workers = options_.workers_per_job;
        run.stop = job->stop.get_token();
        run.progress = [raw = job.get()](double f) { raw->progress.store(f); };

        std::shared_ptr<const ResultDocument> document;
        std::string error;
        bool cancelled = false;
        try {
            document = std::make_shared<const ResultDocument>(run_study(*job->request, run));
        } catch (const Cancelled&) {
            cancelled = true;
        } catch (const std::exception& e) {
            error = e.what();
        }

        std::lock_guard lock(mutex_);
        if (cancelled) {
            job->state = JobState::cancelled;
        } else if (!error.empty()) {
            job->state = JobState::failed;
            job->error = error;
        } else {
            job->document = std::move(document);
            job->progress.store(1.0);
            job->state = JobState::done;
        }
        finish(job);
    }
}

// ---------------------------------------------------------------- HTTP

Service::Service(ServiceOptions options)
    : options_(std::move(options)),
      jobs_(std::make_unique<JobManager>(options_)),
      server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

Service::~Service() { stop(); }

void Service::install_routes() {
    auto& svr = *server_;
    svr.set_payload_max_length(std::size_t{256} << 20);
    const std::string id_pattern = R"(/api/v1/simulations/([A-Za-z0-9_\-]+))";

    svr.Get("/api/v1/health", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, Json{{"status", "ok"}, {"engine_version", std::string(kEngineVersion)}});
    });

    svr.Post("/api/v1/simulations", [this](const httplib::Request& req, httplib::Response& res) {
        StudyRequest request;
        try {
            request = parse_submission(req.body);
        } catch (const std::invalid_argument& e) {
            return send_error(res, 400, e.what());
        } catch (const ValidationError& e) {
            return send_json(res, 422, issues_json(e.issues()));
        }
        try {
            const std::string id = jobs_->submit(std::move(request));
            const std::string url = "/api/v1/simulations/" + id;
            res.set_header("Location", url);
            send_json(res, 202, Json{{"id", id}, {"status_url", url}, {"results_url", url + "/results"}});
        } catch (const QueueFull&) {
            send_error(res, 429, "job queue is full; retry later");
        }
    });

    svr.Get(id_pattern, [this](const httplib::Request& req, httplib::Response& res) {
        if (auto status = jobs_->status(req.matches[1])) return send_json(res, 200, *status);
        send_error(res, 404, "unknown simulation id");
    });

    svr.Delete(id_pattern, [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        if (!jobs_->cancel(id)) return send_error(res, 404, "unknown simulation id");
        send_json(res, 202, jobs_->status(id).value_or(Json{{"id", id}}));
    });

    svr.Get(id_pattern + "/results", [this](const httplib::Request& req, httplib::Response& res) {
        const auto [lookup, doc] = jobs_->result(req.matches[1]);
        if (lookup == JobManager::Lookup::unknown) return send_error(res, 404, "unknown simulation id");
        if (lookup == JobManager::Lookup::not_ready) return send_error(res, 409, "results are not available");
        if (wants_csv(req)) {
            res.set_content(to_csv(*doc), "text/csv");
        } else {
            res.set_content(serialize_structured(*doc), "application/json");
        }
    });

    svr.Get(id_pattern + "/plot", [this](const httplib::Request& req, httplib::Response& res) {
        const auto [lookup, doc] = jobs_->result(req.matches[1]);
        if (lookup == JobManager::Lookup::unknown) return send_error(res, 404, "unknown simulation id");
        if (lookup == JobManager::Lookup::not_ready) return send_error(res, 409, "results are not available");
        const auto h = req.get_param_value("hypothesis") == "h0" ? Hypothesis::h0 : Hypothesis::h1;
        send_json(res, 200, to_json(plot_series(*doc, h)));
    });

    if (!options_.static_dir.empty() && std::filesystem::is_directory(options_.static_dir)) {
        svr.set_mount_point("/", options_.static_dir.string());
    } else {
        svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("transim service: the API lives under /api/v1 (no web UI assets mounted)\n",
                            "text/plain");
        });
    }
}

int Service::start() {
    if (options_.port == 0) {
        bound_port_ = server_->bind_to_any_port(options_.host);
    } else {
        bound_port_ = server_->bind_to_port(options_.host, options_.port) ? options_.port : -1;
    }
    if (bound_port_ < 0) throw IoError("cannot bind " + options_.host + ":" + std::to_string(options_.port));
    listener_ = std::jthread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound_port_;
}

bool Service::run() {
    if (options_.port == 0) return false;
    return server_->listen(options_.host, options_.port);
}

void Service::stop() {
    if (server_) server_->stop();
    if (listener_.joinable()) listener_.join();
    if (jobs_) jobs_->shutdown();
}

}  // namespace transim
