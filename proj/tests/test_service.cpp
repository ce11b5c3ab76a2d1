#include <doctest.h>

#include <chrono>
#include <thread>

#include "transim/service.hpp"

// After Eigen: httplib pulls in system headers whose macros upset Eigen's templates.
#include <httplib.h>

using namespace transim;
using namespace std::chrono_literals;

namespace {

Json table1_config(std::int64_t reps, std::vector<std::int64_t> sizes = {40, 80}) {
    return Json{
        {"control", {0.265, 0.275, 0.247, 0.151, 0.020, 0.042}},
        {"intervention", {0.475, 0.180, 0.150, 0.137, 0.018, 0.040}},
        {"total_sizes", sizes},
        {"allocation", {{"control", 1}, {"intervention", 1}}},
        {"tests", {"mann_whitney", "chi_square", "fisher_exact", "prop_odds_wald", "prop_odds_lrt",
                   "dichotomized_chi_square"}},
        {"alpha", 0.05},
        {"replications", reps},
        {"seed", 99},
        {"dichotomization_cut", 1},
    };
}

std::string power_body(std::int64_t reps, std::vector<std::int64_t> sizes = {40, 80}) {
    return Json{{"kind", "power"}, {"config", table1_config(reps, std::move(sizes))}}.dump();
}

struct Fixture {
    explicit Fixture(ServiceOptions o = {}) : service([&] {
        o.port = 0;
        o.workers_per_job = o.workers_per_job ? o.workers_per_job : 2;
        return o;
    }()) {
        port = service.start();
    }
    Service service;
    int port = 0;
    httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

std::string submit(httplib::Client& c, const std::string& body) {
    auto res = c.Post("/api/v1/simulations", body, "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 202);
    return Json::parse(res->body).at("id").get<std::string>();
}

Json wait_for(httplib::Client& c, const std::string& id, const std::string& state) {
    for (int i = 0; i < 6000; ++i) {
        auto res = c.Get("/api/v1/simulations/" + id);
        REQUIRE(res);
        auto j = Json::parse(res->body);
        if (j.at("state") == state) return j;
        if (j.at("state") == "failed") FAIL("job failed: " << j.dump());
        std::this_thread::sleep_for(10ms);
    }
    FAIL("timed out waiting for " << state);
    return {};
}

}  // namespace

TEST_CASE("health") {
    Fixture f;
    auto c = f.client();
    auto res = c.Get("/api/v1/health");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(Json::parse(res->body).at("status") == "ok");
}

TEST_CASE("submit, poll and fetch a power study") {
    Fixture f;
    auto c = f.client();
    auto res = c.Post("/api/v1/simulations", power_body(20), "application/json");
    REQUIRE(res);
    CHECK(res->status == 202);
    const auto body = Json::parse(res->body);
    const auto id = body.at("id").get<std::string>();
    CHECK(id.size() >= 16);
    CHECK(id.find_first_not_of("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_") == std::string::npos);
    CHECK(body.at("status_url") == "/api/v1/simulations/" + id);
    CHECK(res->get_header_value("Location") == "/api/v1/simulations/" + id);

    const auto status = wait_for(c, id, "done");
    CHECK(status.at("progress") == 1.0);
    CHECK(status.at("kind") == "power");

    auto doc = c.Get("/api/v1/simulations/" + id + "/results");
    REQUIRE(doc);
    CHECK(doc->status == 200);
    const auto expected = serialize_structured(run_study(power_config_from_json(table1_config(20))));
    CHECK(doc->body == expected);

    auto csv = c.Get("/api/v1/simulations/" + id + "/results", {{"Accept", "text/csv"}});
    REQUIRE(csv);
    CHECK(csv->get_header_value("Content-Type").find("text/csv") == 0);
    CHECK(csv->body == to_csv(parse_structured(expected)));
    auto csv2 = c.Get("/api/v1/simulations/" + id + "/results?format=csv");
    CHECK(csv2->body == csv->body);

    auto plot = c.Get("/api/v1/simulations/" + id + "/plot?hypothesis=h0");
    REQUIRE(plot);
    CHECK(plot->status == 200);
    const auto pj = Json::parse(plot->body);
    CHECK(pj.at("y_label") == "type-I error");
    CHECK(pj.at("series").size() == 6);
}

TEST_CASE("same config twice gives identical bytes") {
    Fixture f;
    auto c = f.client();
    const auto a = submit(c, power_body(15));
    const auto b = submit(c, power_body(15));
    wait_for(c, a, "done");
    wait_for(c, b, "done");
    CHECK(c.Get("/api/v1/simulations/" + a + "/results")->body == c.Get("/api/v1/simulations/" + b + "/results")->body);
}

TEST_CASE("validation errors are 422 with field paths") {
    Fixture f;
    auto c = f.client();
    auto cfg = table1_config(10);
    cfg["alpha"] = 1.5;
    auto res = c.Post("/api/v1/simulations", Json{{"kind", "power"}, {"config", cfg}}.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 422);
    const auto errors = Json::parse(res->body).at("errors");
    REQUIRE(errors.size() == 1);
    CHECK(errors[0].at("path") == "alpha");

    cfg = table1_config(10);
    cfg["control"][0] = 0.365;
    res = c.Post("/api/v1/simulations", Json{{"kind", "power"}, {"config", cfg}}.dump(), "application/json");
    CHECK(res->status == 422);
    CHECK(Json::parse(res->body).at("errors")[0].at("path") == "control");
}

TEST_CASE("malformed bodies are 400") {
    Fixture f;
    auto c = f.client();
    CHECK(c.Post("/api/v1/simulations", "{not json", "application/json")->status == 400);
    CHECK(c.Post("/api/v1/simulations", "[1]", "application/json")->status == 400);
    CHECK(c.Post("/api/v1/simulations", R"({"kind": "bayes", "config": {}})", "application/json")->status == 422);
}

TEST_CASE("measurement-error submissions with inline CSV") {
    Fixture f;
    auto c = f.client();
    std::string csv = "y,x,bmi\n";
    RandomStream g({1, 2, 3});
    for (int i = 0; i < 200; ++i) {
        const double x = g.normal(), z = 0.5 * x + g.normal();
        csv += std::to_string(x + z + g.normal()) + "," + std::to_string(x) + "," + std::to_string(z) + "\n";
    }
    const Json cfg{{"roles", {{"outcome", "y"}, {"exposure", "x"}, {"confounders", {"bmi"}}}},
                   {"targets", {{"x"}, {"bmi"}}},
                   {"tau_grid", {0, 0.5}},
                   {"replications", 10},
                   {"seed", 3}};
    const auto id = submit(c, Json{{"kind", "merror"}, {"config", cfg}, {"data", csv}}.dump());
    wait_for(c, id, "done");
    const auto doc = parse_structured(c.Get("/api/v1/simulations/" + id + "/results")->body);
    CHECK(doc.kind() == StudyKind::merror);
    CHECK(std::get<MErrorResults>(doc.results).cells.size() == 4);

    auto bad = cfg;
    bad["roles"]["confounders"] = {"age"};
    bad["targets"] = {{"x"}};
    auto res = c.Post("/api/v1/simulations", Json{{"kind", "merror"}, {"config", bad}, {"data", csv}}.dump(),
                      "application/json");
    CHECK(res->status == 422);
    CHECK(Json::parse(res->body).at("errors")[0].at("path") == "data");

    const Json synth{{"n", 500}, {"covariates", {"x", "bmi"}}, {"covariance", {{1, 0.6}, {0.6, 1}}},
                     {"coefficients", {1, 1}}, {"seed", 4}};
    const auto sid = submit(c, Json{{"kind", "merror"}, {"config", cfg}, {"synthetic", synth}}.dump());
    wait_for(c, sid, "done");
}

TEST_CASE("unknown ids are 404; unfinished results are 409") {
    Fixture f;
    auto c = f.client();
    CHECK(c.Get("/api/v1/simulations/doesnotexist00000000")->status == 404);
    CHECK(c.Get("/api/v1/simulations/doesnotexist00000000/results")->status == 404);
    CHECK(c.Delete("/api/v1/simulations/doesnotexist00000000")->status == 404);

    const auto id = submit(c, power_body(3000, {200}));
    CHECK(c.Get("/api/v1/simulations/" + id + "/results")->status == 409);
    CHECK(c.Delete("/api/v1/simulations/" + id)->status == 202);
    wait_for(c, id, "cancelled");
    CHECK(c.Get("/api/v1/simulations/" + id + "/results")->status == 409);
    CHECK(c.Get("/api/v1/simulations/" + id + "/plot")->status == 409);
}

TEST_CASE("progress never decreases while polling; cancel stops within a tick") {
    ServiceOptions o;
    o.workers_per_job = 1;
    Fixture f(o);
    auto c = f.client();
    const auto id = submit(c, power_body(2000, {200}));
    double last = 0.0;
    int increases = 0;
    const auto deadline = std::chrono::steady_clock::now() + 120s;
    while (std::chrono::steady_clock::now() < deadline) {
        const auto j = Json::parse(c.Get("/api/v1/simulations/" + id)->body);
        const double p = j.at("progress").get<double>();
        CHECK(p >= last);
        if (p > last) ++increases;
        last = p;
        if (p >= 0.05) break;
        std::this_thread::sleep_for(20ms);
    }
    CHECK(increases >= 2);
    REQUIRE(c.Delete("/api/v1/simulations/" + id)->status == 202);
    const auto status = wait_for(c, id, "cancelled");
    // One worker: at most one replication finishes after the request, so the
    // reported progress stays within one 1% tick of where it was.
    CHECK(status.at("progress").get<double>() <= last + 0.02);
}

TEST_CASE("queue bound gives 429") {
    ServiceOptions o;
    o.queue_limit = 8;
    Fixture f(o);
    auto c = f.client();
    std::vector<std::string> ids;
    for (int i = 0; i < 8; ++i) ids.push_back(submit(c, power_body(5000, {400})));
    auto res = c.Post("/api/v1/simulations", power_body(10), "application/json");
    REQUIRE(res);
    CHECK(res->status == 429);
    // Queued jobs cancel at once and free their slots.
    CHECK(c.Delete("/api/v1/simulations/" + ids.back())->status == 202);
    CHECK(Json::parse(c.Get("/api/v1/simulations/" + ids.back())->body).at("state") == "cancelled");
    const auto again = c.Post("/api/v1/simulations", power_body(10), "application/json");
    CHECK(again->status == 202);
    for (const auto& id : ids) c.Delete("/api/v1/simulations/" + id);
}

TEST_CASE("status polls answer while a job runs") {
    Fixture f;
    auto c = f.client();
    const auto id = submit(c, power_body(2000, {200}));
    wait_for(c, id, "running");
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 20; ++i) CHECK(c.Get("/api/v1/simulations/" + id)->status == 200);
    CHECK(std::chrono::steady_clock::now() - t0 < 5s);
    c.Delete("/api/v1/simulations/" + id);
}

TEST_CASE("finished jobs beyond the history limit are evicted") {
    ServiceOptions o;
    o.history_limit = 2;
    Fixture f(o);
    auto c = f.client();
    std::vector<std::string> ids;
    for (int i = 0; i < 3; ++i) {
        ids.push_back(submit(c, power_body(2)));
        wait_for(c, ids.back(), "done");
    }
    CHECK(c.Get("/api/v1/simulations/" + ids[0])->status == 404);
    CHECK(c.Get("/api/v1/simulations/" + ids[2])->status == 200);
}

TEST_CASE("root without assets answers with a pointer to the API") {
    Fixture f;
    auto c = f.client();
    auto res = c.Get("/");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body.find("/api/v1") != std::string::npos);
}

TEST_CASE("ServiceOptions from the environment") {
    setenv("TRANSIM_PORT", "9999", 1);
    setenv("TRANSIM_QUEUE_LIMIT", "3", 1);
    const auto o = ServiceOptions::from_env();
    CHECK(o.port == 9999);
    CHECK(o.queue_limit == 3);
    CHECK(o.history_limit == 100);
    unsetenv("TRANSIM_PORT");
    unsetenv("TRANSIM_QUEUE_LIMIT");
}
