#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <fstream>
#include <thread>

#include "cluster_route/backends.hpp"
#include "cluster_route/parallel.hpp"
#include "support.hpp"

using namespace cluster_route;
using namespace test_support;
using json = nlohmann::json;

namespace {

QueryRecord query(std::string id, std::size_t cluster, std::string gold = "42") {
  QueryRecord q;
  q.id = std::move(id);
  q.text = "what is " + q.id;
  q.gold = std::move(gold);
  q.dataset = "d";
  q.sim_cluster = cluster;
  return q;
}

SimulatedModel sim(std::string id, std::vector<double> acc, std::uint64_t seed = 1) {
  SimulatedModel m;
  m.id = std::move(id);
  m.cluster_accuracy = std::move(acc);
  m.seed = seed;
  return m;
}

struct FakeChatServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> requests{0};
  int fail_status = 0;  // when non-zero, every request fails with it
  std::string last_body;
  std::string last_auth;

  FakeChatServer() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      if (fail_status) {
        res.status = fail_status;
        return;
      }
      json reply{{"choices", json::array({json{{"message", json{{"role", "assistant"}, {"content", "OK"}}}}})}};
      res.set_content(reply.dump(), "application/json");
    });
    server.Get("/v1/models", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"data":[]})", "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeChatServer() {
    server.stop();
    thread.join();
  }
  ModelEndpoint endpoint(std::string id = "remote") const {
    ModelEndpoint e;
    e.id = std::move(id);
    e.base_url = "http://127.0.0.1:" + std::to_string(port);
    e.model_name = "served-name";
    e.timeout_ms = 2000;
    return e;
  }
};

}  // namespace

TEST_CASE("simulated extremes") {
  const auto always = sim("a", {1.0});
  const auto never = sim("b", {0.0});
  for (int i = 0; i < 100; ++i) {
    const auto q = query("q" + std::to_string(i), 0, "gold-" + std::to_string(i));
    CHECK(simulate_complete(always, q, i % 7) == "Answer: " + q.gold);
    CHECK(simulate_complete(never, q, i % 7).find(q.gold) == std::string::npos);
  }
}

TEST_CASE("simulated accuracy follows the law of large numbers") {
  const auto m = sim("p", {0.6}, 99);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    for (std::size_t r = 0; r < 10; ++r) hits += simulated_correct(m, "d/q" + std::to_string(i), 0, r) ? 1 : 0;
  }
  CHECK(static_cast<double>(hits) / 10000.0 == doctest::Approx(0.6).epsilon(0.01 / 0.6));
}

TEST_CASE("simulated wrong answers are stable across rounds and differ across models") {
  const auto a = sim("a", {0.0}, 5);
  const auto b = sim("b", {0.0}, 5);
  const auto q = query("q", 0);
  CHECK(simulate_complete(a, q, 0) == simulate_complete(a, q, 3));
  CHECK(simulate_complete(a, q, 0) != simulate_complete(b, q, 0));
  CHECK(simulate_complete(a, q, 0).rfind("Answer: WRONG-", 0) == 0);
}

TEST_CASE("simulated model needs a cluster label in range") {
  const auto m = sim("a", {0.5, 0.5});
  auto q = query("q", 2);
  CHECK(error_code_of([&] { simulate_complete(m, q, 0); }) == Errc::ClusterOutOfRange);
  q.sim_cluster.reset();
  CHECK(error_code_of([&] { simulate_complete(m, q, 0); }) == Errc::InvalidArgument);
}

TEST_CASE("registry bookkeeping") {
  ModelRegistry r;
  r.add(sim("b", {1.0}));
  r.add(sim("a", {1.0}));
  CHECK(error_code_of([&] { r.add(sim("a", {0.0})); }) == Errc::DuplicateModel);
  CHECK(r.ids() == std::vector<std::string>{"a", "b"});
  CHECK(error_code_of([&] { r.at("zzz"); }) == Errc::UnknownModel);
  CHECK(r.subset({"b"}).ids() == std::vector<std::string>{"b"});
  CHECK(error_code_of([&] { r.subset({"nope"}); }) == Errc::UnknownModel);
}

TEST_CASE("http completion round trip") {
  FakeChatServer srv;
  const auto ep = srv.endpoint();
  CHECK(chat_complete(ep, "hi", SamplingParams::voting(), 0) == "OK");
  const json body = json::parse(srv.last_body);
  CHECK(body["model"] == "served-name");
  CHECK(body["messages"][0]["content"] == "hi");
  CHECK(body["temperature"] == 0.7);
  CHECK(body["top_p"] == 1.0);
  CHECK(srv.last_auth.empty());
}

TEST_CASE("request body carries the sampling parameters verbatim") {
  ModelEndpoint ep;
  ep.id = "m";
  ep.model_name = "m";
  const json vote = json::parse(build_chat_request(ep, "x", SamplingParams::voting()));
  CHECK(vote["temperature"].get<double>() == 0.7);
  CHECK(vote["top_p"].get<double>() == 1.0);
  const json direct = json::parse(build_chat_request(ep, "x", SamplingParams::direct()));
  CHECK(direct["temperature"].get<double>() == 0.2);
  CHECK(direct["top_p"].get<double>() == 1.0);
}

TEST_CASE("persistent 500s exhaust the retries") {
  FakeChatServer srv;
  srv.fail_status = 500;
  RetryPolicy fast{3, 1};
  CHECK(error_code_of([&] { chat_complete(srv.endpoint(), "hi", SamplingParams::direct(), 0, fast); }) ==
        Errc::BackendFailure);
  CHECK(srv.requests.load() == 3);
}

TEST_CASE("client errors are not retried") {
  FakeChatServer srv;
  srv.fail_status = 400;
  RetryPolicy fast{3, 1};
  CHECK(error_code_of([&] { chat_complete(srv.endpoint(), "hi", SamplingParams::direct(), 0, fast); }) ==
        Errc::BackendFailure);
  CHECK(srv.requests.load() == 1);
}

TEST_CASE("api keys come from the environment") {
  FakeChatServer srv;
  auto ep = srv.endpoint();
  ep.api_key_env = "CLUSTER_ROUTE_TEST_MODEL_KEY";
  ::unsetenv("CLUSTER_ROUTE_TEST_MODEL_KEY");
  CHECK(error_code_of([&] { chat_complete(ep, "hi", SamplingParams::direct(), 0); }) == Errc::AuthMissing);
  ::setenv("CLUSTER_ROUTE_TEST_MODEL_KEY", "k1", 1);
  CHECK(chat_complete(ep, "hi", SamplingParams::direct(), 0) == "OK");
  CHECK(srv.last_auth == "Bearer k1");
  ::unsetenv("CLUSTER_ROUTE_TEST_MODEL_KEY");
}

TEST_CASE("registry backend dispatches, logs and traces") {
  FakeChatServer srv;
  TempDir dir;
  ModelRegistry r;
  r.add(sim("sim", {1.0}));
  r.add(srv.endpoint("remote"));
  BackendOptions opts;
  opts.record_requests = true;
  opts.trace_path = dir.file("trace.jsonl");
  RegistryBackend be(r, opts);
  const auto q = query("q1", 0, "7");
  CHECK(be.complete("sim", q, SamplingParams::voting(), 0) == "Answer: 7");
  CHECK(be.complete("remote", q, SamplingParams::direct(), 0) == "OK");
  CHECK(error_code_of([&] { be.complete("ghost", q, SamplingParams::direct(), 0); }) == Errc::UnknownModel);
  const auto log = be.request_log();
  REQUIRE(log.size() == 2);
  CHECK(log[0].temperature == 0.7);
  CHECK(log[1].temperature == 0.2);
  CHECK(json::parse(log[1].body)["temperature"] == 0.2);

  std::ifstream in(dir.file("trace.jsonl"));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const json rec = json::parse(line);
    CHECK(rec.contains("request_hash"));
    CHECK(rec.contains("latency_ms"));
    CHECK(rec["status"] == 200);
    ++lines;
  }
  CHECK(lines == 2);
}

TEST_CASE("per-model concurrency bound is enforced") {
  ModelRegistry r;
  auto m = sim("slow", {1.0});
  m.max_parallel = 2;
  m.latency_ms = {5, 5};
  r.add(m);
  RegistryBackend be(r);
  const auto q = query("q", 0);
  parallel_for(40, 8, [&](std::size_t i) { be.complete("slow", q, SamplingParams::voting(), i); });
  CHECK(be.peak_in_flight("slow") <= 2);
  CHECK(be.peak_in_flight("slow") >= 1);
}

TEST_CASE("health probes") {
  FakeChatServer srv;
  ModelRegistry r;
  r.add(sim("s1", {1.0}));
  r.add(sim("s2", {1.0}));
  auto all = registry_health(r);
  CHECK(all.size() == 2);
  for (const auto& h : all) CHECK(h.state == HealthState::Healthy);

  r.add(srv.endpoint("alive"));
  ModelEndpoint dead;
  dead.id = "dead";
  dead.base_url = "http://127.0.0.1:1";
  dead.model_name = "x";
  r.add(dead);
  const auto report = registry_health(r, 300);
  std::vector<std::string> ids;
  for (const auto& h : report) {
    ids.push_back(h.model_id);
    CHECK(h.state == (h.model_id == "dead" ? HealthState::Unreachable : HealthState::Healthy));
  }
  CHECK(ids == r.ids());
}
