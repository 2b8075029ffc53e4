#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <future>
#include <set>

#include "cluster_route/clustering.hpp"
#include "cluster_route/ensemble.hpp"
#include "cluster_route/gateway.hpp"
#include "cluster_route/persist.hpp"
#include "cluster_route/profiling.hpp"
#include "cluster_route/simulation.hpp"
#include "support.hpp"

using namespace cluster_route;
using namespace test_support;
using json = nlohmann::json;

namespace {

// Two snapshots over one simulated world: v1 lacks the last model, v2 adds it.
struct World {
  SyntheticWorld world;
  std::shared_ptr<const Embedder> embedder = std::make_shared<const Embedder>(EmbedderConfig::mock(128, 5));
  std::shared_ptr<RegistryBackend> backend;
  StoreSnapshot v1, v2;
  TempDir dir;
  std::string store_path;

  World() {
    SyntheticWorldSpec spec;
    spec.topics = 4;
    spec.queries_per_topic = 15;
    spec.vocabulary_per_topic = 20;
    spec.words_per_query = 10;
    spec.accuracy = dominant_accuracy(4, 4, 0.6, 0.3);
    // The late model is best everywhere, so adding it moves every route.
    spec.accuracy.push_back({1.0, 1.0, 1.0, 1.0});
    world = make_world(spec);
    backend = std::make_shared<RegistryBackend>(world.registry);
    std::vector<std::string> texts;
    for (const auto& q : world.queries) texts.push_back(q.text);
    FitOptions fo;
    fo.embedder_id = embedder->id();
    fo.restarts = 10;
    const auto cm = fit(embedder->embed_batch(texts), 4, 42, fo);
    CalibrationOptions opts;
    opts.created_at = "2026-01-01T00:00:00Z";
    std::vector<std::string> first(world.model_ids.begin(), world.model_ids.end() - 1);
    v1 = std::make_shared<const ProfileStore>(calibrate(first, *backend, world.queries, *embedder, cm, opts));
    v2 = std::make_shared<const ProfileStore>(
        add_model(*v1, world.model_ids.back(), *backend, world.queries, *embedder, opts));
    store_path = dir.file("store.json");
    save_store(store_path, *v1);
  }

  GatewayConfig config() const {
    GatewayConfig g;
    g.port = 0;
    g.threads = 8;
    g.store_path = store_path;
    g.router.n = 1;
    g.vote_params = SamplingParams::voting(5);
    return g;
  }

  std::unique_ptr<Gateway> gateway() const {
    return std::make_unique<Gateway>(config(), embedder, backend, v1, world.queries);
  }
};

World& shared_world() {
  static World w;
  return w;
}

std::string chat_body(const std::string& text) {
  return json{{"model", "auto"}, {"messages", json::array({json{{"role", "user"}, {"content", text}}})}}.dump();
}

}  // namespace

TEST_CASE("chat answers with the vote winner of the routed models") {
  auto& w = shared_world();
  auto g = w.gateway();
  for (std::size_t i = 0; i < 10; ++i) {
    const QueryRecord& q = w.world.queries[i * 5];
    const HttpReply r = g->chat(chat_body(q.text));
    REQUIRE(r.status == 200);
    const json& route = r.body["x-route"];
    const std::string content = r.body["choices"][0]["message"]["content"];
    CHECK(normalize_answer(content, q.grader) == route["answer"].get<std::string>());

    // Independent replay: route the embedding, then vote directly.
    const auto d = route_embedding(w.embedder->embed(q.text), *w.v1, w.config().router);
    CHECK(route["selected"].get<std::vector<std::string>>() == d.selected);
    CHECK(route["cluster_id"].get<std::size_t>() == d.cluster_id);
    CHECK(r.body["model"] == d.selected.front());
    const auto expected =
        run_ensemble(EnsembleMode::Vote, d.selected, q, w.config().vote_params, SamplingParams::direct(), *w.backend);
    CHECK(route["answer"] == expected.answer);
    CHECK(route["snapshot_version"] == 1);
  }
}

TEST_CASE("chat accepts content parts and uses the last user message") {
  auto& w = shared_world();
  auto g = w.gateway();
  const QueryRecord& q = w.world.queries[3];
  const json body{{"messages", json::array({json{{"role", "system"}, {"content", "be brief"}},
                                            json{{"role", "user"}, {"content", "ignored"}},
                                            json{{"role", "user"},
                                                 {"content", json::array({json{{"type", "text"}, {"text", q.text}}})}}})}};
  const HttpReply r = g->chat(body.dump());
  REQUIRE(r.status == 200);
  const auto d = route_embedding(w.embedder->embed(q.text), *w.v1, w.config().router);
  CHECK(r.body["x-route"]["cluster_id"].get<std::size_t>() == d.cluster_id);
}

TEST_CASE("malformed chat requests are rejected with 400") {
  auto& w = shared_world();
  auto g = w.gateway();
  CHECK(g->chat("{not json").status == 400);
  CHECK(g->chat("{\"messages\": []}").status == 400);
  CHECK(g->chat("{\"messages\": [{\"role\": \"system\", \"content\": \"x\"}]}").status == 400);
  const HttpReply blank = g->chat(chat_body("   "));
  CHECK(blank.status == 400);
  CHECK(blank.body["error"]["code"].is_string());
}

TEST_CASE("explain and health") {
  auto& w = shared_world();
  auto g = w.gateway();
  const HttpReply e = g->explain(w.world.queries[0].text);
  REQUIRE(e.status == 200);
  CHECK(e.body["ranking"].size() == w.v1->profiles.size());
  CHECK(g->explain("").status == 400);
  const HttpReply h = g->health();
  CHECK(h.status == 200);
  CHECK(h.body["snapshot_version"] == 1);
}

TEST_CASE("reload swaps to the store on disk") {
  auto& w = shared_world();
  auto g = w.gateway();
  save_store(w.store_path, *w.v2);
  const HttpReply r = g->reload();
  REQUIRE(r.status == 200);
  CHECK(r.body["previous_version"] == 1);
  CHECK(r.body["snapshot_version"] == 2);
  CHECK(g->snapshot()->version == 2);
  const HttpReply c = g->chat(chat_body(w.world.queries[0].text));
  CHECK(c.body["x-route"]["snapshot_version"] == 2);
  CHECK(c.body["x-route"]["selected"][0] == w.world.model_ids.back());

  // A corrupt file leaves the current snapshot in place.
  write_file_atomic(w.store_path, "{\"format_version\": 1}");
  CHECK(g->reload().status >= 400);
  CHECK(g->snapshot()->version == 2);
  save_store(w.store_path, *w.v1);
}

TEST_CASE("http round trip, metrics, and reload atomicity under load") {
  auto& w = shared_world();
  save_store(w.store_path, *w.v1);
  auto g = w.gateway();
  const int port = g->start();
  REQUIRE(port > 0);

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  auto bad = client.Post("/v1/chat/completions", "{oops", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto missing_q = client.Get("/v1/route/explain");
  REQUIRE(missing_q);
  CHECK(missing_q->status == 400);

  // 100 concurrent requests while the store flips between v1 and v2.
  std::atomic<bool> done{false};
  std::thread flipper([&] {
    bool two = true;
    while (!done) {
      save_store(w.store_path, two ? *w.v2 : *w.v1);
      httplib::Client admin("127.0.0.1", port);
      admin.Post("/admin/reload", "", "application/json");
      two = !two;
    }
  });
  std::vector<std::future<std::string>> futures;
  for (std::size_t i = 0; i < 100; ++i) {
    futures.push_back(std::async(std::launch::async, [&, i]() -> std::string {
      const QueryRecord& q = w.world.queries[i % w.world.queries.size()];
      httplib::Client c("127.0.0.1", port);
      auto res = c.Post("/v1/chat/completions", chat_body(q.text), "application/json");
      if (!res) return "no response: " + httplib::to_string(res.error());
      if (res->status != 200) return "status " + std::to_string(res->status);
      const json body = json::parse(res->body);
      const json& route = body["x-route"];
      const std::int64_t version = route["snapshot_version"];
      if (version != 1 && version != 2) return "unknown version";
      const ProfileStore& store = version == 1 ? *w.v1 : *w.v2;
      const auto d = route_embedding(w.embedder->embed(q.text), store, w.config().router);
      if (route["selected"].get<std::vector<std::string>>() != d.selected) return "selection mixes snapshots";
      return "";
    }));
  }
  std::size_t ok = 0;
  for (auto& f : futures) {
    const std::string err = f.get();
    CHECK_MESSAGE(err.empty(), err);
    ok += err.empty();
  }
  done = true;
  flipper.join();
  CHECK(ok == 100);

  auto metrics = client.Get("/metrics");
  REQUIRE(metrics);
  CHECK(metrics->body.find("cluster_route_requests_total{endpoint=\"chat\",status=\"200\"}") != std::string::npos);
  CHECK(metrics->body.find("cluster_route_snapshot_version") != std::string::npos);
  CHECK(metrics->body.find("cluster_route_request_latency_ms_bucket") != std::string::npos);
  g->stop();
  save_store(w.store_path, *w.v1);
}

TEST_CASE("metrics histogram is cumulative") {
  GatewayMetrics m;
  m.observe("chat", 200, 3);
  m.observe("chat", 200, 30);
  m.observe("chat", 500, 9000);
  const std::string text = m.render(7);
  CHECK(text.find("cluster_route_request_latency_ms_bucket{endpoint=\"chat\",le=\"5\"} 1") != std::string::npos);
  CHECK(text.find("cluster_route_request_latency_ms_bucket{endpoint=\"chat\",le=\"50\"} 2") != std::string::npos);
  CHECK(text.find("cluster_route_request_latency_ms_bucket{endpoint=\"chat\",le=\"+Inf\"} 3") != std::string::npos);
  CHECK(text.find("cluster_route_snapshot_version 7") != std::string::npos);
}
