#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "cluster_route/clustering.hpp"
#include "cluster_route/persist.hpp"
#include "cluster_route/simulation.hpp"
#include "cluster_route/hashing.hpp"
#include "support.hpp"

using namespace cluster_route;
using namespace test_support;
using json = nlohmann::json;

namespace {

ProfileStore sample_store() {
  SyntheticWorldSpec spec;
  spec.topics = 4;
  spec.queries_per_topic = 8;
  spec.accuracy = dominant_accuracy(3, 4, 0.9, 0.2);
  const auto world = make_world(spec);
  Embedder emb(EmbedderConfig::mock(32, 1));
  std::vector<std::string> texts;
  for (const auto& q : world.queries) texts.push_back(q.text);
  FitOptions fo;
  fo.embedder_id = emb.id();
  const auto cm = fit(emb.embed_batch(texts), 6, 3, fo);
  RegistryBackend be(world.registry);
  CalibrationOptions opts;
  opts.created_at = "2026-01-01T00:00:00Z";
  return calibrate(world.model_ids, be, world.queries, emb, cm, opts);
}

}  // namespace

TEST_CASE("store round trip is exact and byte-stable") {
  auto store = sample_store();
  store.incomplete_models = {"model-01"};
  const std::string text = serialize_store(store);
  const auto back = parse_store(text);
  CHECK(back == store);
  CHECK(serialize_store(back) == text);

  TempDir dir;
  save_store(dir.file("store.json"), store);
  CHECK(load_store(dir.file("store.json")) == store);
}

TEST_CASE("unscored clusters survive the round trip") {
  auto store = sample_store();
  auto& p = store.profiles.at("model-00");
  p.correct_counts[2] = 0;
  p.total_counts[2] = 0;
  p = CapabilityProfile::from_counts(p.model_id, p.correct_counts, p.total_counts);
  REQUIRE(!p.scores[2].has_value());
  const auto back = parse_store(serialize_store(store));
  CHECK(back.profiles == store.profiles);
  CHECK(!back.profiles.at("model-00").scores[2].has_value());
}

TEST_CASE("truncated or tampered stores are corrupt") {
  const std::string text = serialize_store(sample_store());
  CHECK(error_code_of([&] { parse_store(text.substr(0, text.size() / 2)); }) == Errc::CorruptFile);
  auto doc = json::parse(text);
  doc["profiles"]["model-00"]["correct"][0] = 999;
  CHECK(error_code_of([&] { parse_store(doc.dump()); }) == Errc::CorruptFile);
}

TEST_CASE("older format version asks for an upgrade") {
  auto doc = json::parse(serialize_store(sample_store()));
  doc.erase("checksum");
  doc["format_version"] = 0;
  doc["checksum"] = sha256_hex(doc.dump());
  try {
    parse_store(doc.dump());
    FAIL("expected VersionUnsupported");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::VersionUnsupported);
    CHECK(std::string(e.what()).find("calibrate") != std::string::npos);
  }
}

TEST_CASE("seal adds version and checksum") {
  const auto sealed = seal(json{{"a", 1}});
  CHECK(sealed["format_version"] == kFormatVersion);
  CHECK(sealed["checksum"].get<std::string>().size() == 64);
  CHECK(unseal(sealed.dump(), "x")["a"] == 1);
}

TEST_CASE("registry round trip") {
  ModelRegistry r;
  SimulatedModel s;
  s.id = "sim";
  s.cluster_accuracy = {0.25, 0.5};
  s.seed = 1234567890123ULL;
  s.latency_ms = {1, 3};
  r.add(s);
  ModelEndpoint e;
  e.id = "remote";
  e.base_url = "http://localhost:8000";
  e.model_name = "qwen";
  e.api_key_env = "KEY";
  e.max_parallel = 7;
  r.add(e);
  const auto text = serialize_registry(r);
  CHECK(parse_registry(text) == r);
  CHECK(serialize_registry(parse_registry(text)) == text);
}

TEST_CASE("dataset jsonl round trip and validation") {
  SyntheticWorldSpec spec;
  spec.topics = 2;
  spec.queries_per_topic = 3;
  spec.datasets = 2;
  spec.accuracy = dominant_accuracy(1, 2, 1.0, 1.0);
  const auto world = make_world(spec);
  const auto text = serialize_dataset(world.queries);
  CHECK(parse_dataset(text) == world.queries);

  CHECK(error_code_of([&] { parse_dataset("{\"id\":\"a\",\"question\":\"q\",\"answer\":\"\"}\n"); }) ==
        Errc::CorruptFile);
  CHECK(error_code_of([&] {
          parse_dataset("{\"id\":\"a\",\"question\":\"q\",\"answer\":\"1\"}\n{\"id\":\"a\",\"question\":\"r\",\"answer\":\"2\"}\n");
        }) == Errc::CorruptFile);
  CHECK(error_code_of([&] { parse_dataset("not json\n"); }) == Errc::CorruptFile);
  const auto numeric_id = parse_dataset("{\"id\":17,\"question\":\"q\",\"answer\":\"1\",\"grader\":\"numeric\"}\n\n");
  REQUIRE(numeric_id.size() == 1);
  CHECK(numeric_id[0].id == "17");
  CHECK(numeric_id[0].grader == GraderKind::Numeric);
}

TEST_CASE("missing files are io errors") {
  CHECK(error_code_of([] { load_store("/nonexistent/store.json"); }) == Errc::IoError);
}
