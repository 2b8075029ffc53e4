#include "cluster_route/config.hpp"

#include <cstdlib>
#include <filesystem>

#include "cluster_route/error.hpp"
#include "cluster_route/persist.hpp"

namespace cluster_route {

using json = nlohmann::json;

void GatewayConfig::validate() const {
  if (store_path.empty()) throw Error(Errc::InvalidConfig, "gateway needs a store path");
  if (registry_path.empty()) throw Error(Errc::InvalidConfig, "gateway needs a registry path");
  if (port < 0 || port > 65535) throw Error(Errc::InvalidConfig, "port out of range");
  if (threads == 0) throw Error(Errc::InvalidConfig, "gateway needs at least one worker thread");
  router.validate();
  vote_params.validate();
  direct_params.validate();
}

std::string resolve_path(const std::string& base_dir, const std::string& path) {
  if (path.empty() || base_dir.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(base_dir) / path).lexically_normal().string();
}

namespace {

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key) && !obj[key].is_null()) out = obj[key].get<T>();
}

std::optional<std::string> read_path(const json& obj, const char* key, const std::string& base) {
  if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
  return resolve_path(base, obj[key].get<std::string>());
}

CalibrationMode parse_mode(const std::string& s) {
  if (s == "single_sample") return CalibrationMode::SingleSample;
  if (s == "self_consistency") return CalibrationMode::SelfConsistency;
  throw Error(Errc::InvalidConfig, "unknown calibration mode '" + s + "'");
}

}  // namespace

AppConfig parse_config(const json& doc, const std::string& base_dir) {
  if (!doc.is_object()) throw Error(Errc::InvalidConfig, "config must be a JSON object");
  AppConfig cfg;
  cfg.base_dir = base_dir;
  try {
    if (doc.contains("embedder")) {
      const json& e = doc["embedder"];
      const std::string kind = e.value("kind", "mock");
      if (kind == "mock") {
        cfg.embedder = EmbedderConfig::mock(e.value("dim", std::size_t{256}), e.value("seed", std::uint64_t{1}),
                                            e.value("id", std::string{}));
      } else if (kind == "remote") {
        cfg.embedder = EmbedderConfig{};
        cfg.embedder.kind = EmbedderKind::Remote;
        read(e, "id", cfg.embedder.embedder_id);
        read(e, "dim", cfg.embedder.dim);
        cfg.embedder.endpoint = e.value("endpoint", std::string{});
        read(e, "api_key_env", cfg.embedder.api_key_env);
        read(e, "timeout_ms", cfg.embedder.timeout_ms);
      } else {
        throw Error(Errc::InvalidConfig, "unknown embedder kind '" + kind + "'");
      }
      read(e, "batch_size", cfg.embedder.batch_size);
      cfg.embedder.cache_path = read_path(e, "cache_path", base_dir);
    }
    cfg.registry_path = read_path(doc, "registry", base_dir).value_or("");
    if (doc.contains("datasets")) {
      for (const auto& p : doc["datasets"]) cfg.dataset_paths.push_back(resolve_path(base_dir, p.get<std::string>()));
    }
    cfg.store_path = read_path(doc, "store", base_dir).value_or("");
    cfg.ledger_path = read_path(doc, "ledger", base_dir);
    read(doc, "k", cfg.k);
    read(doc, "seed", cfg.seed);
    read(doc, "restarts", cfg.fit.restarts);
    read(doc, "max_iterations", cfg.fit.max_iterations);
    read(doc, "val_fraction", cfg.val_fraction);

    if (doc.contains("grader")) cfg.grader.code_command = doc["grader"].value("code_command", std::string{});
    if (cfg.grader.code_command && cfg.grader.code_command->empty()) cfg.grader.code_command.reset();

    SamplingParams vote = SamplingParams::voting(10);
    SamplingParams direct = SamplingParams::direct();
    EnsembleMode mode = EnsembleMode::Vote;
    if (doc.contains("ensemble")) {
      const json& e = doc["ensemble"];
      read(e, "rounds", vote.rounds);
      read(e, "temperature", vote.temperature);
      read(e, "top_p", vote.top_p);
      read(e, "max_tokens", vote.max_tokens);
      read(e, "direct_temperature", direct.temperature);
      read(e, "direct_top_p", direct.top_p);
      direct.max_tokens = vote.max_tokens;
      const std::string m = e.value("mode", "vote");
      if (m == "direct") {
        mode = EnsembleMode::Direct;
      } else if (m != "vote") {
        throw Error(Errc::InvalidConfig, "unknown ensemble mode '" + m + "'");
      }
    }

    cfg.calibration.params = vote;
    cfg.calibration.rounds = vote.rounds;
    if (doc.contains("calibration")) {
      const json& c = doc["calibration"];
      if (c.contains("mode")) cfg.calibration.mode = parse_mode(c["mode"].get<std::string>());
      read(c, "rounds", cfg.calibration.rounds);
      read(c, "parallelism", cfg.calibration.parallelism);
      read(c, "allow_partial", cfg.calibration.allow_partial);
      read(c, "created_at", cfg.calibration.created_at);
    }
    cfg.calibration.grader = cfg.grader;

    RouterConfig router;
    router.k = cfg.k;
    if (doc.contains("router")) {
      const json& r = doc["router"];
      read(r, "n", router.n);
      if (r.contains("fallback_model") && !r["fallback_model"].is_null()) {
        router.fallback_model = r["fallback_model"].get<std::string>();
      }
    }

    BenchmarkConfig& ev = cfg.eval;
    ev.k = cfg.k;
    ev.n = router.n;
    ev.val_fraction = cfg.val_fraction;
    ev.vote_params = vote;
    ev.direct_params = direct;
    ev.calibration = cfg.calibration;
    ev.fit = cfg.fit;
    ev.seeds = {cfg.seed};
    if (doc.contains("eval")) {
      const json& e = doc["eval"];
      if (e.contains("strategy")) ev.strategy = parse_strategy(e["strategy"].get<std::string>());
      read(e, "seeds", ev.seeds);
      read(e, "parallelism", ev.parallelism);
      read(e, "random_draws", ev.random_draws);
    }

    GatewayConfig& gw = cfg.gateway;
    gw.store_path = cfg.store_path;
    gw.registry_path = cfg.registry_path;
    gw.router = router;
    gw.mode = mode;
    gw.vote_params = vote;
    gw.direct_params = direct;
    if (doc.contains("gateway")) {
      const json& g = doc["gateway"];
      read(g, "host", gw.host);
      read(g, "port", gw.port);
      read(g, "threads", gw.threads);
      gw.trace_path = read_path(g, "trace_path", base_dir);
      if (g.contains("label_datasets")) {
        for (const auto& p : g["label_datasets"]) gw.label_paths.push_back(resolve_path(base_dir, p.get<std::string>()));
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("config: ") + e.what());
  }
  cfg.embedder.validate();
  cfg.gateway.router.validate();
  cfg.gateway.vote_params.validate();
  if (cfg.k == 0) throw Error(Errc::InvalidConfig, "k must be at least 1");
  return cfg;
}

AppConfig load_config(const std::string& path) {
  const std::string text = read_file(path);
  const json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw Error(Errc::InvalidConfig, path + " is not valid JSON");
  const auto dir = std::filesystem::absolute(path).parent_path().string();
  return parse_config(doc, dir);
}

void apply_env(AppConfig& cfg) {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  if (auto v = env("CLUSTER_ROUTE_STORE")) cfg.store_path = cfg.gateway.store_path = *v;
  if (auto v = env("CLUSTER_ROUTE_REGISTRY")) cfg.registry_path = cfg.gateway.registry_path = *v;
  if (auto v = env("CLUSTER_ROUTE_HOST")) cfg.gateway.host = *v;
  try {
    if (auto v = env("CLUSTER_ROUTE_PORT")) cfg.gateway.port = std::stoi(*v);
    if (auto v = env("CLUSTER_ROUTE_SEED")) {
      cfg.seed = std::stoull(*v);
      cfg.eval.seeds = {cfg.seed};
    }
  } catch (const std::exception&) {
    throw Error(Errc::InvalidConfig, "CLUSTER_ROUTE_PORT / CLUSTER_ROUTE_SEED must be integers");
  }
  if (auto v = env("CLUSTER_ROUTE_EMBED_ENDPOINT")) {
    if (cfg.embedder.kind == EmbedderKind::Remote) cfg.embedder.endpoint = *v;
  }
}

}  // namespace cluster_route
