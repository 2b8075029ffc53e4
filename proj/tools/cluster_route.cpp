// cluster-route: calibrate, inspect, evaluate and serve a cluster-wise router.
#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cluster_route/clustering.hpp"
#include "cluster_route/config.hpp"
#include "cluster_route/error.hpp"
#include "cluster_route/evaluation.hpp"
#include "cluster_route/gateway.hpp"
#include "cluster_route/persist.hpp"
#include "cluster_route/selection.hpp"
#include "cluster_route/simulation.hpp"

using namespace cluster_route;
using json = nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> store;
  std::optional<std::string> registry;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "JSON config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "seed for every randomized step");
  cmd->add_option("--store", c.store, "profile store path");
  cmd->add_option("--registry", c.registry, "model registry path");
}

// Precedence: flags > environment > file.
AppConfig load(const Common& c) {
  AppConfig cfg = load_config(c.config_path);
  apply_env(cfg);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.eval.seeds = {*c.seed};
  }
  if (c.store) cfg.store_path = cfg.gateway.store_path = *c.store;
  if (c.registry) cfg.registry_path = cfg.gateway.registry_path = *c.registry;
  return cfg;
}

std::vector<QueryRecord> load_datasets(const AppConfig& cfg) {
  if (cfg.dataset_paths.empty()) throw Error(Errc::InvalidConfig, "config lists no datasets");
  std::vector<QueryRecord> all;
  for (const auto& p : cfg.dataset_paths) {
    auto part = load_dataset(p);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

std::vector<EmbeddingVector> embed_queries(const Embedder& e, std::span<const QueryRecord> qs) {
  std::vector<std::string> texts;
  for (const auto& q : qs) texts.push_back(q.text);
  return e.embed_batch(texts);
}

std::unique_ptr<GradeLedger> open_ledger(const AppConfig& cfg) {
  return cfg.ledger_path ? std::make_unique<GradeLedger>(*cfg.ledger_path) : std::make_unique<GradeLedger>();
}

void require_store_path(const AppConfig& cfg) {
  if (cfg.store_path.empty()) throw Error(Errc::InvalidConfig, "no store path (set \"store\" or pass --store)");
}

int cmd_calibrate(const Common& c, std::optional<std::size_t> k_flag) {
  AppConfig cfg = load(c);
  if (k_flag) cfg.k = *k_flag;
  require_store_path(cfg);
  const auto queries = load_datasets(cfg);
  const auto [val, test] = split_queries(queries, cfg.seed, cfg.val_fraction);
  const Embedder embedder(cfg.embedder);
  FitOptions fo = cfg.fit;
  fo.embedder_id = embedder.id();
  const ClusterModel cm = fit(embed_queries(embedder, val), cfg.k, cfg.seed, fo);
  RegistryBackend backend(load_registry(cfg.registry_path));
  auto ledger = open_ledger(cfg);
  const ProfileStore store = calibrate(backend.registry().ids(), backend, val, embedder, cm, cfg.calibration, ledger.get());
  save_store(cfg.store_path, store);
  std::cout << json{{"store", cfg.store_path},
                    {"version", store.version},
                    {"k", cm.k},
                    {"models", store.profiles.size()},
                    {"validation_queries", val.size()},
                    {"dataset_fingerprint", store.dataset_fingerprint},
                    {"incomplete_models", store.incomplete_models}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_select(const Common& c, std::size_t budget) {
  AppConfig cfg = load(c);
  require_store_path(cfg);
  const ProfileStore store = load_store(cfg.store_path);
  for (const auto& id : select_model_set(store.profile_list(), budget)) std::cout << id << "\n";
  return 0;
}

int cmd_add_model(const Common& c, const std::string& model) {
  AppConfig cfg = load(c);
  require_store_path(cfg);
  const ProfileStore store = load_store(cfg.store_path);
  const auto queries = load_datasets(cfg);
  const auto [val, test] = split_queries(queries, cfg.seed, cfg.val_fraction);
  RegistryBackend backend(load_registry(cfg.registry_path));
  const Embedder embedder(cfg.embedder);
  auto ledger = open_ledger(cfg);
  const ProfileStore next = add_model(store, model, backend, val, embedder, cfg.calibration, ledger.get());
  save_store(cfg.store_path, next);
  std::cout << json{{"store", cfg.store_path}, {"version", next.version}, {"added", model}}.dump() << "\n";
  return 0;
}

int cmd_add_dataset(const Common& c, const std::string& dataset_path, std::optional<std::size_t> k_flag) {
  AppConfig cfg = load(c);
  if (k_flag) cfg.k = *k_flag;
  require_store_path(cfg);
  const ProfileStore store = load_store(cfg.store_path);
  const auto old_queries = load_datasets(cfg);
  const auto old_val = split_queries(old_queries, cfg.seed, cfg.val_fraction).first;
  const auto incoming = load_dataset(dataset_path);
  const auto new_val = split_queries(incoming, cfg.seed, cfg.val_fraction).first;
  RegistryBackend backend(load_registry(cfg.registry_path));
  const Embedder embedder(cfg.embedder);
  auto ledger = open_ledger(cfg);
  std::vector<std::string> models;
  for (const auto& p : store.profile_list()) models.push_back(p.model_id);
  const ProfileStore next = recalibrate_with_dataset(store, old_val, new_val, models, backend, embedder, cfg.k,
                                                     cfg.seed, cfg.calibration, ledger.get(), cfg.fit);
  save_store(cfg.store_path, next);
  std::cout << json{{"store", cfg.store_path},
                    {"version", next.version},
                    {"k", next.cluster_model.k},
                    {"validation_queries", old_val.size() + new_val.size()},
                    {"dataset_fingerprint", next.dataset_fingerprint}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_route(const Common& c, const std::string& query, bool explain, std::optional<std::size_t> n) {
  AppConfig cfg = load(c);
  require_store_path(cfg);
  if (n) cfg.gateway.router.n = *n;
  auto store = std::make_shared<const ProfileStore>(load_store(cfg.store_path));
  auto embedder = std::make_shared<const Embedder>(cfg.embedder);
  const Router router(embedder, store, cfg.gateway.router);
  const RoutingDecision d = router.route(query);
  json scores = json::array();
  for (const auto& s : d.scores) scores.push_back(s ? json(*s) : json(nullptr));
  json out{{"query_id", d.query_id},  {"cluster_id", d.cluster_id}, {"distance", d.distance},
           {"selected", d.selected},  {"scores", scores},           {"snapshot_version", d.snapshot_version},
           {"fallback", d.fallback}};
  if (explain) {
    json ranking = json::array();
    for (const auto& r : rank_cluster(store->profile_list(), d.cluster_id).ranked) {
      ranking.push_back(json{{"model_id", r.model_id}, {"score", r.score ? json(*r.score) : json(nullptr)}, {"rank", r.rank}});
    }
    out["ranking"] = ranking;
  }
  std::cout << out.dump(explain ? 2 : -1) << "\n";
  return 0;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, "bad seed '" + item + "'");
    }
  }
  if (out.empty()) throw Error(Errc::InvalidArgument, "no seeds given");
  return out;
}

int cmd_eval(const Common& c, std::optional<std::string> strategy, std::optional<std::string> seeds,
             std::optional<std::string> out_path, std::optional<std::string> csv_path, bool use_store) {
  AppConfig cfg = load(c);
  BenchmarkConfig bc = cfg.eval;
  if (strategy) bc.strategy = parse_strategy(*strategy);
  if (seeds) bc.seeds = parse_seeds(*seeds);
  const auto queries = load_datasets(cfg);
  RegistryBackend backend(load_registry(cfg.registry_path));
  const Embedder embedder(cfg.embedder);
  std::optional<ProfileStore> prebuilt;
  if (use_store) {
    require_store_path(cfg);
    prebuilt = load_store(cfg.store_path);
  }
  std::vector<std::string> models = backend.registry().ids();
  if (prebuilt) {
    models.clear();
    for (const auto& p : prebuilt->profile_list()) models.push_back(p.model_id);
  }
  const RunReport report = run_benchmark(queries, backend, models, embedder, bc, prebuilt ? &*prebuilt : nullptr);
  const std::string text = report_to_json(report).dump(2) + "\n";
  if (out_path) {
    write_file_atomic(*out_path, text);
  } else {
    std::cout << text;
  }
  if (csv_path) write_file_atomic(*csv_path, report_to_csv(report));
  return 0;
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, "bad grid value '" + item + "'");
    }
  }
  return out;
}

std::vector<double> default_grid(SweepKind kind, std::size_t models) {
  switch (kind) {
    case SweepKind::KSweep: return {1, 2, 4, 8, 16, 32, 64, 128};
    case SweepKind::ModelCount: {
      std::vector<double> g;
      for (std::size_t m = 1; m <= models; ++m) g.push_back(static_cast<double>(m));
      return g;
    }
    case SweepKind::TestSize: {
      std::vector<double> g;
      for (int i = 1; i <= 19; ++i) g.push_back(0.05 * i);
      return g;
    }
  }
  return {};
}

int cmd_sweep(const Common& c, const std::string& kind_name, std::optional<std::string> grid_text,
              std::optional<std::string> seeds, std::optional<std::string> plot_path) {
  AppConfig cfg = load(c);
  const SweepKind kind = parse_sweep_kind(kind_name);
  BenchmarkConfig bc = cfg.eval;
  if (seeds) bc.seeds = parse_seeds(*seeds);
  const auto queries = load_datasets(cfg);
  RegistryBackend backend(load_registry(cfg.registry_path));
  const Embedder embedder(cfg.embedder);
  const auto models = backend.registry().ids();
  const auto grid = grid_text ? parse_grid(*grid_text) : default_grid(kind, models.size());
  const SweepTable table = sweep_study(kind, grid, queries, backend, models, embedder, bc);
  const std::string csv = table.to_csv();
  std::cout << csv;
  if (plot_path) write_file_atomic(*plot_path, csv);
  return 0;
}

Gateway* g_running = nullptr;

void on_signal(int) {
  if (g_running) g_running->stop();
}

int cmd_serve(const Common& c, std::optional<std::string> host, std::optional<int> port) {
  AppConfig cfg = load(c);
  if (host) cfg.gateway.host = *host;
  if (port) cfg.gateway.port = *port;
  auto gateway = Gateway::from_config(cfg);
  const int bound = gateway->bind();
  std::cerr << "cluster-route serving on " << cfg.gateway.host << ":" << bound << " (snapshot v"
            << gateway->snapshot()->version << ")\n";
  g_running = gateway.get();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  gateway->listen();
  g_running = nullptr;
  return 0;
}

int cmd_health(const Common& c) {
  AppConfig cfg = load(c);
  const auto report = registry_health(load_registry(cfg.registry_path));
  bool all_ok = true;
  for (const auto& h : report) {
    std::cout << h.model_id << "\t" << to_string(h.state) << (h.detail.empty() ? "" : "\t" + h.detail) << "\n";
    all_ok = all_ok && h.state == HealthState::Healthy;
  }
  return all_ok ? 0 : 3;
}

struct FixtureArgs {
  std::string out_dir;
  std::size_t models = 8;
  std::size_t topics = 16;
  std::size_t per_topic = 100;
  std::size_t datasets = 4;
  double hi = 0.95;
  double lo = 0.40;
  std::uint64_t seed = 7;
};

int cmd_fixture(const FixtureArgs& a) {
  std::filesystem::create_directories(a.out_dir);
  SyntheticWorldSpec spec;
  spec.topics = a.topics;
  spec.queries_per_topic = a.per_topic;
  spec.vocabulary_per_topic = 24;
  spec.words_per_query = 10;
  spec.datasets = a.datasets;
  spec.categories = {"reasoning", "knowledge"};
  spec.accuracy = dominant_accuracy(a.models, a.topics, a.hi, a.lo);
  spec.seed = a.seed;
  const SyntheticWorld world = make_world(spec);
  const auto dir = std::filesystem::path(a.out_dir);
  save_dataset((dir / "queries.jsonl").string(), world.queries);
  save_registry((dir / "registry.json").string(), world.registry);
  const json config{{"embedder", json{{"kind", "mock"}, {"dim", 256}, {"seed", 1}}},
                    {"registry", "registry.json"},
                    {"datasets", json::array({"queries.jsonl"})},
                    {"store", "store.json"},
                    {"k", a.topics},
                    {"seed", 42},
                    {"restarts", 20},
                    {"val_fraction", 0.7},
                    {"calibration", json{{"mode", "single_sample"}, {"created_at", "1970-01-01T00:00:00Z"}}},
                    {"router", json{{"n", 1}}},
                    {"ensemble", json{{"mode", "vote"}, {"rounds", 10}, {"temperature", 0.7}, {"top_p", 1.0},
                                      {"direct_temperature", 0.2}, {"direct_top_p", 1.0}}},
                    {"eval", json{{"strategy", "sc"}, {"seeds", json::array({42, 999, 2024, 2025, 3407})}}},
                    {"gateway", json{{"host", "127.0.0.1"}, {"port", 8080}, {"threads", 8},
                                     {"label_datasets", json::array({"queries.jsonl"})}}}};
  write_file_atomic((dir / "config.json").string(), config.dump(2) + "\n");
  std::cout << json{{"dir", a.out_dir}, {"queries", world.queries.size()}, {"models", world.model_ids.size()}}.dump()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cluster-route: cluster-wise routing and ensembling over a pool of LLMs"};
  app.require_subcommand(1);

  Common common;
  std::optional<std::size_t> k_flag;
  std::size_t budget = 0;
  std::string model;
  std::string dataset_path;
  std::string query;
  bool explain = false;
  bool use_store = false;
  std::optional<std::size_t> n_flag;
  std::optional<std::string> strategy, seeds, out_path, csv_path, grid, plot_path, host;
  std::optional<int> port;
  std::string kind;
  FixtureArgs fixture;

  auto* calibrate_cmd = app.add_subcommand("calibrate", "embed, cluster and profile the validation split");
  add_common(calibrate_cmd, common);
  calibrate_cmd->add_option("--k", k_flag, "cluster count");

  auto* select_cmd = app.add_subcommand("select-models", "pick a deployment set by reciprocal-rank score");
  add_common(select_cmd, common);
  select_cmd->add_option("--budget", budget, "number of models")->required();

  auto* add_model_cmd = app.add_subcommand("add-model", "profile one more registry model without re-clustering");
  add_common(add_model_cmd, common);
  add_model_cmd->add_option("--model", model, "registry id of the new model")->required();

  auto* add_dataset_cmd = app.add_subcommand("add-dataset", "re-cluster with an extra dataset and re-profile");
  add_common(add_dataset_cmd, common);
  add_dataset_cmd->add_option("--dataset", dataset_path, "JSON-lines dataset")->required()->check(CLI::ExistingFile);
  add_dataset_cmd->add_option("--k", k_flag, "cluster count");

  auto* route_cmd = app.add_subcommand("route", "route one query");
  add_common(route_cmd, common);
  route_cmd->add_option("query", query, "query text")->required();
  route_cmd->add_flag("--explain", explain, "include the cluster's full ranking");
  route_cmd->add_option("--n", n_flag, "models per query");

  auto* eval_cmd = app.add_subcommand("eval", "run the benchmark protocol");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--strategy", strategy, "direct | sc | model_switch | random | oracle");
  eval_cmd->add_option("--seeds", seeds, "comma-separated seeds");
  eval_cmd->add_option("--out", out_path, "write the JSON report here instead of stdout");
  eval_cmd->add_option("--csv", csv_path, "also write a CSV summary");
  eval_cmd->add_flag("--use-store", use_store, "evaluate the saved store instead of calibrating per seed");

  auto* sweep_cmd = app.add_subcommand("sweep", "sweep K, model count or test size");
  add_common(sweep_cmd, common);
  sweep_cmd->add_option("--kind", kind, "k | models | testsize")->required();
  sweep_cmd->add_option("--grid", grid, "comma-separated grid values");
  sweep_cmd->add_option("--seeds", seeds, "comma-separated seeds");
  sweep_cmd->add_option("--emit-plot-data", plot_path, "write the table as CSV for plotting");

  auto* serve_cmd = app.add_subcommand("serve", "run the OpenAI-compatible gateway");
  add_common(serve_cmd, common);
  serve_cmd->add_option("--host", host, "listen address");
  serve_cmd->add_option("--port", port, "listen port (0 picks a free one)");

  auto* health_cmd = app.add_subcommand("health", "probe every registry endpoint");
  add_common(health_cmd, common);

  auto* fixture_cmd = app.add_subcommand("fixture", "write a simulated world: dataset, registry and config");
  fixture_cmd->add_option("--out", fixture.out_dir, "output directory")->required();
  fixture_cmd->add_option("--models", fixture.models, "simulated models");
  fixture_cmd->add_option("--topics", fixture.topics, "topics (and K)");
  fixture_cmd->add_option("--per-topic", fixture.per_topic, "queries per topic");
  fixture_cmd->add_option("--datasets", fixture.datasets, "datasets the queries are dealt into");
  fixture_cmd->add_option("--hi", fixture.hi, "accuracy of a topic's dominant model");
  fixture_cmd->add_option("--lo", fixture.lo, "accuracy of the other models");
  fixture_cmd->add_option("--seed", fixture.seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*calibrate_cmd) return cmd_calibrate(common, k_flag);
    if (*select_cmd) return cmd_select(common, budget);
    if (*add_model_cmd) return cmd_add_model(common, model);
    if (*add_dataset_cmd) return cmd_add_dataset(common, dataset_path, k_flag);
    if (*route_cmd) return cmd_route(common, query, explain, n_flag);
    if (*eval_cmd) return cmd_eval(common, strategy, seeds, out_path, csv_path, use_store);
    if (*sweep_cmd) return cmd_sweep(common, kind, grid, seeds, plot_path);
    if (*serve_cmd) return cmd_serve(common, host, port);
    if (*health_cmd) return cmd_health(common);
    if (*fixture_cmd) return cmd_fixture(fixture);
  } catch (const Error& e) {
    std::cerr << "error[" << to_string(e.code()) << "]: " << e.detail() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error[Internal]: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
