#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cluster_route/embedding.hpp"
#include "cluster_route/ensemble.hpp"
#include "cluster_route/evaluation.hpp"
#include "cluster_route/grading.hpp"
#include "cluster_route/profiling.hpp"
#include "cluster_route/router.hpp"

namespace cluster_route {

struct GatewayConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t threads = 8;
  std::string store_path;
  std::string registry_path;
  RouterConfig router;
  EnsembleMode mode = EnsembleMode::Vote;
  SamplingParams vote_params = SamplingParams::voting(10);
  SamplingParams direct_params = SamplingParams::direct();
  std::optional<std::string> trace_path;
  // Queries whose text matches a record here are answered with its labels;
  // only meaningful for simulated registries.
  std::vector<std::string> label_paths;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Everything one config file can carry; each subcommand reads what it needs.
struct AppConfig {
  std::string base_dir;  // relative paths resolve against this
  EmbedderConfig embedder = EmbedderConfig::mock(256, 1);
  std::string registry_path;
  std::vector<std::string> dataset_paths;
  std::string store_path;
  std::optional<std::string> ledger_path;
  std::size_t k = 64;
  std::uint64_t seed = 42;
  FitOptions fit;
  double val_fraction = 0.7;
  CalibrationOptions calibration;
  GraderConfig grader;
  BenchmarkConfig eval;
  GatewayConfig gateway;
};

/// Parses a JSON config; `base_dir` anchors relative paths.
AppConfig parse_config(const nlohmann::json& doc, const std::string& base_dir);
AppConfig load_config(const std::string& path);

/// Environment overrides, applied after the file and before flags:
/// CLUSTER_ROUTE_STORE, CLUSTER_ROUTE_REGISTRY, CLUSTER_ROUTE_HOST,
/// CLUSTER_ROUTE_PORT, CLUSTER_ROUTE_SEED, CLUSTER_ROUTE_EMBED_ENDPOINT.
void apply_env(AppConfig& cfg);

std::string resolve_path(const std::string& base_dir, const std::string& path);

}  // namespace cluster_route
