#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cluster_route/embedding.hpp"
#include "cluster_route/error.hpp"
#include "cluster_route/profiling.hpp"

namespace cluster_route {

struct RouterConfig {
  std::size_t n = 1;
  std::size_t k = 64;
  std::optional<std::string> fallback_model;
  // When set, stores whose dataset fingerprint differs are refused unless `force`.
  std::optional<std::string> expected_fingerprint;
  bool force = false;

  void validate() const;
};

struct RoutingDecision {
  std::string query_id;
  std::size_t cluster_id = 0;
  double distance = 0.0;
  std::vector<std::string> selected;
  std::vector<std::optional<double>> scores;
  std::int64_t snapshot_version = 0;
  bool fallback = false;

  friend bool operator==(const RoutingDecision&, const RoutingDecision&) = default;
};

using StoreSnapshot = std::shared_ptr<const ProfileStore>;

/// Routes an already-embedded query against one store snapshot.
RoutingDecision route_embedding(const EmbeddingVector& v, const ProfileStore& store, const RouterConfig& cfg,
                                std::string query_id = {});

struct RouteOutcome {
  std::optional<RoutingDecision> decision;
  std::optional<Error> error;
};

/// Online routing path. Readers pin one snapshot per call; `swap` replaces
/// the snapshot for subsequent calls.
class Router {
 public:
  Router(std::shared_ptr<const Embedder> embedder, StoreSnapshot store, RouterConfig cfg);

  StoreSnapshot snapshot() const;
  void swap(StoreSnapshot next);

  const RouterConfig& config() const { return cfg_; }
  const Embedder& embedder() const { return *embedder_; }

  RoutingDecision route(std::string_view query, std::string query_id = {}) const;
  RoutingDecision route(std::string_view query, const ProfileStore& pinned, std::string query_id = {}) const;

  /// Element-wise route over one pinned snapshot; errors are collected per element.
  std::vector<RouteOutcome> route_batch(std::span<const std::string> queries) const;

 private:
  void check_store(const ProfileStore& store) const;

  std::shared_ptr<const Embedder> embedder_;
  RouterConfig cfg_;
  mutable std::mutex swap_mutex_;
  StoreSnapshot store_;
};

}  // namespace cluster_route
