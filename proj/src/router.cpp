#include "cluster_route/router.hpp"

#include <algorithm>
#include <cctype>

#include "cluster_route/clustering.hpp"
#include "cluster_route/hashing.hpp"
#include "cluster_route/selection.hpp"

namespace cluster_route {

void RouterConfig::validate() const {
  if (n < 1) throw Error(Errc::InvalidConfig, "router n must be at least 1");
}

RoutingDecision route_embedding(const EmbeddingVector& v, const ProfileStore& store, const RouterConfig& cfg,
                                std::string query_id) {
  if (store.profiles.empty()) throw Error(Errc::StoreUnavailable, "store has no profiles");
  const ClusterAssignment a = assign(v, store.cluster_model);
  const auto profiles = store.profile_list();

  RoutingDecision d;
  d.query_id = std::move(query_id);
  d.cluster_id = a.cluster_id;
  d.distance = a.distance;
  d.snapshot_version = store.version;

  const bool any_scored = std::any_of(profiles.begin(), profiles.end(),
                                      [&](const CapabilityProfile& p) { return p.scored(a.cluster_id); });
  if (any_scored) {
    d.selected = top_n_for_cluster(profiles, a.cluster_id, cfg.n);
  } else {
    d.fallback = true;
    if (cfg.fallback_model && store.profiles.count(*cfg.fallback_model)) {
      d.selected = {*cfg.fallback_model};
    } else {
      std::vector<const CapabilityProfile*> by_global;
      for (const auto& p : profiles) by_global.push_back(&p);
      std::sort(by_global.begin(), by_global.end(), [](const CapabilityProfile* x, const CapabilityProfile* y) {
        if (x->global_score != y->global_score) return x->global_score > y->global_score;
        return x->model_id < y->model_id;
      });
      for (std::size_t i = 0; i < by_global.size() && i < cfg.n; ++i) d.selected.push_back(by_global[i]->model_id);
    }
  }
  for (const auto& id : d.selected) d.scores.push_back(store.profiles.at(id).scores[a.cluster_id]);
  return d;
}

Router::Router(std::shared_ptr<const Embedder> embedder, StoreSnapshot store, RouterConfig cfg)
    : embedder_(std::move(embedder)), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (!embedder_) throw Error(Errc::InvalidConfig, "router needs an embedder");
  if (store) check_store(*store);
  store_ = std::move(store);
}

void Router::check_store(const ProfileStore& store) const {
  if (store.embedder_id != embedder_->id()) {
    throw Error(Errc::InvalidConfig,
                "store embedder '" + store.embedder_id + "' differs from router embedder '" + embedder_->id() + "'");
  }
  if (cfg_.expected_fingerprint && !cfg_.force && *cfg_.expected_fingerprint != store.dataset_fingerprint) {
    throw Error(Errc::FingerprintMismatch, "store fingerprint " + store.dataset_fingerprint.substr(0, 12) +
                                               " does not match the configured dataset");
  }
}

StoreSnapshot Router::snapshot() const {
  std::lock_guard lock(swap_mutex_);
  return store_;
}

void Router::swap(StoreSnapshot next) {
  if (!next) throw Error(Errc::StoreUnavailable, "cannot swap in an empty snapshot");
  check_store(*next);
  std::lock_guard lock(swap_mutex_);
  store_ = std::move(next);
}

RoutingDecision Router::route(std::string_view query, std::string query_id) const {
  StoreSnapshot pinned = snapshot();
  if (!pinned) throw Error(Errc::StoreUnavailable, "no profile store loaded");
  return route(query, *pinned, std::move(query_id));
}

RoutingDecision Router::route(std::string_view query, const ProfileStore& pinned, std::string query_id) const {
  if (std::all_of(query.begin(), query.end(), [](unsigned char c) { return std::isspace(c); })) {
    throw Error(Errc::EmptyQuery, "query is empty");
  }
  if (query_id.empty()) query_id = "q-" + sha256_hex(query).substr(0, 16);
  return route_embedding(embedder_->embed(query), pinned, cfg_, std::move(query_id));
}

std::vector<RouteOutcome> Router::route_batch(std::span<const std::string> queries) const {
  StoreSnapshot pinned = snapshot();
  std::vector<RouteOutcome> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    try {
      if (!pinned) throw Error(Errc::StoreUnavailable, "no profile store loaded");
      out[i].decision = route(queries[i], *pinned);
    } catch (const Error& e) {
      out[i].error = Error(e.code(), e.detail(), i);
    }
  }
  return out;
}

}  // namespace cluster_route
