#include "cluster_route/selection.hpp"

#include <algorithm>

#include "cluster_route/error.hpp"

namespace cluster_route {

ClusterRanks rank_cluster(std::span<const CapabilityProfile> profiles, std::size_t cluster_id) {
  ClusterRanks out;
  out.cluster_id = cluster_id;
  for (const auto& p : profiles) {
    if (cluster_id >= p.k()) {
      throw Error(Errc::ClusterOutOfRange,
                  "cluster " + std::to_string(cluster_id) + " for " + p.model_id + " with k=" + std::to_string(p.k()));
    }
    out.ranked.push_back({p.model_id, p.scores[cluster_id], 0});
  }
  std::sort(out.ranked.begin(), out.ranked.end(), [](const RankedModel& a, const RankedModel& b) {
    if (a.score.has_value() != b.score.has_value()) return a.score.has_value();
    if (a.score && *a.score != *b.score) return *a.score > *b.score;
    return a.model_id < b.model_id;
  });
  for (std::size_t i = 0; i < out.ranked.size(); ++i) {
    const bool same_as_prev = i > 0 && out.ranked[i].score == out.ranked[i - 1].score;
    out.ranked[i].rank = same_as_prev ? out.ranked[i - 1].rank : i + 1;
  }
  return out;
}

std::vector<SelectionScore> reciprocal_rank_scores(std::span<const CapabilityProfile> profiles) {
  if (profiles.empty()) return {};
  const std::size_t k = profiles.front().k();
  for (const auto& p : profiles) {
    if (p.k() != k) throw Error(Errc::InvalidArgument, "profiles disagree on k");
  }

  std::vector<SelectionScore> out(profiles.size());
  std::vector<std::size_t> order(profiles.size());
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    out[i].model_id = profiles[i].model_id;
    out[i].per_cluster_ranks.assign(k, std::nullopt);
    order[i] = i;
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return profiles[a].model_id < profiles[b].model_id; });

  for (std::size_t c = 0; c < k; ++c) {
    const ClusterRanks ranks = rank_cluster(profiles, c);
    for (const auto& r : ranks.ranked) {
      if (!r.score) continue;
      for (auto& s : out) {
        if (s.model_id == r.model_id) {
          s.per_cluster_ranks[c] = r.rank;
          break;
        }
      }
    }
  }
  for (auto& s : out) {
    for (const auto& r : s.per_cluster_ranks) {
      if (r) s.s += 1.0 / static_cast<double>(*r);
    }
  }

  std::vector<SelectionScore> sorted;
  sorted.reserve(out.size());
  for (std::size_t i : order) sorted.push_back(std::move(out[i]));
  return sorted;
}

std::vector<std::string> select_model_set(std::span<const CapabilityProfile> pool, std::size_t budget) {
  if (budget < 1) throw Error(Errc::InvalidArgument, "budget must be at least 1");
  if (budget > pool.size()) {
    throw Error(Errc::BudgetTooLarge,
                "budget " + std::to_string(budget) + " exceeds pool of " + std::to_string(pool.size()));
  }
  auto scores = reciprocal_rank_scores(pool);
  std::stable_sort(scores.begin(), scores.end(), [](const SelectionScore& a, const SelectionScore& b) {
    if (a.s != b.s) return a.s > b.s;
    return a.model_id < b.model_id;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < budget; ++i) out.push_back(scores[i].model_id);
  return out;
}

std::vector<std::string> top_n_for_cluster(std::span<const CapabilityProfile> profiles, std::size_t cluster_id,
                                           std::size_t n) {
  if (profiles.empty()) throw Error(Errc::NoModels, "no profiles to choose from");
  if (n < 1) throw Error(Errc::InvalidArgument, "n must be at least 1");
  const ClusterRanks ranks = rank_cluster(profiles, cluster_id);
  std::vector<std::string> out;
  for (const auto& r : ranks.ranked) {
    if (out.size() == n) return out;
    if (r.score) out.push_back(r.model_id);
  }

  std::vector<const CapabilityProfile*> unscored;
  for (const auto& p : profiles) {
    if (!p.scores[cluster_id]) unscored.push_back(&p);
  }
  std::sort(unscored.begin(), unscored.end(), [](const CapabilityProfile* a, const CapabilityProfile* b) {
    if (a->global_score != b->global_score) return a->global_score > b->global_score;
    return a->model_id < b->model_id;
  });
  for (const CapabilityProfile* p : unscored) {
    if (out.size() == n) break;
    out.push_back(p->model_id);
  }
  return out;
}

}  // namespace cluster_route
