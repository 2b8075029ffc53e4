#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cluster_route/profiling.hpp"

namespace cluster_route {

struct RankedModel {
  std::string model_id;
  std::optional<double> score;  // nullopt: UNSCORED
  std::size_t rank = 0;         // competition rank, 1-based

  friend bool operator==(const RankedModel&, const RankedModel&) = default;
};

/// Models of one cluster ordered by score descending then model id. Equal
/// scores share the minimum rank (1, 2, 2, 4); UNSCORED models follow every
/// scored one.
struct ClusterRanks {
  std::size_t cluster_id = 0;
  std::vector<RankedModel> ranked;
};

struct SelectionScore {
  std::string model_id;
  double s = 0.0;  // sum over clusters of 1 / rank; UNSCORED clusters add nothing
  std::vector<std::optional<std::size_t>> per_cluster_ranks;
};

ClusterRanks rank_cluster(std::span<const CapabilityProfile> profiles, std::size_t cluster_id);

/// One SelectionScore per profile, ordered by model id.
std::vector<SelectionScore> reciprocal_rank_scores(std::span<const CapabilityProfile> profiles);

/// The `budget` models with the largest reciprocal-rank score, ordered by
/// score descending, ties by model id.
std::vector<std::string> select_model_set(std::span<const CapabilityProfile> pool, std::size_t budget);

/// Leading `n` scored models of the cluster. When fewer than `n` are scored
/// the rest is padded with UNSCORED models by global score.
std::vector<std::string> top_n_for_cluster(std::span<const CapabilityProfile> profiles, std::size_t cluster_id,
                                           std::size_t n);

}  // namespace cluster_route
