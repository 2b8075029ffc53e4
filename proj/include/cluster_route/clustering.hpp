#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cluster_route/embedding.hpp"

namespace cluster_route {

/// Fitted partition of the query space. Immutable after fit.
struct ClusterModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<EmbeddingVector> centroids;
  std::string embedder_id;
  std::uint64_t seed = 0;
  double inertia = 0.0;
  std::size_t n_fit_points = 0;

  friend bool operator==(const ClusterModel&, const ClusterModel&) = default;
};

struct ClusterAssignment {
  std::size_t cluster_id = 0;
  double distance = 0.0;
};

struct FitOptions {
  std::size_t max_iterations = 1000;
  // Best-of-N k-means++ initializations; run 0 always uses the caller's seed.
  std::size_t restarts = 1;
  std::string embedder_id;
};

/// Per-iteration record of the winning run.
struct FitTrace {
  std::vector<double> inertia;          // objective after each assignment step
  std::vector<std::size_t> labels;      // final assignment of every fit point
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t empty_repairs = 0;
};

/// k-means++ seeding followed by Lloyd iterations until no assignment changes
/// or `max_iterations`. An emptied cluster is reseeded at the point farthest
/// from its current centroid.
ClusterModel fit(std::span<const EmbeddingVector> points, std::size_t k, std::uint64_t seed,
                 const FitOptions& options = {}, FitTrace* trace = nullptr);

/// Nearest centroid; ties go to the lowest cluster id.
ClusterAssignment assign(const EmbeddingVector& v, const ClusterModel& model);

/// fit(existing ∪ new_points, k, seed). The caller's model is untouched.
ClusterModel refit_with_dataset(std::span<const EmbeddingVector> existing, std::span<const EmbeddingVector> new_points,
                                std::size_t k, std::uint64_t seed, const FitOptions& options = {});

std::vector<std::pair<std::size_t, ClusterModel>> sweep_k(std::span<const EmbeddingVector> points,
                                                          std::span<const std::size_t> k_values, std::uint64_t seed,
                                                          const FitOptions& options = {});

}  // namespace cluster_route
