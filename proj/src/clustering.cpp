#include "cluster_route/clustering.hpp"

#include <limits>

#include "cluster_route/error.hpp"
#include "cluster_route/rng.hpp"

namespace cluster_route {

namespace {

// Row-major n x dim copy of the input for the inner loops.
struct PointMatrix {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  const double* row(std::size_t i) const { return data.data() + i * dim; }
};

PointMatrix pack(std::span<const EmbeddingVector> points) {
  PointMatrix m;
  m.n = points.size();
  m.dim = points.empty() ? 0 : points.front().dim();
  m.data.reserve(m.n * m.dim);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].dim() != m.dim) {
      throw Error(Errc::HeterogeneousDim,
                  "point " + std::to_string(i) + " has dim " + std::to_string(points[i].dim()) + ", expected " +
                      std::to_string(m.dim));
    }
    m.data.insert(m.data.end(), points[i].values().begin(), points[i].values().end());
  }
  return m;
}

double sq_dist(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

std::vector<double> kmeans_plus_plus(const PointMatrix& pts, std::size_t k, Rng& rng) {
  std::vector<double> centers;
  centers.reserve(k * pts.dim);
  std::vector<bool> chosen(pts.n, false);

  auto take = [&](std::size_t idx) {
    chosen[idx] = true;
    centers.insert(centers.end(), pts.row(idx), pts.row(idx) + pts.dim);
  };

  take(static_cast<std::size_t>(rng.below(pts.n)));
  std::vector<double> d2(pts.n);
  for (std::size_t i = 0; i < pts.n; ++i) d2[i] = sq_dist(pts.row(i), centers.data(), pts.dim);

  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = pts.n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < pts.n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > target) break;
      }
    }
    if (pick == pts.n) {
      // Remaining mass is zero (duplicates); fall back to a uniform unchosen index.
      std::vector<std::size_t> open;
      for (std::size_t i = 0; i < pts.n; ++i) {
        if (!chosen[i]) open.push_back(i);
      }
      pick = open[static_cast<std::size_t>(rng.below(open.size()))];
    }
    take(pick);
    const double* center = centers.data() + c * pts.dim;
    for (std::size_t i = 0; i < pts.n; ++i) d2[i] = std::min(d2[i], sq_dist(pts.row(i), center, pts.dim));
  }
  return centers;
}

struct RunResult {
  std::vector<double> centers;
  double inertia = 0.0;
  FitTrace trace;
};

RunResult lloyd(const PointMatrix& pts, std::size_t k, std::vector<double> centers, std::size_t max_iterations) {
  RunResult run;
  std::vector<std::size_t> labels(pts.n, 0);
  std::vector<double> dist(pts.n, 0.0);
  bool first = true;

  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    bool changed = first;
    double inertia = 0.0;
    for (std::size_t i = 0; i < pts.n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(pts.row(i), centers.data() + c * pts.dim, pts.dim);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (labels[i] != best) changed = true;
      labels[i] = best;
      dist[i] = best_d;
      inertia += best_d;
    }
    first = false;
    run.trace.inertia.push_back(inertia);
    run.trace.iterations = iter + 1;
    run.inertia = inertia;
    if (!changed) {
      run.trace.converged = true;
      break;
    }
    if (iter + 1 == max_iterations) break;

    std::vector<double> sums(k * pts.dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < pts.n; ++i) {
      double* s = sums.data() + labels[i] * pts.dim;
      const double* x = pts.row(i);
      for (std::size_t j = 0; j < pts.dim; ++j) s[j] += x[j];
      ++counts[labels[i]];
    }
    std::vector<bool> donated(pts.n, false);
    for (std::size_t c = 0; c < k; ++c) {
      double* center = centers.data() + c * pts.dim;
      if (counts[c] > 0) {
        const double* s = sums.data() + c * pts.dim;
        for (std::size_t j = 0; j < pts.dim; ++j) center[j] = s[j] / static_cast<double>(counts[c]);
        continue;
      }
      std::size_t far = pts.n;
      for (std::size_t i = 0; i < pts.n; ++i) {
        if (!donated[i] && (far == pts.n || dist[i] > dist[far])) far = i;
      }
      donated[far] = true;
      dist[far] = 0.0;
      std::copy(pts.row(far), pts.row(far) + pts.dim, center);
      ++run.trace.empty_repairs;
    }
  }
  run.centers = std::move(centers);
  run.trace.labels = std::move(labels);
  return run;
}

}  // namespace

ClusterModel fit(std::span<const EmbeddingVector> points, std::size_t k, std::uint64_t seed, const FitOptions& options,
                 FitTrace* trace) {
  if (k == 0) throw Error(Errc::InvalidArgument, "k must be at least 1");
  if (points.size() < k) {
    throw Error(Errc::TooFewPoints,
                std::to_string(points.size()) + " points cannot form " + std::to_string(k) + " clusters");
  }
  const PointMatrix pts = pack(points);
  const std::size_t restarts = std::max<std::size_t>(1, options.restarts);

  RunResult best;
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(r == 0 ? seed : mix64(seed ^ (0x5851f42d4c957f2dULL * r)));
    RunResult run = lloyd(pts, k, kmeans_plus_plus(pts, k, rng), std::max<std::size_t>(1, options.max_iterations));
    if (r == 0 || run.inertia < best.inertia) best = std::move(run);
  }

  ClusterModel model;
  model.k = k;
  model.dim = pts.dim;
  model.seed = seed;
  model.inertia = best.inertia;
  model.n_fit_points = pts.n;
  model.embedder_id = options.embedder_id;
  model.centroids.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    const double* row = best.centers.data() + c * pts.dim;
    model.centroids.emplace_back(std::vector<double>(row, row + pts.dim));
  }
  if (trace) *trace = std::move(best.trace);
  return model;
}

ClusterAssignment assign(const EmbeddingVector& v, const ClusterModel& model) {
  if (model.centroids.empty()) throw Error(Errc::InvalidArgument, "cluster model has no centroids");
  if (v.dim() != model.dim) {
    throw Error(Errc::DimMismatch, "query dim " + std::to_string(v.dim()) + " vs centroid dim " + std::to_string(model.dim));
  }
  ClusterAssignment best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < model.centroids.size(); ++c) {
    const double d = distance(v, model.centroids[c]);
    if (d < best.distance) best = {c, d};
  }
  return best;
}

ClusterModel refit_with_dataset(std::span<const EmbeddingVector> existing, std::span<const EmbeddingVector> new_points,
                                std::size_t k, std::uint64_t seed, const FitOptions& options) {
  std::vector<EmbeddingVector> all(existing.begin(), existing.end());
  all.insert(all.end(), new_points.begin(), new_points.end());
  return fit(all, k, seed, options);
}

std::vector<std::pair<std::size_t, ClusterModel>> sweep_k(std::span<const EmbeddingVector> points,
                                                          std::span<const std::size_t> k_values, std::uint64_t seed,
                                                          const FitOptions& options) {
  std::vector<std::pair<std::size_t, ClusterModel>> out;
  out.reserve(k_values.size());
  for (std::size_t k : k_values) out.emplace_back(k, fit(points, k, seed, options));
  return out;
}

}  // namespace cluster_route
