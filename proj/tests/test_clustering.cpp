#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cluster_route/clustering.hpp"
#include "support.hpp"

using namespace cluster_route;
using namespace test_support;

namespace {

std::vector<EmbeddingVector> random_points(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<EmbeddingVector> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_unit(gen, dim));
  return out;
}

double sq(double x) { return x * x; }

}  // namespace

TEST_CASE("k=1 centroid is the mean and inertia is the scatter") {
  std::vector<EmbeddingVector> pts{EmbeddingVector({1, 0}), EmbeddingVector({-1, 0}), EmbeddingVector({0, 1}),
                                   EmbeddingVector({0, -1})};
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto m = fit(pts, 1, seed);
    const auto mu = mean_of(pts);
    CHECK(m.centroids[0][0] == doctest::Approx(mu[0]));
    CHECK(m.centroids[0][1] == doctest::Approx(mu[1]));
    double inertia = 0.0;
    for (const auto& p : pts) inertia += sq(p[0] - mu[0]) + sq(p[1] - mu[1]);
    CHECK(m.inertia == doctest::Approx(inertia));
  }
}

TEST_CASE("k=n puts every point in its own cluster") {
  const auto pts = random_points(12, 5, 4);
  const auto m = fit(pts, 12, 9);
  CHECK(m.inertia == doctest::Approx(0.0).epsilon(1e-12));
  std::set<std::vector<double>> want;
  std::set<std::vector<double>> got;
  for (const auto& p : pts) want.insert({p.values().begin(), p.values().end()});
  for (const auto& c : m.centroids) got.insert({c.values().begin(), c.values().end()});
  CHECK(want == got);
}

TEST_CASE("two blobs are recovered") {
  std::mt19937_64 gen(1);
  std::vector<double> c1(8, 0.0), c2(8, 0.0);
  c1[0] = 1.0;
  c2[1] = 1.0;
  const auto b1 = blob(gen, c1, 50, 0.03);
  const auto b2 = blob(gen, c2, 50, 0.03);
  std::vector<EmbeddingVector> pts(b1);
  pts.insert(pts.end(), b2.begin(), b2.end());
  const auto m = fit(pts, 2, 42);
  const auto m1 = mean_of(b1);
  const auto m2 = mean_of(b2);
  const double d11 = euclid(m.centroids[0].values(), m1), d12 = euclid(m.centroids[0].values(), m2);
  const double d21 = euclid(m.centroids[1].values(), m1), d22 = euclid(m.centroids[1].values(), m2);
  CHECK(std::min(d11 + d22, d12 + d21) < 0.2);
  CHECK(std::max(std::min(d11, d12), std::min(d21, d22)) < 0.1);
  CHECK(m.inertia < fit(pts, 1, 42).inertia);
}

TEST_CASE("inertia trace is non-increasing and the fit is reproducible") {
  const auto pts = random_points(400, 16, 8);
  FitTrace t1, t2;
  const auto a = fit(pts, 10, 77, {}, &t1);
  const auto b = fit(pts, 10, 77, {}, &t2);
  CHECK(a == b);
  CHECK(t1.inertia == t2.inertia);
  CHECK(t1.converged);
  for (std::size_t i = 1; i < t1.inertia.size(); ++i) CHECK(t1.inertia[i] <= t1.inertia[i - 1] + 1e-12);
  CHECK(fit(pts, 10, 78) != a);
}

TEST_CASE("converged centroids are the means of their members") {
  const auto pts = random_points(300, 6, 2);
  FitTrace t;
  const auto m = fit(pts, 7, 5, {}, &t);
  REQUIRE(t.converged);
  for (std::size_t c = 0; c < m.k; ++c) {
    std::vector<EmbeddingVector> members;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (t.labels[i] == c) members.push_back(pts[i]);
    }
    REQUIRE(!members.empty());
    CHECK(euclid(m.centroids[c].values(), mean_of(members)) < 1e-9);
  }
}

TEST_CASE("restarts keep the lowest-inertia run") {
  const auto pts = random_points(200, 4, 12);
  FitOptions one;
  FitOptions many;
  many.restarts = 8;
  CHECK(fit(pts, 6, 3, many).inertia <= fit(pts, 6, 3, one).inertia + 1e-12);
}

TEST_CASE("fit rejects bad inputs") {
  const auto pts = random_points(3, 4, 1);
  CHECK(error_code_of([&] { fit(pts, 4, 1); }) == Errc::TooFewPoints);
  CHECK(error_code_of([&] { fit(pts, 0, 1); }) == Errc::InvalidArgument);
  std::vector<EmbeddingVector> mixed{EmbeddingVector({1.0, 0.0}), EmbeddingVector({1.0, 0.0, 0.0})};
  CHECK(error_code_of([&] { fit(mixed, 1, 1); }) == Errc::HeterogeneousDim);
}

TEST_CASE("duplicate points with k above the distinct count still yield k centroids") {
  std::vector<EmbeddingVector> pts(6, EmbeddingVector({1.0, 0.0}));
  pts.push_back(EmbeddingVector({0.0, 1.0}));
  const auto m = fit(pts, 3, 1);
  CHECK(m.centroids.size() == 3);
}

TEST_CASE("assign: identity, tie rule and brute force") {
  ClusterModel m;
  m.k = 6;
  m.dim = 2;
  for (int i = 0; i < 6; ++i) m.centroids.push_back(EmbeddingVector({static_cast<double>(i), 0.0}));
  const auto a = assign(EmbeddingVector({3.0, 0.0}), m);
  CHECK(a.cluster_id == 3);
  CHECK(a.distance == 0.0);
  // Equidistant from 2 and 5 when those are the only close ones.
  ClusterModel t;
  t.k = 6;
  t.dim = 2;
  for (int i = 0; i < 6; ++i) t.centroids.push_back(EmbeddingVector({100.0 + i, 100.0}));
  t.centroids[2] = EmbeddingVector({1.0, 0.0});
  t.centroids[5] = EmbeddingVector({-1.0, 0.0});
  CHECK(assign(EmbeddingVector({0.0, 0.0}), t).cluster_id == 2);
  CHECK(error_code_of([&] { assign(EmbeddingVector({0.0, 0.0, 0.0}), t); }) == Errc::DimMismatch);

  const auto cents = random_points(64, 12, 3);
  ClusterModel big;
  big.k = 64;
  big.dim = 12;
  big.centroids = cents;
  for (const auto& v : random_points(1000, 12, 4)) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < cents.size(); ++c) {
      const double d = euclid(v.values(), cents[c].values());
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    CHECK(assign(v, big).cluster_id == best);
  }
}

TEST_CASE("refit with dataset is a fit over the union") {
  const auto a = random_points(60, 5, 1);
  const auto b = random_points(40, 5, 2);
  CHECK(refit_with_dataset(a, {}, 4, 9) == fit(a, 4, 9));
  CHECK(refit_with_dataset({}, b, 4, 9) == fit(b, 4, 9));

  std::mt19937_64 gen(3);
  std::vector<double> c1(6, 0.0), c2(6, 0.0);
  c1[2] = 1.0;
  c2[4] = 1.0;
  const auto b1 = blob(gen, c1, 64, 0.02);
  const auto b2 = blob(gen, c2, 64, 0.02);
  const auto m = refit_with_dataset(b1, b2, 2, 5);
  const double near1 = std::min(euclid(m.centroids[0].values(), mean_of(b1)), euclid(m.centroids[1].values(), mean_of(b1)));
  const double near2 = std::min(euclid(m.centroids[0].values(), mean_of(b2)), euclid(m.centroids[1].values(), mean_of(b2)));
  CHECK(near1 < 0.05);
  CHECK(near2 < 0.05);
  CHECK(error_code_of([&] { refit_with_dataset(random_points(2, 5, 1), random_points(1, 5, 2), 4, 1); }) ==
        Errc::TooFewPoints);
}

TEST_CASE("sweep_k") {
  const auto pts = random_points(100, 6, 7);
  const std::vector<std::size_t> one{1};
  const auto s1 = sweep_k(pts, one, 3);
  REQUIRE(s1.size() == 1);
  const auto mu = mean_of(pts);
  CHECK(euclid(s1[0].second.centroids[0].values(), mu) < 1e-12);

  const std::vector<std::size_t> ks{1, 2, 4};
  const auto s = sweep_k(pts, ks, 3);
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i].second.inertia <= s[i - 1].second.inertia + 1e-12);

  const std::vector<std::size_t> all{100};
  CHECK(sweep_k(pts, all, 3)[0].second.inertia == doctest::Approx(0.0).epsilon(1e-12));
}
