#pragma once

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cluster_route/backends.hpp"
#include "cluster_route/embedding.hpp"
#include "cluster_route/error.hpp"

namespace test_support {

using namespace cluster_route;

/// Backend driven by a callback; records every call.
class ScriptedBackend : public Backend {
 public:
  using Fn = std::function<std::string(const std::string&, const QueryRecord&, const SamplingParams&, std::size_t)>;
  explicit ScriptedBackend(Fn fn) : fn_(std::move(fn)) {}

  std::string complete(const std::string& model_id, const QueryRecord& query, const SamplingParams& params,
                       std::size_t round) override {
    {
      std::lock_guard lock(mutex_);
      calls.push_back({model_id, round, params.temperature, params.top_p});
    }
    return fn_(model_id, query, params, round);
  }

  struct Call {
    std::string model_id;
    std::size_t round;
    double temperature;
    double top_p;
  };
  std::vector<Call> calls;

 private:
  Fn fn_;
  std::mutex mutex_;
};

inline EmbeddingVector random_unit(std::mt19937_64& gen, std::size_t dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(dim);
  for (auto& x : v) x = n(gen);
  return normalize(EmbeddingVector(std::move(v)));
}

/// Unit vectors scattered tightly around `center`.
inline std::vector<EmbeddingVector> blob(std::mt19937_64& gen, const std::vector<double>& center, std::size_t count,
                                         double spread) {
  std::normal_distribution<double> n(0.0, spread);
  std::vector<EmbeddingVector> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> v = center;
    for (auto& x : v) x += n(gen);
    out.push_back(normalize(EmbeddingVector(std::move(v))));
  }
  return out;
}

inline std::vector<double> mean_of(const std::vector<EmbeddingVector>& pts) {
  std::vector<double> m(pts.front().dim(), 0.0);
  for (const auto& p : pts) {
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += p[i];
  }
  for (auto& x : m) x /= static_cast<double>(pts.size());
  return m;
}

inline double euclid(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// A scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("cluster-route-test-" + std::to_string(std::random_device{}()) + "-" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

template <typename Fn>
Errc error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected an Error");
}

}  // namespace test_support
