#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cluster_route/error.hpp"

namespace cluster_route {

/// Dense query representation. Values are always finite; the embedder hands
/// out unit-norm vectors.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double norm() const;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

/// Returns v / ||v||. Throws InvalidArgument for a zero vector.
EmbeddingVector normalize(const EmbeddingVector& v);

double dot(const EmbeddingVector& a, const EmbeddingVector& b);

/// Euclidean distance. On unit vectors d^2 = 2 - 2 cos(theta).
double distance(const EmbeddingVector& a, const EmbeddingVector& b);

enum class EmbedderKind { Remote, Mock };

struct RetryPolicy {
  int attempts = 3;
  int initial_backoff_ms = 250;
};

struct EmbedderConfig {
  std::string embedder_id = "gte-qwen2-7B-instruct";
  EmbedderKind kind = EmbedderKind::Remote;
  std::optional<std::string> endpoint;
  std::size_t dim = 3584;
  std::size_t batch_size = 32;
  std::optional<std::string> cache_path;
  std::uint64_t mock_seed = 0;
  bool cache_in_memory = true;
  std::string api_key_env = "CLUSTER_ROUTE_EMBED_KEY";
  int timeout_ms = 30000;
  RetryPolicy retry;

  /// Throws InvalidConfig when the invariants do not hold.
  void validate() const;

  static EmbedderConfig mock(std::size_t dim, std::uint64_t seed, std::string embedder_id = {});
};

/// Reference mock embedder: character trigrams of the lowercased text are
/// hashed into `dim` buckets with a seeded sign, summed, then normalized.
/// Texts shorter than three bytes contribute themselves as a single gram.
EmbeddingVector mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed);

/// Thread-safe cache keyed by (embedder_id, SHA-256 of text), optionally
/// backed by an append-only JSON-lines file.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(std::string path);

  static std::string key(std::string_view embedder_id, std::string_view text);

  std::optional<EmbeddingVector> find(const std::string& key) const;
  void insert(const std::string& key, const EmbeddingVector& v);
  std::size_t size() const;

 private:
  void load();

  std::optional<std::string> path_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, EmbeddingVector> entries_;
};

class Embedder {
 public:
  explicit Embedder(EmbedderConfig cfg);

  const EmbedderConfig& config() const { return cfg_; }
  const std::string& id() const { return cfg_.embedder_id; }

  EmbeddingVector embed(std::string_view text) const;

  /// Element-wise identical to embed(); remote calls go out in chunks of
  /// cfg.batch_size. Errors carry the index of the offending element.
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const;

  std::size_t remote_calls() const;

 private:
  std::vector<EmbeddingVector> compute(std::span<const std::string> texts, std::size_t base_index) const;
  std::vector<EmbeddingVector> fetch_remote(std::span<const std::string> texts, std::size_t base_index) const;

  EmbedderConfig cfg_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::shared_ptr<std::atomic<std::size_t>> remote_calls_;
};

}  // namespace cluster_route
