#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "cluster_route/backends.hpp"
#include "cluster_route/clustering.hpp"
#include "cluster_route/embedding.hpp"
#include "cluster_route/grading.hpp"
#include "cluster_route/query.hpp"

namespace cluster_route {

/// Per-model, per-cluster accuracy on the validation split. A cluster with no
/// records is UNSCORED (nullopt).
struct CapabilityProfile {
  std::string model_id;
  std::vector<std::optional<double>> scores;
  std::vector<std::size_t> correct_counts;
  std::vector<std::size_t> total_counts;
  double global_score = 0.0;

  std::size_t k() const { return scores.size(); }
  bool scored(std::size_t cluster) const { return scores.at(cluster).has_value(); }

  /// Rebuilds scores and global_score from the counts.
  static CapabilityProfile from_counts(std::string model_id, std::vector<std::size_t> correct,
                                       std::vector<std::size_t> total);

  friend bool operator==(const CapabilityProfile&, const CapabilityProfile&) = default;
};

struct ValidationRecord {
  std::string query_id;
  std::string model_id;
  std::size_t cluster_id = 0;
  std::string raw_answer;
  std::string normalized_answer;
  bool correct = false;
};

/// Immutable calibration snapshot: cluster model plus every model's profile.
struct ProfileStore {
  std::int64_t version = 1;
  std::string embedder_id;
  ClusterModel cluster_model;
  std::map<std::string, CapabilityProfile> profiles;
  std::string dataset_fingerprint;
  std::string created_at;
  std::vector<std::string> incomplete_models;

  std::vector<CapabilityProfile> profile_list() const;

  friend bool operator==(const ProfileStore&, const ProfileStore&) = default;
};

/// SHA-256 over the sorted, newline-joined query keys.
std::string dataset_fingerprint(std::span<const QueryRecord> queries);

std::string utc_timestamp();

/// Tallies per-cluster accuracy. `model_id` names the profile when `records`
/// is empty.
CapabilityProfile score_model(std::span<const ValidationRecord> records, std::size_t k, std::string model_id = {});

enum class CalibrationMode { SingleSample, SelfConsistency };

struct GradedAnswer {
  std::string raw;
  std::string normalized;
  bool correct = false;
};

/// Persistent record of graded validation answers keyed by
/// (model_id, query key, sampling fingerprint); makes recalibration incremental.
class GradeLedger {
 public:
  GradeLedger() = default;
  explicit GradeLedger(std::string path);

  std::optional<GradedAnswer> find(const std::string& model_id, const std::string& query_key,
                                   const std::string& fingerprint) const;
  void insert(const std::string& model_id, const std::string& query_key, const std::string& fingerprint,
              const GradedAnswer& answer);
  std::size_t size() const;

 private:
  using Key = std::tuple<std::string, std::string, std::string>;
  std::optional<std::string> path_;
  mutable std::mutex mutex_;
  std::map<Key, GradedAnswer> entries_;
};

struct CalibrationOptions {
  CalibrationMode mode = CalibrationMode::SingleSample;
  std::size_t rounds = 10;
  SamplingParams params = SamplingParams::voting();
  std::size_t parallelism = 1;
  bool allow_partial = false;
  GraderConfig grader;
  std::string created_at;  // empty: current UTC time

  /// Identifies the sampling regime in the grade ledger.
  std::string sampling_fingerprint() const;
};

/// Answers every validation query with every model, grades, and aggregates
/// into a new store at version 1.
ProfileStore calibrate(std::span<const std::string> models, Backend& backend, std::span<const QueryRecord> val_queries,
                       const Embedder& embedder, const ClusterModel& cluster_model,
                       const CalibrationOptions& options = {}, GradeLedger* ledger = nullptr);

/// Profiles one more model against the existing partition. Pre-existing
/// profiles and centroids are carried over untouched.
ProfileStore add_model(const ProfileStore& store, const std::string& new_model, Backend& backend,
                       std::span<const QueryRecord> val_queries, const Embedder& embedder,
                       const CalibrationOptions& options = {}, GradeLedger* ledger = nullptr);

/// Re-clusters old ∪ new validation queries and re-buckets every graded
/// answer. Models are only queried for answers missing from the ledger.
ProfileStore recalibrate_with_dataset(const ProfileStore& store, std::span<const QueryRecord> old_val_queries,
                                      std::span<const QueryRecord> new_queries, std::span<const std::string> models,
                                      Backend& backend, const Embedder& embedder, std::size_t k, std::uint64_t seed,
                                      const CalibrationOptions& options = {}, GradeLedger* ledger = nullptr,
                                      const FitOptions& fit_options = {});

struct ModelEvaluation {
  std::vector<ValidationRecord> records;  // sorted by (model_id, query_id)
  std::vector<std::string> incomplete;    // models with at least one failed query
};

/// Graded answers of every model on every query; `cluster_ids[i]` is the
/// cluster of `queries[i]`. Answers already in the ledger are reused.
ModelEvaluation evaluate_models(std::span<const std::string> models, Backend& backend,
                                std::span<const QueryRecord> queries, std::span<const std::size_t> cluster_ids,
                                const CalibrationOptions& options, GradeLedger& ledger);

}  // namespace cluster_route
