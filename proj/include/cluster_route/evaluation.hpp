#pragma once

#include <json.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cluster_route/backends.hpp"
#include "cluster_route/clustering.hpp"
#include "cluster_route/embedding.hpp"
#include "cluster_route/grading.hpp"
#include "cluster_route/profiling.hpp"
#include "cluster_route/query.hpp"

namespace cluster_route {

/// The five seeds of the reference protocol.
inline constexpr std::array<std::uint64_t, 5> kProtocolSeeds = {42, 999, 2024, 2025, 3407};

struct DatasetSplit {
  std::vector<std::string> val_ids;   // query keys
  std::vector<std::string> test_ids;  // query keys
  std::uint64_t seed = 0;
  double val_fraction = 0.7;
};

/// Seeded shuffle then prefix split; |val| = round(n * val_fraction), kept in [1, n - 1].
DatasetSplit split(std::span<const QueryRecord> dataset, std::uint64_t seed, double val_fraction = 0.7);

/// Splits every dataset (grouped by QueryRecord::dataset) separately and
/// returns (validation, test) query lists in input order.
std::pair<std::vector<QueryRecord>, std::vector<QueryRecord>> split_queries(std::span<const QueryRecord> queries,
                                                                             std::uint64_t seed,
                                                                             double val_fraction = 0.7);

/// rows = models, columns = queries.
using CorrectnessMatrix = std::vector<std::vector<bool>>;

/// Fraction of queries answered correctly by at least one model.
double oracle_accuracy(const CorrectnessMatrix& matrix);

struct BaselineReport {
  double max_expert = 0.0;
  double average = 0.0;
  double random_router_expectation = 0.0;  // analytic: equals average
  double random_router_empirical = 0.0;    // seeded Monte Carlo
};

BaselineReport baseline_report(const CorrectnessMatrix& matrix, std::uint64_t seed = 42, std::size_t draws = 10000);

enum class Strategy { Direct, SelfConsistency, ModelSwitch, Random, Oracle };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct BenchmarkConfig {
  Strategy strategy = Strategy::SelfConsistency;
  std::vector<std::uint64_t> seeds{42};
  std::size_t k = 64;
  std::size_t n = 1;  // models per query for ModelSwitch
  double val_fraction = 0.7;
  CalibrationOptions calibration;
  SamplingParams vote_params = SamplingParams::voting(10);
  SamplingParams direct_params = SamplingParams::direct();
  FitOptions fit;
  std::size_t parallelism = 1;
  std::uint64_t random_draws = 10000;
};

struct DatasetCell {
  std::string dataset;
  std::string category;
  std::size_t n_test = 0;
  double accuracy = 0.0;
  double oracle = 0.0;
  double max_expert = 0.0;
  double average = 0.0;
  double random_router = 0.0;
  std::map<std::string, double> per_model;
  std::map<std::string, std::size_t> routing_counts;
  std::optional<std::string> error;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::string store_fingerprint;
  std::vector<DatasetCell> cells;  // ordered by dataset name
  std::map<std::string, double> per_category;
  double overall = 0.0;
};

struct DatasetSummary {
  std::string category;
  double accuracy = 0.0;  // mean over seeds that completed
  double accuracy_std = 0.0;
  double oracle = 0.0;
  double max_expert = 0.0;
  double average = 0.0;
  double random_router = 0.0;
  std::map<std::string, double> per_model;
  std::map<std::string, double> routing_distribution;  // fractions sum to 1
  std::size_t seeds_completed = 0;
};

struct RunReport {
  Strategy strategy = Strategy::SelfConsistency;
  std::size_t k = 0;
  std::size_t n = 1;
  std::vector<std::uint64_t> seeds;
  std::vector<SeedRun> per_seed;
  std::map<std::string, DatasetSummary> datasets;
  std::map<std::string, double> per_category;  // unweighted mean of dataset accuracies
  double overall = 0.0;                        // unweighted mean of dataset accuracies
};

/// Full pipeline per seed: split, embed, fit, calibrate, route the test split,
/// answer with the strategy, grade. With `prebuilt` the calibration step is
/// skipped and the store's fingerprint must match the seed's validation split.
RunReport run_benchmark(std::span<const QueryRecord> queries, Backend& backend, std::span<const std::string> models,
                        const Embedder& embedder, const BenchmarkConfig& config,
                        const ProfileStore* prebuilt = nullptr);

nlohmann::json report_to_json(const RunReport& report);
std::string report_to_csv(const RunReport& report);

enum class SweepKind { KSweep, ModelCount, TestSize };

SweepKind parse_sweep_kind(std::string_view name);

/// Machine-readable table (header + rows) for the plot tooling.
struct SweepTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
  double number(std::size_t row, const std::string& column) const;
};

/// One run per grid point. k_sweep: grid of K (validation and test accuracy
/// of cluster-argmax routing); model_count: grid of deployment budgets;
/// test_size: grid of test fractions.
SweepTable sweep_study(SweepKind kind, std::span<const double> grid, std::span<const QueryRecord> queries,
                       Backend& backend, std::span<const std::string> models, const Embedder& embedder,
                       const BenchmarkConfig& fixed);

}  // namespace cluster_route
