#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace cluster_route {

enum class GraderKind { Exact, Numeric, MultipleChoice, CodePluggable };

std::string_view to_string(GraderKind kind);
GraderKind parse_grader_kind(std::string_view name);

/// One benchmark item. `sim_cluster` is the generating cluster label that the
/// simulated backend keys its correctness on; real datasets leave it empty.
struct QueryRecord {
  std::string id;
  std::string text;
  std::string gold;
  GraderKind grader = GraderKind::Exact;
  std::string category;
  std::string dataset;
  std::optional<std::size_t> sim_cluster;

  /// Collection-wide identity: "dataset/id", or just id when dataset is empty.
  std::string key() const { return dataset.empty() ? id : dataset + "/" + id; }

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

struct SamplingParams {
  double temperature = 0.7;
  double top_p = 1.0;
  std::size_t max_tokens = 1024;
  std::size_t rounds = 10;

  /// Repeated-sampling defaults (Self-Consistency and Model-Switch).
  static SamplingParams voting(std::size_t rounds = 10) { return {0.7, 1.0, 1024, rounds}; }
  /// Single-shot CoT defaults.
  static SamplingParams direct() { return {0.2, 1.0, 1024, 1}; }

  void validate() const;

  friend bool operator==(const SamplingParams&, const SamplingParams&) = default;
};

}  // namespace cluster_route
