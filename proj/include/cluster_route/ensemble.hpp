#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cluster_route/backends.hpp"
#include "cluster_route/query.hpp"

namespace cluster_route {

/// Answer that could not be extracted. Never wins a vote unless every sample is empty.
inline constexpr std::string_view kEmptyAnswer = "";

/// Extracts the final answer: the last \boxed{...}, else the text after the
/// last "answer is" / "answer:" marker, else the last non-empty line. The
/// result is trimmed and case-folded, then reduced per grader kind: numeric
/// to a canonical decimal, multiple choice to one letter A-J.
std::string normalize_answer(std::string_view raw, GraderKind kind);

struct Sample {
  std::string model_id;
  std::size_t round = 0;
  std::string raw;
};

struct VoteGroup {
  std::size_t count = 0;
  std::vector<Sample> samples;
};

struct VoteOutcome {
  std::map<std::string, VoteGroup> groups;
  std::string winner;
  bool tie = false;
  std::size_t samples_used = 0;
};

/// Plurality vote over normalized answers. Ties among the largest groups are
/// broken by (1) the group holding a sample from the highest-priority model,
/// (2) the group whose earliest sample has the lowest round, (3) the
/// lexicographically smallest answer.
VoteOutcome majority_vote(std::span<const Sample> samples, GraderKind kind,
                          std::span<const std::string> model_priority = {});

struct EnsembleResult {
  std::string answer;      // normalized winner
  std::string raw_answer;  // first raw sample of the winning group
  VoteOutcome vote;
  bool degraded = false;   // some samples failed
  bool unparsed = false;   // the winner is the empty sentinel
  std::size_t failures = 0;
};

/// `params.rounds` independent samples from one model, then a vote.
EnsembleResult self_consistency(const std::string& model, const QueryRecord& query, const SamplingParams& params,
                                Backend& backend);

/// Round-robin over `models` in priority order (model i gets
/// ceil((rounds - i) / n) samples), stopping early once one answer holds more
/// than rounds / 2 votes. A single model degenerates to self_consistency.
EnsembleResult model_switch(std::span<const std::string> models, const QueryRecord& query,
                            const SamplingParams& params, Backend& backend);

/// One sample at direct-mode parameters.
EnsembleResult direct(const std::string& model, const QueryRecord& query, Backend& backend,
                      const SamplingParams& params = SamplingParams::direct());

enum class EnsembleMode { Direct, Vote };

/// Picks the strategy for a routed query: Direct mode or code-graded queries
/// take one sample; otherwise n == 1 uses Self-Consistency, n > 1 Model-Switch.
EnsembleResult run_ensemble(EnsembleMode mode, std::span<const std::string> selected, const QueryRecord& query,
                            const SamplingParams& vote_params, const SamplingParams& direct_params, Backend& backend);

}  // namespace cluster_route
