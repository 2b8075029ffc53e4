#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "cluster_route/query.hpp"

namespace cluster_route {

struct GraderConfig {
  /// Shell command for code_pluggable queries. It receives
  /// {"solution": ..., "tests": ...} on stdin; exit status 0 means pass.
  std::optional<std::string> code_command;
};

/// Relative tolerance for numeric answers.
inline constexpr double kNumericTolerance = 1e-6;

/// `answer` is a normalized answer; `gold` is normalized with the same kind
/// before comparing.
bool grade(std::string_view answer, std::string_view gold, GraderKind kind, const GraderConfig& config = {});

}  // namespace cluster_route
