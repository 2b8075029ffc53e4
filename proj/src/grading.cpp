#include "cluster_route/grading.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <sys/wait.h>

#include "cluster_route/ensemble.hpp"
#include "cluster_route/error.hpp"

namespace cluster_route {

namespace {

std::optional<double> to_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

bool run_code_grader(const std::string& command, std::string_view solution, std::string_view tests) {
  FILE* pipe = ::popen(command.c_str(), "w");
  if (!pipe) throw Error(Errc::GraderUnavailable, "cannot start grader command: " + command);
  const std::string payload = nlohmann::json{{"solution", solution}, {"tests", tests}}.dump();
  std::fwrite(payload.data(), 1, payload.size(), pipe);
  const int status = ::pclose(pipe);
  if (status == -1) throw Error(Errc::GraderUnavailable, "grader command failed to run: " + command);
  return WIFEXITED(status) && WEXITSTATUS(status) == 0;
}

}  // namespace

bool grade(std::string_view answer, std::string_view gold, GraderKind kind, const GraderConfig& config) {
  if (kind == GraderKind::CodePluggable) {
    if (!config.code_command) throw Error(Errc::GraderUnavailable, "no code grader configured");
    return run_code_grader(*config.code_command, answer, gold);
  }
  const std::string want = normalize_answer(gold, kind);
  const std::string got(answer);
  if (got.empty() || want.empty()) return false;
  if (kind != GraderKind::Numeric) return got == want;

  if (got == want) return true;
  auto a = to_double(got);
  auto b = to_double(want);
  if (!a || !b) return false;
  const double scale = std::max(std::fabs(*a), std::fabs(*b));
  return std::fabs(*a - *b) <= kNumericTolerance * scale;
}

}  // namespace cluster_route
