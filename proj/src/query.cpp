#include "cluster_route/query.hpp"

#include "cluster_route/error.hpp"

namespace cluster_route {

std::string_view to_string(GraderKind kind) {
  switch (kind) {
    case GraderKind::Exact: return "exact";
    case GraderKind::Numeric: return "numeric";
    case GraderKind::MultipleChoice: return "multiple_choice";
    case GraderKind::CodePluggable: return "code_pluggable";
  }
  return "exact";
}

GraderKind parse_grader_kind(std::string_view name) {
  if (name == "exact") return GraderKind::Exact;
  if (name == "numeric") return GraderKind::Numeric;
  if (name == "multiple_choice") return GraderKind::MultipleChoice;
  if (name == "code_pluggable" || name == "code") return GraderKind::CodePluggable;
  throw Error(Errc::InvalidArgument, "unknown grader kind '" + std::string(name) + "'");
}

void SamplingParams::validate() const {
  if (rounds < 1) throw Error(Errc::InvalidArgument, "rounds must be >= 1");
  if (!(temperature >= 0.0)) throw Error(Errc::InvalidArgument, "temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(Errc::InvalidArgument, "top_p must be in (0, 1]");
}

}  // namespace cluster_route
