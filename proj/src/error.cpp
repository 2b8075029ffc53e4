#include "cluster_route/error.hpp"

namespace cluster_route {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::EmptyText: return "EmptyText";
    case Errc::BatchEmpty: return "BatchEmpty";
    case Errc::RemoteUnavailable: return "RemoteUnavailable";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::TooFewPoints: return "TooFewPoints";
    case Errc::HeterogeneousDim: return "HeterogeneousDim";
    case Errc::MixedModels: return "MixedModels";
    case Errc::ClusterOutOfRange: return "ClusterOutOfRange";
    case Errc::BackendFailure: return "BackendFailure";
    case Errc::AuthMissing: return "AuthMissing";
    case Errc::DuplicateModel: return "DuplicateModel";
    case Errc::UnknownModel: return "UnknownModel";
    case Errc::FingerprintMismatch: return "FingerprintMismatch";
    case Errc::BudgetTooLarge: return "BudgetTooLarge";
    case Errc::NoModels: return "NoModels";
    case Errc::EmptyQuery: return "EmptyQuery";
    case Errc::StoreUnavailable: return "StoreUnavailable";
    case Errc::TooFewQueries: return "TooFewQueries";
    case Errc::GraderUnavailable: return "GraderUnavailable";
    case Errc::VersionUnsupported: return "VersionUnsupported";
    case Errc::CorruptFile: return "CorruptFile";
    case Errc::IoError: return "IoError";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

namespace {
std::string format_message(Errc code, const std::string& message, std::optional<std::size_t> index) {
  std::string out(to_string(code));
  if (index) out += " at index " + std::to_string(*index);
  if (!message.empty()) out += ": " + message;
  return out;
}
}  // namespace

Error::Error(Errc code, const std::string& message, std::optional<std::size_t> index)
    : std::runtime_error(format_message(code, message, index)), code_(code), detail_(message), index_(index) {}

}  // namespace cluster_route
