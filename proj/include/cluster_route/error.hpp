#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cluster_route {

enum class Errc {
  EmptyText,
  BatchEmpty,
  RemoteUnavailable,
  DimMismatch,
  InvalidConfig,
  TooFewPoints,
  HeterogeneousDim,
  MixedModels,
  ClusterOutOfRange,
  BackendFailure,
  AuthMissing,
  DuplicateModel,
  UnknownModel,
  FingerprintMismatch,
  BudgetTooLarge,
  NoModels,
  EmptyQuery,
  StoreUnavailable,
  TooFewQueries,
  GraderUnavailable,
  VersionUnsupported,
  CorruptFile,
  IoError,
  InvalidArgument,
};

std::string_view to_string(Errc code);

/// Every failure surfaced by the library. `index` is set when the error came
/// from one element of a batch.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::optional<std::size_t> index = std::nullopt);

  Errc code() const noexcept { return code_; }
  std::optional<std::size_t> index() const noexcept { return index_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
  std::optional<std::size_t> index_;
};

}  // namespace cluster_route
