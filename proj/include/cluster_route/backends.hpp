#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cluster_route/embedding.hpp"
#include "cluster_route/query.hpp"

namespace cluster_route {

/// An OpenAI-compatible chat-completions endpoint (e.g. a vLLM server).
struct ModelEndpoint {
  std::string id;
  std::string base_url;
  std::string model_name;
  std::string api_key_env;  // empty: no Authorization header
  std::size_t max_parallel = 4;
  int timeout_ms = 60000;

  friend bool operator==(const ModelEndpoint&, const ModelEndpoint&) = default;
};

/// Deterministic stand-in for a served model. A sample is correct iff
/// uniform(seed, id, query, round) < cluster_accuracy[query.sim_cluster].
struct SimulatedModel {
  std::string id;
  std::vector<double> cluster_accuracy;
  std::uint64_t seed = 0;
  std::pair<int, int> latency_ms{0, 0};
  std::size_t max_parallel = 64;

  friend bool operator==(const SimulatedModel&, const SimulatedModel&) = default;
};

using RegistryEntry = std::variant<ModelEndpoint, SimulatedModel>;

const std::string& entry_id(const RegistryEntry& entry);

/// The deployed model set, keyed by model id.
class ModelRegistry {
 public:
  void add(RegistryEntry entry);
  const RegistryEntry& at(const std::string& id) const;
  bool contains(const std::string& id) const { return entries_.count(id) != 0; }
  std::vector<std::string> ids() const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<std::string, RegistryEntry>& entries() const { return entries_; }

  /// Keeps only the listed ids (UnknownModel if one is missing).
  ModelRegistry subset(const std::vector<std::string>& ids) const;

  friend bool operator==(const ModelRegistry&, const ModelRegistry&) = default;

 private:
  std::map<std::string, RegistryEntry> entries_;
};

bool simulated_correct(const SimulatedModel& sim, const std::string& query_key, std::size_t true_cluster,
                       std::size_t round);

/// Gold answer when the correctness hash fires, otherwise a model- and
/// query-specific wrong answer "WRONG-<hex>". The wrong answer does not vary
/// across rounds, so one model's repeated samples are binary right/wrong.
std::string simulate_complete(const SimulatedModel& sim, const QueryRecord& query, std::size_t round);

/// Anything that can produce one sampled completion for a query.
class Backend {
 public:
  virtual ~Backend() = default;
  /// Throws Error(BackendFailure) when the sample could not be produced.
  virtual std::string complete(const std::string& model_id, const QueryRecord& query, const SamplingParams& params,
                               std::size_t round) = 0;
};

struct BackendOptions {
  RetryPolicy retry;
  std::optional<std::string> trace_path;
  bool record_requests = false;
};

struct RequestLogEntry {
  std::string model_id;
  std::size_t round = 0;
  double temperature = 0.0;
  double top_p = 0.0;
  std::size_t max_tokens = 0;
  std::string body;  // wire body for HTTP entries, empty for simulated ones
};

/// JSON-lines trace of backend calls: {ts, model_id, round, request_hash, latency_ms, status}.
class TraceLog {
 public:
  explicit TraceLog(const std::string& path);
  void write(const std::string& model_id, std::size_t round, const std::string& request_hash, double latency_ms,
             int status);

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

/// Counting bound on concurrent requests; tracks the observed peak.
class ConcurrencyLimit {
 public:
  explicit ConcurrencyLimit(std::size_t limit) : limit_(limit == 0 ? 1 : limit) {}
  void acquire();
  void release();
  std::size_t peak() const;

 private:
  const std::size_t limit_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::size_t peak_ = 0;
};

std::string build_chat_request(const ModelEndpoint& endpoint, const std::string& prompt, const SamplingParams& params);

/// One completion from an OpenAI-compatible endpoint; retries 429/5xx/transport
/// errors with exponential backoff.
std::string chat_complete(const ModelEndpoint& endpoint, const std::string& prompt, const SamplingParams& params,
                          std::size_t round, const RetryPolicy& retry = {}, TraceLog* trace = nullptr);

/// Dispatches each call to the registry entry (HTTP or simulated) and
/// enforces per-model max_parallel.
class RegistryBackend : public Backend {
 public:
  explicit RegistryBackend(ModelRegistry registry, BackendOptions options = {});

  std::string complete(const std::string& model_id, const QueryRecord& query, const SamplingParams& params,
                       std::size_t round) override;

  const ModelRegistry& registry() const { return registry_; }
  std::vector<RequestLogEntry> request_log() const;
  std::size_t peak_in_flight(const std::string& model_id) const;

 private:
  ModelRegistry registry_;
  BackendOptions options_;
  std::map<std::string, std::unique_ptr<ConcurrencyLimit>> limits_;
  std::unique_ptr<TraceLog> trace_;
  mutable std::mutex log_mutex_;
  std::vector<RequestLogEntry> log_;
};

enum class HealthState { Healthy, Unreachable, Error };

std::string_view to_string(HealthState state);

struct HealthStatus {
  std::string model_id;
  HealthState state = HealthState::Healthy;
  std::string detail;
};

/// One lightweight probe (GET /v1/models) per HTTP endpoint.
std::vector<HealthStatus> registry_health(const ModelRegistry& registry, int probe_timeout_ms = 2000);

}  // namespace cluster_route
