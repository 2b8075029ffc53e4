#include "cluster_route/backends.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "cluster_route/error.hpp"
#include "cluster_route/hashing.hpp"
#include "http_util.hpp"

namespace cluster_route {

using json = nlohmann::json;

const std::string& entry_id(const RegistryEntry& entry) {
  return std::visit([](const auto& e) -> const std::string& { return e.id; }, entry);
}

void ModelRegistry::add(RegistryEntry entry) {
  const std::string& id = entry_id(entry);
  if (id.empty()) throw Error(Errc::InvalidConfig, "registry entry without id");
  if (const auto* ep = std::get_if<ModelEndpoint>(&entry); ep && ep->max_parallel < 1) {
    throw Error(Errc::InvalidConfig, "max_parallel must be >= 1 for " + id);
  }
  if (entries_.count(id)) throw Error(Errc::DuplicateModel, id);
  std::string key = id;
  entries_.emplace(std::move(key), std::move(entry));
}

const RegistryEntry& ModelRegistry::at(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw Error(Errc::UnknownModel, id);
  return it->second;
}

std::vector<std::string> ModelRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : entries_) out.push_back(id);
  return out;
}

ModelRegistry ModelRegistry::subset(const std::vector<std::string>& ids) const {
  ModelRegistry out;
  for (const auto& id : ids) out.add(at(id));
  return out;
}

bool simulated_correct(const SimulatedModel& sim, const std::string& query_key, std::size_t true_cluster,
                       std::size_t round) {
  if (true_cluster >= sim.cluster_accuracy.size()) {
    throw Error(Errc::ClusterOutOfRange, "simulated model " + sim.id + " has no accuracy for cluster " +
                                             std::to_string(true_cluster));
  }
  const double u = unit_interval(KeyHasher(sim.seed).add(sim.id).add(query_key).add(round).value());
  return u < sim.cluster_accuracy[true_cluster];
}

std::string simulate_complete(const SimulatedModel& sim, const QueryRecord& query, std::size_t round) {
  if (!query.sim_cluster) {
    throw Error(Errc::InvalidArgument, "query " + query.key() + " has no simulation cluster label");
  }
  const std::string key = query.key();
  if (simulated_correct(sim, key, *query.sim_cluster, round)) return "Answer: " + query.gold;
  const std::uint64_t h = KeyHasher(sim.seed).add("wrong").add(sim.id).add(key).value();
  return "Answer: WRONG-" + hex64(h).substr(0, 12);
}

TraceLog::TraceLog(const std::string& path) : out_(path, std::ios::app) {
  if (!out_) throw Error(Errc::IoError, "cannot open trace log " + path);
}

void TraceLog::write(const std::string& model_id, std::size_t round, const std::string& request_hash,
                     double latency_ms, int status) {
  const auto ts = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
  json rec{{"ts", ts},
           {"model_id", model_id},
           {"round", round},
           {"request_hash", request_hash},
           {"latency_ms", latency_ms},
           {"status", status}};
  std::lock_guard lock(mutex_);
  out_ << rec.dump() << '\n';
  out_.flush();
}

void ConcurrencyLimit::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return in_flight_ < limit_; });
  ++in_flight_;
  peak_ = std::max(peak_, in_flight_);
}

void ConcurrencyLimit::release() {
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
  }
  cv_.notify_one();
}

std::size_t ConcurrencyLimit::peak() const {
  std::lock_guard lock(mutex_);
  return peak_;
}

std::string build_chat_request(const ModelEndpoint& endpoint, const std::string& prompt, const SamplingParams& params) {
  json body{{"model", endpoint.model_name.empty() ? endpoint.id : endpoint.model_name},
            {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
            {"temperature", params.temperature},
            {"top_p", params.top_p},
            {"max_tokens", params.max_tokens}};
  return body.dump();
}

std::string chat_complete(const ModelEndpoint& endpoint, const std::string& prompt, const SamplingParams& params,
                          std::size_t round, const RetryPolicy& retry, TraceLog* trace) {
  httplib::Headers headers;
  if (!endpoint.api_key_env.empty()) {
    const char* key = std::getenv(endpoint.api_key_env.c_str());
    if (!key || !*key) throw Error(Errc::AuthMissing, "env var " + endpoint.api_key_env + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string payload = build_chat_request(endpoint, prompt, params);
  const std::string request_hash = sha256_hex(payload);
  const auto url = detail::split_url(endpoint.base_url);

  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt < std::max(1, retry.attempts); ++attempt) {
    if (attempt > 0) detail::backoff_sleep(retry.initial_backoff_ms, attempt - 1);
    const auto start = std::chrono::steady_clock::now();
    httplib::Client client(url.origin);
    client.set_connection_timeout(std::chrono::milliseconds(endpoint.timeout_ms));
    client.set_read_timeout(std::chrono::milliseconds(endpoint.timeout_ms));
    auto res = client.Post(url.path + "/v1/chat/completions", headers, payload, "application/json");
    const double latency =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    const int status = res ? res->status : 0;
    if (trace) trace->write(endpoint.id, round, request_hash, latency, status);

    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (detail::retryable_status(res->status)) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(Errc::BackendFailure, endpoint.id + ": HTTP " + std::to_string(res->status));
    }
    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded()) throw Error(Errc::BackendFailure, endpoint.id + ": response is not JSON");
    try {
      const json& content = doc.at("choices").at(0).at("message").at("content");
      return content.is_null() ? std::string{} : content.get<std::string>();
    } catch (const json::exception& e) {
      throw Error(Errc::BackendFailure, endpoint.id + ": malformed completion (" + e.what() + ")");
    }
  }
  throw Error(Errc::BackendFailure,
              endpoint.id + ": " + last_error + " after " + std::to_string(std::max(1, retry.attempts)) + " attempts");
}

RegistryBackend::RegistryBackend(ModelRegistry registry, BackendOptions options)
    : registry_(std::move(registry)), options_(std::move(options)) {
  for (const auto& [id, entry] : registry_.entries()) {
    const std::size_t bound = std::visit([](const auto& e) { return e.max_parallel; }, entry);
    limits_.emplace(id, std::make_unique<ConcurrencyLimit>(bound));
  }
  if (options_.trace_path) trace_ = std::make_unique<TraceLog>(*options_.trace_path);
}

std::string RegistryBackend::complete(const std::string& model_id, const QueryRecord& query,
                                      const SamplingParams& params, std::size_t round) {
  const RegistryEntry& entry = registry_.at(model_id);
  ConcurrencyLimit& limit = *limits_.at(model_id);
  limit.acquire();
  struct Release {
    ConcurrencyLimit& l;
    ~Release() { l.release(); }
  } release{limit};

  RequestLogEntry logged{model_id, round, params.temperature, params.top_p, params.max_tokens, {}};
  std::string out;
  if (const auto* sim = std::get_if<SimulatedModel>(&entry)) {
    if (sim->latency_ms.second > 0) {
      const double u = unit_interval(KeyHasher(sim->seed).add("latency").add(query.key()).add(round).value());
      const int lo = sim->latency_ms.first;
      const int ms = lo + static_cast<int>(u * (sim->latency_ms.second - lo));
      std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    }
    out = simulate_complete(*sim, query, round);
    if (trace_) trace_->write(model_id, round, sha256_hex(query.key()), 0.0, 200);
  } else {
    const auto& endpoint = std::get<ModelEndpoint>(entry);
    if (options_.record_requests) logged.body = build_chat_request(endpoint, query.text, params);
    out = chat_complete(endpoint, query.text, params, round, options_.retry, trace_.get());
  }
  if (options_.record_requests) {
    std::lock_guard lock(log_mutex_);
    log_.push_back(std::move(logged));
  }
  return out;
}

std::vector<RequestLogEntry> RegistryBackend::request_log() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

std::size_t RegistryBackend::peak_in_flight(const std::string& model_id) const {
  auto it = limits_.find(model_id);
  return it == limits_.end() ? 0 : it->second->peak();
}

std::string_view to_string(HealthState state) {
  switch (state) {
    case HealthState::Healthy: return "healthy";
    case HealthState::Unreachable: return "unreachable";
    case HealthState::Error: return "error";
  }
  return "error";
}

std::vector<HealthStatus> registry_health(const ModelRegistry& registry, int probe_timeout_ms) {
  std::vector<HealthStatus> report;
  for (const auto& [id, entry] : registry.entries()) {
    HealthStatus status{id, HealthState::Healthy, "simulated"};
    if (const auto* ep = std::get_if<ModelEndpoint>(&entry)) {
      const auto url = detail::split_url(ep->base_url);
      httplib::Client client(url.origin);
      client.set_connection_timeout(std::chrono::milliseconds(probe_timeout_ms));
      client.set_read_timeout(std::chrono::milliseconds(probe_timeout_ms));
      auto res = client.Get(url.path + "/v1/models");
      if (!res) {
        status = {id, HealthState::Unreachable, httplib::to_string(res.error())};
      } else if (res->status >= 400) {
        status = {id, HealthState::Error, "HTTP " + std::to_string(res->status)};
      } else {
        status = {id, HealthState::Healthy, "HTTP " + std::to_string(res->status)};
      }
    }
    report.push_back(std::move(status));
  }
  return report;
}

}  // namespace cluster_route
