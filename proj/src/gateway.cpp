#include "cluster_route/gateway.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdio>
#include <sstream>

#include "cluster_route/ensemble.hpp"
#include "cluster_route/error.hpp"
#include "cluster_route/hashing.hpp"
#include "cluster_route/persist.hpp"
#include "cluster_route/selection.hpp"

namespace cluster_route {

using json = nlohmann::json;

void GatewayMetrics::observe(const std::string& endpoint, int status, double latency_ms) {
  std::lock_guard lock(mutex_);
  ++requests_[{endpoint, status}];
  auto& b = buckets_[endpoint];
  std::size_t i = 0;
  while (i < kBucketsMs.size() && latency_ms > kBucketsMs[i]) ++i;
  ++b[i];
  latency_sum_[endpoint] += latency_ms;
}

void GatewayMetrics::model_used(const std::string& model_id, std::size_t count) {
  std::lock_guard lock(mutex_);
  model_usage_[model_id] += count;
}

std::string GatewayMetrics::render(std::int64_t snapshot_version) const {
  std::lock_guard lock(mutex_);
  std::ostringstream out;
  out << "# TYPE cluster_route_requests_total counter\n";
  for (const auto& [key, n] : requests_) {
    out << "cluster_route_requests_total{endpoint=\"" << key.first << "\",status=\"" << key.second << "\"} " << n
        << "\n";
  }
  out << "# TYPE cluster_route_model_selected_total counter\n";
  for (const auto& [model, n] : model_usage_) {
    out << "cluster_route_model_selected_total{model=\"" << model << "\"} " << n << "\n";
  }
  out << "# TYPE cluster_route_request_latency_ms histogram\n";
  for (const auto& [endpoint, b] : buckets_) {
    std::uint64_t cumulative = 0;
    for (std::size_t i = 0; i < kBucketsMs.size(); ++i) {
      cumulative += b[i];
      out << "cluster_route_request_latency_ms_bucket{endpoint=\"" << endpoint << "\",le=\"" << kBucketsMs[i]
          << "\"} " << cumulative << "\n";
    }
    cumulative += b[kBucketsMs.size()];
    out << "cluster_route_request_latency_ms_bucket{endpoint=\"" << endpoint << "\",le=\"+Inf\"} " << cumulative
        << "\n";
    out << "cluster_route_request_latency_ms_sum{endpoint=\"" << endpoint << "\"} " << latency_sum_.at(endpoint)
        << "\n";
    out << "cluster_route_request_latency_ms_count{endpoint=\"" << endpoint << "\"} " << cumulative << "\n";
  }
  out << "# TYPE cluster_route_snapshot_version gauge\n";
  out << "cluster_route_snapshot_version " << snapshot_version << "\n";
  return out.str();
}

namespace {

HttpReply error_reply(int status, const std::string& code, const std::string& message) {
  return {status, json{{"error", json{{"message", message}, {"type", status < 500 ? "invalid_request_error" : "server_error"},
                                      {"code", code}}}}};
}

int status_for(Errc code) {
  switch (code) {
    case Errc::EmptyQuery:
    case Errc::EmptyText:
    case Errc::InvalidArgument:
      return 400;
    case Errc::StoreUnavailable:
      return 503;
    case Errc::BackendFailure:
    case Errc::RemoteUnavailable:
    case Errc::AuthMissing:
      return 502;
    case Errc::FingerprintMismatch:
    case Errc::InvalidConfig:
      return 409;
    default:
      return 500;
  }
}

HttpReply error_reply(const Error& e) { return error_reply(status_for(e.code()), std::string(to_string(e.code())), e.detail()); }

json decision_json(const RoutingDecision& d) {
  json scores = json::array();
  for (const auto& s : d.scores) scores.push_back(s ? json(*s) : json(nullptr));
  return json{{"query_id", d.query_id},
              {"cluster_id", d.cluster_id},
              {"distance", d.distance},
              {"selected", d.selected},
              {"scores", std::move(scores)},
              {"snapshot_version", d.snapshot_version},
              {"fallback", d.fallback}};
}

// Last user message; content may be a string or a list of text parts.
std::optional<std::string> last_user_text(const json& body) {
  if (!body.is_object() || !body.contains("messages") || !body["messages"].is_array()) return std::nullopt;
  const json& msgs = body["messages"];
  for (auto it = msgs.rbegin(); it != msgs.rend(); ++it) {
    if (!it->is_object() || it->value("role", "") != "user" || !it->contains("content")) continue;
    const json& c = (*it)["content"];
    if (c.is_string()) return c.get<std::string>();
    if (c.is_array()) {
      std::string text;
      for (const auto& part : c) {
        if (part.is_object() && part.value("type", "") == "text" && part.contains("text") && part["text"].is_string()) {
          if (!text.empty()) text.push_back('\n');
          text += part["text"].get<std::string>();
        }
      }
      return text;
    }
    return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace

Gateway::Gateway(GatewayConfig cfg, std::shared_ptr<const Embedder> embedder, std::shared_ptr<Backend> backend,
                 StoreSnapshot store, std::vector<QueryRecord> labels)
    : cfg_(std::move(cfg)),
      embedder_(std::move(embedder)),
      backend_(std::move(backend)),
      router_(embedder_, std::move(store), cfg_.router) {
  if (!backend_) throw Error(Errc::InvalidConfig, "gateway needs a backend");
  if (!router_.snapshot()) throw Error(Errc::StoreUnavailable, "gateway needs a profile store");
  for (auto& q : labels) labels_.emplace(q.text, std::move(q));
}

std::unique_ptr<Gateway> Gateway::from_config(const AppConfig& app) {
  const GatewayConfig& cfg = app.gateway;
  cfg.validate();
  auto store = std::make_shared<const ProfileStore>(load_store(cfg.store_path));
  BackendOptions opts;
  opts.trace_path = cfg.trace_path;
  auto backend = std::make_shared<RegistryBackend>(load_registry(cfg.registry_path), opts);
  for (const auto& id : store->profile_list()) {
    if (!backend->registry().contains(id.model_id)) {
      throw Error(Errc::UnknownModel, "store profiles model '" + id.model_id + "' which the registry does not serve");
    }
  }
  std::vector<QueryRecord> labels;
  for (const auto& p : cfg.label_paths) {
    auto part = load_dataset(p);
    labels.insert(labels.end(), part.begin(), part.end());
  }
  return std::make_unique<Gateway>(cfg, std::make_shared<const Embedder>(app.embedder), backend, store,
                                   std::move(labels));
}

Gateway::~Gateway() { stop(); }

QueryRecord Gateway::resolve_query(const std::string& text, const RoutingDecision& decision) const {
  if (auto it = labels_.find(text); it != labels_.end()) return it->second;
  // Unlabelled text: simulated models answer it as a member of the routed
  // cluster with a gold answer derived from the text.
  QueryRecord q;
  q.id = decision.query_id;
  q.text = text;
  q.gold = "ans-" + sha256_hex(text).substr(0, 8);
  q.dataset = "live";
  q.sim_cluster = decision.cluster_id;
  return q;
}

HttpReply Gateway::chat(const std::string& raw_body) {
  const json body = json::parse(raw_body, nullptr, false);
  if (body.is_discarded()) return error_reply(400, "InvalidJson", "request body is not valid JSON");
  const auto text = last_user_text(body);
  if (!text) return error_reply(400, "InvalidRequest", "request needs a messages array with a user message");

  const StoreSnapshot pinned = router_.snapshot();
  if (!pinned) return error_reply(503, "StoreUnavailable", "no profile store loaded");
  try {
    const RoutingDecision d = router_.route(*text, *pinned);
    const QueryRecord q = resolve_query(*text, d);
    const EnsembleResult r = run_ensemble(cfg_.mode, d.selected, q, cfg_.vote_params, cfg_.direct_params, *backend_);
    for (const auto& m : d.selected) metrics_.model_used(m);

    json votes = json::object();
    for (const auto& [answer, g] : r.vote.groups) votes[answer] = g.count;
    json route = decision_json(d);
    route["answer"] = r.answer;
    route["votes"] = std::move(votes);
    route["samples_used"] = r.vote.samples_used;
    route["tie"] = r.vote.tie;
    route["degraded"] = r.degraded;
    route["unparsed"] = r.unparsed;
    route["mode"] = cfg_.mode == EnsembleMode::Direct ? "direct" : "vote";

    const auto created = std::chrono::duration_cast<std::chrono::seconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
    json reply{{"id", "chatcmpl-" + d.query_id},
               {"object", "chat.completion"},
               {"created", created},
               {"model", d.selected.front()},
               {"choices", json::array({json{{"index", 0},
                                             {"message", json{{"role", "assistant"}, {"content", r.raw_answer}}},
                                             {"finish_reason", "stop"}}})},
               {"usage", json{{"prompt_tokens", 0}, {"completion_tokens", 0}, {"total_tokens", 0}}},
               {"x-route", std::move(route)}};
    return {200, std::move(reply)};
  } catch (const Error& e) {
    return error_reply(e);
  }
}

HttpReply Gateway::explain(const std::string& query) {
  if (query.empty()) return error_reply(400, "InvalidRequest", "missing q parameter");
  const StoreSnapshot pinned = router_.snapshot();
  if (!pinned) return error_reply(503, "StoreUnavailable", "no profile store loaded");
  try {
    const RoutingDecision d = router_.route(query, *pinned);
    json out = decision_json(d);
    json ranking = json::array();
    for (const auto& r : rank_cluster(pinned->profile_list(), d.cluster_id).ranked) {
      ranking.push_back(json{{"model_id", r.model_id}, {"score", r.score ? json(*r.score) : json(nullptr)}, {"rank", r.rank}});
    }
    out["ranking"] = std::move(ranking);
    out["k"] = pinned->cluster_model.k;
    out["embedder_id"] = pinned->embedder_id;
    return {200, std::move(out)};
  } catch (const Error& e) {
    return error_reply(e);
  }
}

HttpReply Gateway::health() const {
  const StoreSnapshot s = router_.snapshot();
  return {200, json{{"status", "ok"},
                    {"snapshot_version", s ? s->version : 0},
                    {"models", s ? s->profiles.size() : 0},
                    {"embedder_id", embedder_->id()}}};
}

HttpReply Gateway::reload() {
  std::lock_guard lock(admin_mutex_);
  try {
    auto next = std::make_shared<const ProfileStore>(load_store(cfg_.store_path));
    const auto previous = router_.snapshot();
    router_.swap(next);
    return {200, json{{"status", "reloaded"},
                      {"previous_version", previous ? previous->version : 0},
                      {"snapshot_version", next->version}}};
  } catch (const Error& e) {
    return error_reply(e);
  }
}

std::string Gateway::metrics_text() const {
  const StoreSnapshot s = router_.snapshot();
  return metrics_.render(s ? s->version : 0);
}

void Gateway::install_routes() {
  auto timed = [this](const std::string& name, auto handler) {
    return [this, name, handler](const httplib::Request& req, httplib::Response& res) {
      const auto start = std::chrono::steady_clock::now();
      HttpReply r = handler(req);
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
      metrics_.observe(name, r.status,
                       std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
    };
  };
  server_->Post("/v1/chat/completions",
                timed("chat", [this](const httplib::Request& req) { return chat(req.body); }));
  server_->Get("/v1/route/explain", timed("explain", [this](const httplib::Request& req) {
                 return explain(req.has_param("q") ? req.get_param_value("q") : std::string{});
               }));
  server_->Get("/healthz", timed("healthz", [this](const httplib::Request&) { return health(); }));
  server_->Post("/admin/reload", timed("reload", [this](const httplib::Request&) { return reload(); }));
  server_->Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(metrics_text(), "text/plain; version=0.0.4");
  });
}

int Gateway::bind() {
  if (server_) throw Error(Errc::InvalidArgument, "gateway already bound");
  server_ = std::make_unique<httplib::Server>();
  const std::size_t threads = cfg_.threads;
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  install_routes();
  if (cfg_.port == 0) {
    port_ = server_->bind_to_any_port(cfg_.host);
  } else {
    port_ = server_->bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1;
  }
  if (port_ < 0) throw Error(Errc::IoError, "cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
  return port_;
}

void Gateway::listen() {
  if (!server_) throw Error(Errc::InvalidArgument, "gateway is not bound");
  server_->listen_after_bind();
}

int Gateway::start() {
  const int port = bind();
  thread_ = std::thread([this] { listen(); });
  server_->wait_until_ready();
  return port;
}

void Gateway::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace cluster_route
