#pragma once

#include <json.hpp>

#include <array>
#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>

#include "cluster_route/backends.hpp"
#include "cluster_route/config.hpp"
#include "cluster_route/router.hpp"

namespace httplib {
class Server;
}

namespace cluster_route {

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

/// Request counters and latency histograms in Prometheus text format.
class GatewayMetrics {
 public:
  static constexpr std::array<double, 8> kBucketsMs = {5, 10, 25, 50, 100, 250, 1000, 5000};

  void observe(const std::string& endpoint, int status, double latency_ms);
  void model_used(const std::string& model_id, std::size_t count = 1);
  std::string render(std::int64_t snapshot_version) const;

 private:
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, int>, std::uint64_t> requests_;
  std::map<std::string, std::uint64_t> model_usage_;
  std::map<std::string, std::array<std::uint64_t, kBucketsMs.size() + 1>> buckets_;
  std::map<std::string, double> latency_sum_;
};

/// OpenAI-compatible front door: routes each chat request, runs the ensemble
/// on the selected models and reports the decision under "x-route".
class Gateway {
 public:
  Gateway(GatewayConfig cfg, std::shared_ptr<const Embedder> embedder, std::shared_ptr<Backend> backend,
          StoreSnapshot store, std::vector<QueryRecord> labels = {});

  /// Loads store, registry and label datasets named in `cfg`.
  static std::unique_ptr<Gateway> from_config(const AppConfig& cfg);

  ~Gateway();

  // Handlers, callable without a socket.
  HttpReply chat(const std::string& body);
  HttpReply explain(const std::string& query);
  HttpReply health() const;
  HttpReply reload();
  std::string metrics_text() const;

  /// Binds the listening socket (port 0 picks a free one) and returns the port.
  int bind();
  /// Serves until stop(); bind() must have been called.
  void listen();
  /// bind() + listen() on a background thread.
  int start();
  void stop();

  StoreSnapshot snapshot() const { return router_.snapshot(); }

 private:
  QueryRecord resolve_query(const std::string& text, const RoutingDecision& decision) const;
  void install_routes();

  GatewayConfig cfg_;
  std::shared_ptr<const Embedder> embedder_;
  std::shared_ptr<Backend> backend_;
  Router router_;
  std::unordered_map<std::string, QueryRecord> labels_;  // keyed by question text
  std::mutex admin_mutex_;
  GatewayMetrics metrics_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace cluster_route
