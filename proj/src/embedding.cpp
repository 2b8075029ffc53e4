#include "cluster_route/embedding.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>

#include "cluster_route/hashing.hpp"
#include "http_util.hpp"

namespace cluster_route {

using json = nlohmann::json;

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  for (double x : values_) {
    if (!std::isfinite(x)) throw Error(Errc::InvalidArgument, "embedding contains a non-finite value");
  }
}

double EmbeddingVector::norm() const {
  double s = 0.0;
  for (double x : values_) s += x * x;
  return std::sqrt(s);
}

EmbeddingVector normalize(const EmbeddingVector& v) {
  const double n = v.norm();
  if (n == 0.0) throw Error(Errc::InvalidArgument, "cannot normalize a zero vector");
  std::vector<double> out(v.values().begin(), v.values().end());
  for (double& x : out) x /= n;
  return EmbeddingVector(std::move(out));
}

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(Errc::DimMismatch, std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

double distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(Errc::DimMismatch, std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

void EmbedderConfig::validate() const {
  if (embedder_id.empty()) throw Error(Errc::InvalidConfig, "embedder_id must be non-empty");
  if (dim == 0) throw Error(Errc::InvalidConfig, "dim must be positive");
  if (batch_size == 0) throw Error(Errc::InvalidConfig, "batch_size must be positive");
  if (kind == EmbedderKind::Remote && (!endpoint || endpoint->empty())) {
    throw Error(Errc::InvalidConfig, "remote embedder requires an endpoint");
  }
  if (kind == EmbedderKind::Mock && dim < 8) throw Error(Errc::InvalidConfig, "mock embedder requires dim >= 8");
  if (retry.attempts < 1) throw Error(Errc::InvalidConfig, "retry attempts must be >= 1");
}

EmbedderConfig EmbedderConfig::mock(std::size_t dim, std::uint64_t seed, std::string embedder_id) {
  EmbedderConfig cfg;
  cfg.kind = EmbedderKind::Mock;
  cfg.dim = dim;
  cfg.mock_seed = seed;
  cfg.embedder_id = embedder_id.empty()
                        ? "mock-trigram-d" + std::to_string(dim) + "-s" + std::to_string(seed)
                        : std::move(embedder_id);
  return cfg;
}

namespace {

std::string lowercase(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

EmbeddingVector mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  const std::string lower = lowercase(text);
  std::vector<double> acc(dim, 0.0);
  auto add_gram = [&](std::string_view gram) {
    const std::uint64_t h = KeyHasher(seed).add(gram).value();
    const std::size_t bucket = static_cast<std::size_t>(h % dim);
    acc[bucket] += (mix64(h) >> 63) ? -1.0 : 1.0;
  };
  if (lower.size() < 3) {
    add_gram(lower);
  } else {
    for (std::size_t i = 0; i + 3 <= lower.size(); ++i) add_gram(std::string_view(lower).substr(i, 3));
  }
  EmbeddingVector raw(std::move(acc));
  if (raw.norm() == 0.0) {
    // Every bucket cancelled out; fall back to a one-hot on the whole text.
    std::vector<double> onehot(dim, 0.0);
    onehot[KeyHasher(seed).add(lower).value() % dim] = 1.0;
    return EmbeddingVector(std::move(onehot));
  }
  return normalize(raw);
}

EmbeddingCache::EmbeddingCache(std::string path) : path_(std::move(path)) { load(); }

std::string EmbeddingCache::key(std::string_view embedder_id, std::string_view text) {
  std::string material(embedder_id);
  material.push_back('\x1f');
  material += sha256_hex(text);
  return sha256_hex(material);
}

void EmbeddingCache::load() {
  std::ifstream in(*path_);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // A crash mid-append can leave a torn last record; skip it.
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.contains("key") || !rec.contains("values")) continue;
    auto values = rec["values"].get<std::vector<double>>();
    if (rec.value("dim", std::size_t{0}) != values.size()) continue;
    entries_.insert_or_assign(rec["key"].get<std::string>(), EmbeddingVector(std::move(values)));
  }
}

std::optional<EmbeddingVector> EmbeddingCache::find(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::insert(const std::string& key, const EmbeddingVector& v) {
  std::unique_lock lock(mutex_);
  auto [it, inserted] = entries_.try_emplace(key, v);
  if (!inserted || !path_) return;
  std::ofstream out(*path_, std::ios::app);
  if (!out) throw Error(Errc::IoError, "cannot append to embedding cache " + *path_);
  json rec{{"key", key}, {"dim", v.dim()}, {"values", std::vector<double>(v.values().begin(), v.values().end())}};
  out << rec.dump() << '\n';
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

Embedder::Embedder(EmbedderConfig cfg)
    : cfg_(std::move(cfg)), remote_calls_(std::make_shared<std::atomic<std::size_t>>(0)) {
  cfg_.validate();
  if (cfg_.cache_path) {
    cache_ = std::make_shared<EmbeddingCache>(*cfg_.cache_path);
  } else if (cfg_.cache_in_memory) {
    cache_ = std::make_shared<EmbeddingCache>();
  }
}

std::size_t Embedder::remote_calls() const { return remote_calls_->load(); }

EmbeddingVector Embedder::embed(std::string_view text) const {
  std::string owned(text);
  return embed_batch(std::span<const std::string>(&owned, 1)).front();
}

std::vector<EmbeddingVector> Embedder::embed_batch(std::span<const std::string> texts) const {
  if (texts.empty()) throw Error(Errc::BatchEmpty, "embed_batch needs at least one text");
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (blank(texts[i])) throw Error(Errc::EmptyText, "text is empty after trimming", texts.size() > 1 ? std::optional(i) : std::nullopt);
  }

  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::size_t> missing;
  std::vector<std::string> keys(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (cache_) {
      keys[i] = EmbeddingCache::key(cfg_.embedder_id, texts[i]);
      if (auto hit = cache_->find(keys[i])) {
        out[i] = std::move(*hit);
        continue;
      }
    }
    missing.push_back(i);
  }

  for (std::size_t start = 0; start < missing.size(); start += cfg_.batch_size) {
    const std::size_t stop = std::min(missing.size(), start + cfg_.batch_size);
    std::vector<std::string> chunk;
    for (std::size_t j = start; j < stop; ++j) chunk.push_back(texts[missing[j]]);
    auto computed = compute(chunk, missing[start]);
    for (std::size_t j = start; j < stop; ++j) {
      const std::size_t i = missing[j];
      out[i] = std::move(computed[j - start]);
      if (cache_) cache_->insert(keys[i], out[i]);
    }
  }
  return out;
}

std::vector<EmbeddingVector> Embedder::compute(std::span<const std::string> texts, std::size_t base_index) const {
  if (cfg_.kind == EmbedderKind::Mock) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(mock_embed(t, cfg_.dim, cfg_.mock_seed));
    return out;
  }
  return fetch_remote(texts, base_index);
}

std::vector<EmbeddingVector> Embedder::fetch_remote(std::span<const std::string> texts, std::size_t base_index) const {
  const auto url = detail::split_url(*cfg_.endpoint);
  json body{{"model", cfg_.embedder_id}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt < cfg_.retry.attempts; ++attempt) {
    if (attempt > 0) detail::backoff_sleep(cfg_.retry.initial_backoff_ms, attempt - 1);
    remote_calls_->fetch_add(1);
    httplib::Client client(url.origin);
    client.set_connection_timeout(std::chrono::milliseconds(cfg_.timeout_ms));
    client.set_read_timeout(std::chrono::milliseconds(cfg_.timeout_ms));
    auto res = client.Post(url.path + "/v1/embeddings", headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (detail::retryable_status(res->status)) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(Errc::RemoteUnavailable, "HTTP " + std::to_string(res->status) + " from embedding endpoint", base_index);
    }
    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("data") || !doc["data"].is_array() || doc["data"].size() != texts.size()) {
      throw Error(Errc::RemoteUnavailable, "malformed embeddings response", base_index);
    }
    std::vector<EmbeddingVector> out(texts.size());
    for (std::size_t j = 0; j < texts.size(); ++j) {
      const json& item = doc["data"][j];
      const std::size_t slot = item.contains("index") ? item["index"].get<std::size_t>() : j;
      if (slot >= texts.size()) throw Error(Errc::RemoteUnavailable, "response index out of range", base_index);
      auto values = item.at("embedding").get<std::vector<double>>();
      if (values.size() != cfg_.dim) {
        throw Error(Errc::DimMismatch,
                    "endpoint returned " + std::to_string(values.size()) + " values, expected " + std::to_string(cfg_.dim),
                    base_index + slot);
      }
      out[slot] = normalize(EmbeddingVector(std::move(values)));
    }
    return out;
  }
  throw Error(Errc::RemoteUnavailable, last_error + " after " + std::to_string(cfg_.retry.attempts) + " attempts",
              base_index);
}

}  // namespace cluster_route
