#include "cluster_route/persist.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "cluster_route/error.hpp"
#include "cluster_route/hashing.hpp"

namespace cluster_route {

using json = nlohmann::json;

json seal(json doc) {
  doc.erase("checksum");
  doc["format_version"] = kFormatVersion;
  const std::string sum = sha256_hex(doc.dump());
  doc["checksum"] = sum;
  return doc;
}

json unseal(std::string_view text, std::string_view what) {
  json doc = json::parse(text.begin(), text.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(Errc::CorruptFile, std::string(what) + " is not valid JSON");
  if (!doc.contains("checksum") || !doc["checksum"].is_string()) {
    throw Error(Errc::CorruptFile, std::string(what) + " has no checksum");
  }
  const int version = doc.value("format_version", 0);
  const std::string expected = doc["checksum"].get<std::string>();
  doc.erase("checksum");
  if (sha256_hex(doc.dump()) != expected) throw Error(Errc::CorruptFile, std::string(what) + " checksum mismatch");
  if (version != kFormatVersion) {
    throw Error(Errc::VersionUnsupported,
                std::string(what) + " has format_version " + std::to_string(version) + "; this build reads version " +
                    std::to_string(kFormatVersion) + ". Re-run `cluster-route calibrate` to regenerate it.");
  }
  return doc;
}

json cluster_model_to_json(const ClusterModel& model) {
  json centroids = json::array();
  for (const auto& c : model.centroids) centroids.push_back(std::vector<double>(c.values().begin(), c.values().end()));
  return json{{"k", model.k},
              {"dim", model.dim},
              {"seed", model.seed},
              {"inertia", model.inertia},
              {"embedder_id", model.embedder_id},
              {"n_fit_points", model.n_fit_points},
              {"centroids", std::move(centroids)}};
}

ClusterModel cluster_model_from_json(const json& doc) {
  ClusterModel m;
  try {
    m.k = doc.at("k").get<std::size_t>();
    m.dim = doc.at("dim").get<std::size_t>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.inertia = doc.at("inertia").get<double>();
    m.embedder_id = doc.value("embedder_id", "");
    m.n_fit_points = doc.value("n_fit_points", m.k);
    for (const auto& row : doc.at("centroids")) m.centroids.emplace_back(row.get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("cluster model: ") + e.what());
  }
  if (m.k < 1 || m.centroids.size() != m.k) throw Error(Errc::CorruptFile, "cluster model centroid count != k");
  for (const auto& c : m.centroids) {
    if (c.dim() != m.dim) throw Error(Errc::CorruptFile, "cluster model centroid of wrong dim");
  }
  if (m.k > m.n_fit_points) throw Error(Errc::CorruptFile, "cluster model has k > n_fit_points");
  return m;
}

std::string serialize_store(const ProfileStore& store) {
  json profiles = json::object();
  for (const auto& [id, p] : store.profiles) {
    json scores = json::array();
    for (const auto& s : p.scores) scores.push_back(s ? json(*s) : json(nullptr));
    profiles[id] = json{{"scores", std::move(scores)}, {"correct", p.correct_counts}, {"total", p.total_counts}};
  }
  json doc{{"version", store.version},
           {"embedder_id", store.embedder_id},
           {"dataset_fingerprint", store.dataset_fingerprint},
           {"created_at", store.created_at},
           {"cluster_model", cluster_model_to_json(store.cluster_model)},
           {"profiles", std::move(profiles)}};
  if (!store.incomplete_models.empty()) doc["incomplete_models"] = store.incomplete_models;
  return seal(std::move(doc)).dump(1) + "\n";
}

ProfileStore parse_store(std::string_view text) {
  const json doc = unseal(text, "profile store");
  ProfileStore store;
  try {
    store.version = doc.at("version").get<std::int64_t>();
    store.embedder_id = doc.at("embedder_id").get<std::string>();
    store.dataset_fingerprint = doc.at("dataset_fingerprint").get<std::string>();
    store.created_at = doc.value("created_at", "");
    store.cluster_model = cluster_model_from_json(doc.at("cluster_model"));
    for (const auto& [id, p] : doc.at("profiles").items()) {
      // Scores on disk are informational; they are rebuilt from the counts.
      auto profile = CapabilityProfile::from_counts(id, p.at("correct").get<std::vector<std::size_t>>(),
                                                    p.at("total").get<std::vector<std::size_t>>());
      if (profile.k() != store.cluster_model.k) {
        throw Error(Errc::CorruptFile, "profile " + id + " has length " + std::to_string(profile.k()));
      }
      store.profiles.emplace(id, std::move(profile));
    }
    if (doc.contains("incomplete_models")) store.incomplete_models = doc["incomplete_models"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("profile store: ") + e.what());
  }
  if (!store.cluster_model.embedder_id.empty() && store.cluster_model.embedder_id != store.embedder_id) {
    throw Error(Errc::CorruptFile, "profile store mixes embedders");
  }
  return store;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(Errc::IoError, "short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error(Errc::IoError, "cannot rename " + tmp + " to " + path);
}

void save_store(const std::string& path, const ProfileStore& store) { write_file_atomic(path, serialize_store(store)); }

ProfileStore load_store(const std::string& path) { return parse_store(read_file(path)); }

std::string serialize_registry(const ModelRegistry& registry) {
  json models = json::array();
  for (const auto& [id, entry] : registry.entries()) {
    if (const auto* ep = std::get_if<ModelEndpoint>(&entry)) {
      models.push_back(json{{"id", ep->id},
                            {"kind", "http"},
                            {"base_url", ep->base_url},
                            {"model_name", ep->model_name},
                            {"api_key_env", ep->api_key_env},
                            {"max_parallel", ep->max_parallel},
                            {"timeout_ms", ep->timeout_ms}});
    } else {
      const auto& sim = std::get<SimulatedModel>(entry);
      models.push_back(json{{"id", sim.id},
                            {"kind", "simulated"},
                            {"cluster_accuracy", sim.cluster_accuracy},
                            {"seed", sim.seed},
                            {"latency_ms", {sim.latency_ms.first, sim.latency_ms.second}},
                            {"max_parallel", sim.max_parallel}});
    }
  }
  return seal(json{{"models", std::move(models)}}).dump(1) + "\n";
}

ModelRegistry parse_registry(std::string_view text) {
  const json doc = unseal(text, "model registry");
  ModelRegistry registry;
  try {
    for (const auto& m : doc.at("models")) {
      const std::string kind = m.value("kind", "http");
      if (kind == "simulated") {
        SimulatedModel sim;
        sim.id = m.at("id").get<std::string>();
        sim.cluster_accuracy = m.at("cluster_accuracy").get<std::vector<double>>();
        sim.seed = m.value("seed", std::uint64_t{0});
        if (m.contains("latency_ms")) {
          sim.latency_ms = {m["latency_ms"].at(0).get<int>(), m["latency_ms"].at(1).get<int>()};
        }
        sim.max_parallel = m.value("max_parallel", std::size_t{64});
        registry.add(std::move(sim));
      } else if (kind == "http") {
        ModelEndpoint ep;
        ep.id = m.at("id").get<std::string>();
        ep.base_url = m.at("base_url").get<std::string>();
        ep.model_name = m.value("model_name", ep.id);
        ep.api_key_env = m.value("api_key_env", "");
        ep.max_parallel = m.value("max_parallel", std::size_t{4});
        ep.timeout_ms = m.value("timeout_ms", 60000);
        registry.add(std::move(ep));
      } else {
        throw Error(Errc::CorruptFile, "unknown registry entry kind '" + kind + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("model registry: ") + e.what());
  }
  return registry;
}

void save_registry(const std::string& path, const ModelRegistry& registry) {
  write_file_atomic(path, serialize_registry(registry));
}

ModelRegistry load_registry(const std::string& path) { return parse_registry(read_file(path)); }

std::vector<QueryRecord> parse_dataset(std::string_view text, std::string_view source) {
  std::vector<QueryRecord> out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json rec = json::parse(line.begin(), line.end(), nullptr, false);
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    if (rec.is_discarded() || !rec.is_object()) throw Error(Errc::CorruptFile, where + " is not a JSON object");
    QueryRecord q;
    try {
      q.id = rec.at("id").is_string() ? rec["id"].get<std::string>() : rec["id"].dump();
      q.text = rec.at("question").get<std::string>();
      q.gold = rec.value("answer", "");
      q.grader = parse_grader_kind(rec.value("grader", "exact"));
      q.category = rec.value("category", "");
      q.dataset = rec.value("dataset", "");
      if (rec.contains("sim_cluster") && !rec["sim_cluster"].is_null()) q.sim_cluster = rec["sim_cluster"].get<std::size_t>();
    } catch (const json::exception& e) {
      throw Error(Errc::CorruptFile, where + ": " + e.what());
    }
    if (q.gold.empty() && q.grader != GraderKind::CodePluggable) {
      throw Error(Errc::CorruptFile, where + ": empty gold answer");
    }
    if (!seen.insert(q.key()).second) throw Error(Errc::CorruptFile, where + ": duplicate query id " + q.key());
    out.push_back(std::move(q));
  }
  return out;
}

std::string serialize_dataset(std::span<const QueryRecord> queries) {
  std::string out;
  for (const auto& q : queries) {
    json rec{{"id", q.id},
             {"question", q.text},
             {"answer", q.gold},
             {"grader", std::string(to_string(q.grader))},
             {"category", q.category},
             {"dataset", q.dataset}};
    if (q.sim_cluster) rec["sim_cluster"] = *q.sim_cluster;
    out += rec.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<QueryRecord> load_dataset(const std::string& path) { return parse_dataset(read_file(path), path); }

void save_dataset(const std::string& path, std::span<const QueryRecord> queries) {
  write_file_atomic(path, serialize_dataset(queries));
}

}  // namespace cluster_route
