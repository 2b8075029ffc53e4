#pragma once

#include <json.hpp>

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cluster_route/backends.hpp"
#include "cluster_route/clustering.hpp"
#include "cluster_route/profiling.hpp"
#include "cluster_route/query.hpp"

namespace cluster_route {

inline constexpr int kFormatVersion = 1;

/// Adds {"format_version", "checksum"} to a persisted document. The checksum
/// is SHA-256 over the compact dump of the document without "checksum".
nlohmann::json seal(nlohmann::json doc);

/// Parses and verifies a sealed document. Throws CorruptFile on parse or
/// checksum failure and VersionUnsupported on a foreign format_version.
nlohmann::json unseal(std::string_view text, std::string_view what);

nlohmann::json cluster_model_to_json(const ClusterModel& model);
ClusterModel cluster_model_from_json(const nlohmann::json& doc);

std::string serialize_store(const ProfileStore& store);
ProfileStore parse_store(std::string_view text);
void save_store(const std::string& path, const ProfileStore& store);
ProfileStore load_store(const std::string& path);

std::string serialize_registry(const ModelRegistry& registry);
ModelRegistry parse_registry(std::string_view text);
void save_registry(const std::string& path, const ModelRegistry& registry);
ModelRegistry load_registry(const std::string& path);

/// Dataset JSON-lines: {"id","question","answer","grader","category","dataset"}
/// plus optional "sim_cluster".
std::vector<QueryRecord> parse_dataset(std::string_view text, std::string_view source = "dataset");
std::string serialize_dataset(std::span<const QueryRecord> queries);
std::vector<QueryRecord> load_dataset(const std::string& path);
void save_dataset(const std::string& path, std::span<const QueryRecord> queries);

std::string read_file(const std::string& path);
/// Writes via a temporary file and rename so readers never see a torn file.
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace cluster_route
