#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cluster_route/backends.hpp"
#include "cluster_route/query.hpp"

namespace cluster_route {

/// A synthetic benchmark: topics with disjoint pseudo-word vocabularies so the
/// trigram embedder separates them, plus simulated models whose accuracy
/// depends on the topic.
struct SyntheticWorldSpec {
  std::size_t topics = 16;
  std::size_t queries_per_topic = 100;
  std::size_t vocabulary_per_topic = 40;
  std::size_t words_per_query = 8;
  std::size_t datasets = 1;  // queries are dealt round-robin into datasets
  std::vector<std::string> categories{"synthetic"};  // dataset i gets categories[i % size]
  std::vector<std::vector<double>> accuracy;  // [model][topic]
  std::uint64_t seed = 7;
  std::string id_prefix = "sim";
};

struct SyntheticWorld {
  std::vector<QueryRecord> queries;
  ModelRegistry registry;
  std::vector<std::string> model_ids;  // sorted
};

/// Model m dominates topics with t % models == m.
std::vector<std::vector<double>> dominant_accuracy(std::size_t models, std::size_t topics, double hi, double lo);

SyntheticWorld make_world(const SyntheticWorldSpec& spec);

/// Label-free pseudo-word for (topic, index); lowercase letters only.
std::string pseudo_word(std::uint64_t seed, std::size_t topic, std::size_t index);

}  // namespace cluster_route
