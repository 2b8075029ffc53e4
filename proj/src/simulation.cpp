#include "cluster_route/simulation.hpp"

#include <cstdio>

#include "cluster_route/error.hpp"
#include "cluster_route/hashing.hpp"
#include "cluster_route/rng.hpp"

namespace cluster_route {

std::vector<std::vector<double>> dominant_accuracy(std::size_t models, std::size_t topics, double hi, double lo) {
  if (models == 0) throw Error(Errc::InvalidArgument, "need at least one model");
  std::vector<std::vector<double>> acc(models, std::vector<double>(topics, lo));
  for (std::size_t t = 0; t < topics; ++t) acc[t % models][t] = hi;
  return acc;
}

std::string pseudo_word(std::uint64_t seed, std::size_t topic, std::size_t index) {
  Rng rng(KeyHasher(seed).add("word").add(topic).add(index).value());
  const std::size_t len = 5 + static_cast<std::size_t>(rng.below(4));
  std::string w;
  for (std::size_t i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + rng.below(26)));
  return w;
}

SyntheticWorld make_world(const SyntheticWorldSpec& spec) {
  if (spec.topics == 0 || spec.queries_per_topic == 0 || spec.words_per_query == 0 || spec.vocabulary_per_topic == 0) {
    throw Error(Errc::InvalidConfig, "synthetic world needs topics, queries, words and vocabulary");
  }
  if (spec.accuracy.empty()) throw Error(Errc::InvalidConfig, "synthetic world needs at least one model");
  if (spec.datasets == 0 || spec.categories.empty()) throw Error(Errc::InvalidConfig, "need a dataset and a category");

  SyntheticWorld world;
  std::vector<std::vector<std::string>> vocab(spec.topics);
  for (std::size_t t = 0; t < spec.topics; ++t) {
    for (std::size_t w = 0; w < spec.vocabulary_per_topic; ++w) vocab[t].push_back(pseudo_word(spec.seed, t, w));
  }

  std::size_t serial = 0;
  for (std::size_t t = 0; t < spec.topics; ++t) {
    for (std::size_t i = 0; i < spec.queries_per_topic; ++i, ++serial) {
      Rng rng(KeyHasher(spec.seed).add("query").add(t).add(i).value());
      QueryRecord q;
      char id[32];
      std::snprintf(id, sizeof id, "q%05zu", serial);
      q.id = id;
      for (std::size_t w = 0; w < spec.words_per_query; ++w) {
        if (w) q.text.push_back(' ');
        q.text += vocab[t][rng.below(vocab[t].size())];
      }
      q.text += "?";
      q.gold = "ans-" + hex64(KeyHasher(spec.seed).add("gold").add(t).add(i).value()).substr(0, 8);
      q.grader = GraderKind::Exact;
      const std::size_t d = serial % spec.datasets;
      q.dataset = spec.datasets == 1 ? spec.id_prefix : spec.id_prefix + "-" + std::to_string(d);
      q.category = spec.categories[d % spec.categories.size()];
      q.sim_cluster = t;
      world.queries.push_back(std::move(q));
    }
  }

  for (std::size_t m = 0; m < spec.accuracy.size(); ++m) {
    if (spec.accuracy[m].size() != spec.topics) {
      throw Error(Errc::InvalidConfig, "accuracy row " + std::to_string(m) + " does not cover every topic");
    }
    SimulatedModel sim;
    char id[32];
    std::snprintf(id, sizeof id, "model-%02zu", m);
    sim.id = id;
    sim.cluster_accuracy = spec.accuracy[m];
    sim.seed = KeyHasher(spec.seed).add("model").add(m).value();
    world.model_ids.push_back(sim.id);
    world.registry.add(std::move(sim));
  }
  return world;
}

}  // namespace cluster_route
