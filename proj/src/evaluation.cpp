#include "cluster_route/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "cluster_route/ensemble.hpp"
#include "cluster_route/error.hpp"
#include "cluster_route/hashing.hpp"
#include "cluster_route/parallel.hpp"
#include "cluster_route/rng.hpp"
#include "cluster_route/router.hpp"
#include "cluster_route/selection.hpp"

namespace cluster_route {

using json = nlohmann::json;

DatasetSplit split(std::span<const QueryRecord> dataset, std::uint64_t seed, double val_fraction) {
  if (dataset.size() < 2) throw Error(Errc::TooFewQueries, "need at least 2 queries to split");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw Error(Errc::InvalidArgument, "val_fraction must be in (0, 1)");
  std::vector<std::string> keys;
  keys.reserve(dataset.size());
  for (const auto& q : dataset) keys.push_back(q.key());
  Rng rng(mix64(seed));
  rng.shuffle(std::span<std::string>(keys));

  const auto n = static_cast<double>(keys.size());
  auto n_val = static_cast<std::size_t>(std::llround(n * val_fraction));
  n_val = std::clamp<std::size_t>(n_val, 1, keys.size() - 1);
  DatasetSplit out;
  out.seed = seed;
  out.val_fraction = val_fraction;
  out.val_ids.assign(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n_val));
  out.test_ids.assign(keys.begin() + static_cast<std::ptrdiff_t>(n_val), keys.end());
  return out;
}

std::pair<std::vector<QueryRecord>, std::vector<QueryRecord>> split_queries(std::span<const QueryRecord> queries,
                                                                             std::uint64_t seed, double val_fraction) {
  std::map<std::string, std::vector<QueryRecord>> by_dataset;
  for (const auto& q : queries) by_dataset[q.dataset].push_back(q);
  std::set<std::string> val_keys;
  for (const auto& [name, items] : by_dataset) {
    const DatasetSplit s = split(items, seed, val_fraction);
    val_keys.insert(s.val_ids.begin(), s.val_ids.end());
  }
  std::pair<std::vector<QueryRecord>, std::vector<QueryRecord>> out;
  for (const auto& q : queries) (val_keys.count(q.key()) ? out.first : out.second).push_back(q);
  return out;
}

double oracle_accuracy(const CorrectnessMatrix& matrix) {
  if (matrix.empty() || matrix.front().empty()) throw Error(Errc::InvalidArgument, "empty correctness matrix");
  const std::size_t n = matrix.front().size();
  std::size_t hits = 0;
  for (std::size_t q = 0; q < n; ++q) {
    for (const auto& row : matrix) {
      if (row.at(q)) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

double row_accuracy(const std::vector<bool>& row) {
  const auto hits = std::count(row.begin(), row.end(), true);
  return static_cast<double>(hits) / static_cast<double>(row.size());
}

}  // namespace

BaselineReport baseline_report(const CorrectnessMatrix& matrix, std::uint64_t seed, std::size_t draws) {
  if (matrix.empty() || matrix.front().empty()) throw Error(Errc::InvalidArgument, "empty correctness matrix");
  BaselineReport r;
  double sum = 0.0;
  for (const auto& row : matrix) {
    if (row.size() != matrix.front().size()) throw Error(Errc::InvalidArgument, "ragged correctness matrix");
    const double acc = row_accuracy(row);
    r.max_expert = std::max(r.max_expert, acc);
    sum += acc;
  }
  r.average = sum / static_cast<double>(matrix.size());
  r.random_router_expectation = r.average;

  Rng rng(seed);
  std::size_t hits = 0;
  const std::size_t n = matrix.front().size();
  for (std::size_t d = 0; d < draws; ++d) {
    const auto q = static_cast<std::size_t>(rng.below(n));
    const auto m = static_cast<std::size_t>(rng.below(matrix.size()));
    if (matrix[m][q]) ++hits;
  }
  r.random_router_empirical = draws == 0 ? r.average : static_cast<double>(hits) / static_cast<double>(draws);
  return r;
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Direct: return "direct";
    case Strategy::SelfConsistency: return "sc";
    case Strategy::ModelSwitch: return "model_switch";
    case Strategy::Random: return "random";
    case Strategy::Oracle: return "oracle";
  }
  return "sc";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "direct") return Strategy::Direct;
  if (name == "sc" || name == "self_consistency") return Strategy::SelfConsistency;
  if (name == "model_switch" || name == "model-switch") return Strategy::ModelSwitch;
  if (name == "random") return Strategy::Random;
  if (name == "oracle") return Strategy::Oracle;
  throw Error(Errc::InvalidArgument, "unknown strategy '" + std::string(name) + "'");
}

SweepKind parse_sweep_kind(std::string_view name) {
  if (name == "k" || name == "k_sweep") return SweepKind::KSweep;
  if (name == "models" || name == "model_count") return SweepKind::ModelCount;
  if (name == "testsize" || name == "test_size") return SweepKind::TestSize;
  throw Error(Errc::InvalidArgument, "unknown sweep kind '" + std::string(name) + "'");
}

namespace {

struct PreparedSeed {
  std::vector<QueryRecord> val;
  std::vector<QueryRecord> test;
  std::vector<EmbeddingVector> val_vecs;
  std::vector<EmbeddingVector> test_vecs;
};

std::vector<EmbeddingVector> embed_all(const Embedder& embedder, std::span<const QueryRecord> queries) {
  if (queries.empty()) return {};
  std::vector<std::string> texts;
  texts.reserve(queries.size());
  for (const auto& q : queries) texts.push_back(q.text);
  return embedder.embed_batch(texts);
}

PreparedSeed prepare(std::span<const QueryRecord> queries, std::uint64_t seed, double val_fraction,
                     const Embedder& embedder) {
  PreparedSeed p;
  std::tie(p.val, p.test) = split_queries(queries, seed, val_fraction);
  p.val_vecs = embed_all(embedder, p.val);
  p.test_vecs = embed_all(embedder, p.test);
  return p;
}

/// Direct-mode correctness of every model on every query (rows follow `models`).
CorrectnessMatrix direct_matrix(std::span<const std::string> models, Backend& backend,
                                std::span<const QueryRecord> queries, const BenchmarkConfig& config) {
  CorrectnessMatrix m(models.size(), std::vector<bool>(queries.size(), false));
  std::vector<char> flat(models.size() * queries.size(), 0);
  parallel_for(flat.size(), config.parallelism, [&](std::size_t idx) {
    const std::string& model = models[idx / queries.size()];
    const QueryRecord& q = queries[idx % queries.size()];
    const EnsembleResult r = direct(model, q, backend, config.direct_params);
    flat[idx] = grade(r.answer, q.gold, q.grader, config.calibration.grader) ? 1 : 0;
  });
  for (std::size_t i = 0; i < flat.size(); ++i) m[i / queries.size()][i % queries.size()] = flat[i] != 0;
  return m;
}

struct QueryOutcome {
  bool correct = false;
  std::vector<std::string> used;
};

std::vector<QueryOutcome> evaluate_strategy(Strategy strategy, const ProfileStore& store,
                                            std::span<const QueryRecord> test, std::span<const EmbeddingVector> vecs,
                                            const CorrectnessMatrix& matrix, std::span<const std::string> models,
                                            Backend& backend, const BenchmarkConfig& config, std::uint64_t seed) {
  std::vector<QueryOutcome> out(test.size());
  RouterConfig rc;
  rc.k = store.cluster_model.k;
  rc.n = strategy == Strategy::ModelSwitch ? std::max<std::size_t>(config.n, 1) : 1;

  parallel_for(test.size(), config.parallelism, [&](std::size_t i) {
    const QueryRecord& q = test[i];
    QueryOutcome& o = out[i];
    switch (strategy) {
      case Strategy::Random: {
        Rng rng(KeyHasher(seed).add("random-router").add(q.key()).value());
        const auto m = static_cast<std::size_t>(rng.below(models.size()));
        o.correct = matrix[m][i];
        o.used = {models[m]};
        return;
      }
      case Strategy::Oracle: {
        std::size_t pick = models.size();
        for (std::size_t m = 0; m < models.size(); ++m) {
          if (matrix[m][i]) {
            pick = m;
            break;
          }
        }
        o.correct = pick != models.size();
        o.used = {models[pick == models.size() ? 0 : pick]};
        return;
      }
      default: break;
    }
    const RoutingDecision d = route_embedding(vecs[i], store, rc, q.key());
    const EnsembleMode mode = strategy == Strategy::Direct ? EnsembleMode::Direct : EnsembleMode::Vote;
    const EnsembleResult r = run_ensemble(mode, d.selected, q, config.vote_params, config.direct_params, backend);
    o.correct = grade(r.answer, q.gold, q.grader, config.calibration.grader);
    o.used = d.selected;
  });
  return out;
}

ProfileStore calibrate_seed(const PreparedSeed& p, std::span<const std::string> models, Backend& backend,
                            const Embedder& embedder, const BenchmarkConfig& config, std::uint64_t seed,
                            GradeLedger* ledger, std::size_t k) {
  FitOptions fo = config.fit;
  fo.embedder_id = embedder.id();
  const ClusterModel cm = fit(p.val_vecs, k, seed, fo);
  return calibrate(models, backend, p.val, embedder, cm, config.calibration, ledger);
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double population_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

SeedRun run_seed(const PreparedSeed& p, const ProfileStore& store, std::span<const std::string> models,
                 Backend& backend, const BenchmarkConfig& config, std::uint64_t seed) {
  SeedRun run;
  run.seed = seed;
  run.store_fingerprint = store.dataset_fingerprint;

  std::map<std::string, std::vector<std::size_t>> by_dataset;
  for (std::size_t i = 0; i < p.test.size(); ++i) by_dataset[p.test[i].dataset].push_back(i);

  for (const auto& [name, idx] : by_dataset) {
    DatasetCell cell;
    cell.dataset = name;
    cell.category = p.test[idx.front()].category;
    cell.n_test = idx.size();
    try {
      std::vector<QueryRecord> qs;
      std::vector<EmbeddingVector> vs;
      for (std::size_t i : idx) {
        qs.push_back(p.test[i]);
        vs.push_back(p.test_vecs[i]);
      }
      const CorrectnessMatrix matrix = direct_matrix(models, backend, qs, config);
      const auto outcomes = evaluate_strategy(config.strategy, store, qs, vs, matrix, models, backend, config, seed);
      std::size_t hits = 0;
      for (const auto& o : outcomes) {
        if (o.correct) ++hits;
        for (const auto& m : o.used) ++cell.routing_counts[m];
      }
      cell.accuracy = static_cast<double>(hits) / static_cast<double>(qs.size());
      const BaselineReport b = baseline_report(matrix, seed, config.random_draws);
      cell.oracle = oracle_accuracy(matrix);
      cell.max_expert = b.max_expert;
      cell.average = b.average;
      cell.random_router = b.random_router_empirical;
      for (std::size_t m = 0; m < models.size(); ++m) cell.per_model[models[m]] = row_accuracy(matrix[m]);
    } catch (const Error& e) {
      cell.error = e.what();
    }
    run.cells.push_back(std::move(cell));
  }

  std::map<std::string, std::vector<double>> cat;
  std::vector<double> all;
  for (const auto& c : run.cells) {
    if (c.error) continue;
    cat[c.category].push_back(c.accuracy);
    all.push_back(c.accuracy);
  }
  for (const auto& [name, xs] : cat) run.per_category[name] = mean(xs);
  run.overall = mean(all);
  return run;
}

void summarize(RunReport& report) {
  std::map<std::string, std::vector<const DatasetCell*>> cells;
  for (const auto& run : report.per_seed) {
    for (const auto& c : run.cells) {
      if (!c.error) cells[c.dataset].push_back(&c);
    }
  }
  for (const auto& [name, cs] : cells) {
    DatasetSummary s;
    s.category = cs.front()->category;
    s.seeds_completed = cs.size();
    std::vector<double> acc;
    std::vector<double> oracle;
    std::vector<double> max_expert;
    std::vector<double> average;
    std::vector<double> random;
    std::map<std::string, std::vector<double>> per_model;
    std::map<std::string, std::size_t> routing;
    std::size_t routed = 0;
    for (const DatasetCell* c : cs) {
      acc.push_back(c->accuracy);
      oracle.push_back(c->oracle);
      max_expert.push_back(c->max_expert);
      average.push_back(c->average);
      random.push_back(c->random_router);
      for (const auto& [m, a] : c->per_model) per_model[m].push_back(a);
      for (const auto& [m, n] : c->routing_counts) {
        routing[m] += n;
        routed += n;
      }
    }
    s.accuracy = mean(acc);
    s.accuracy_std = population_std(acc);
    s.oracle = mean(oracle);
    s.max_expert = mean(max_expert);
    s.average = mean(average);
    s.random_router = mean(random);
    for (const auto& [m, xs] : per_model) s.per_model[m] = mean(xs);
    for (const auto& [m, n] : routing) s.routing_distribution[m] = static_cast<double>(n) / static_cast<double>(routed);
    report.datasets.emplace(name, std::move(s));
  }
  std::map<std::string, std::vector<double>> cat;
  std::vector<double> all;
  for (const auto& [name, s] : report.datasets) {
    cat[s.category].push_back(s.accuracy);
    all.push_back(s.accuracy);
  }
  for (const auto& [name, xs] : cat) report.per_category[name] = mean(xs);
  report.overall = mean(all);
}

}  // namespace

RunReport run_benchmark(std::span<const QueryRecord> queries, Backend& backend, std::span<const std::string> models,
                        const Embedder& embedder, const BenchmarkConfig& config, const ProfileStore* prebuilt) {
  if (models.empty()) throw Error(Errc::NoModels, "benchmark needs at least one model");
  if (config.seeds.empty()) throw Error(Errc::InvalidArgument, "benchmark needs at least one seed");
  if (config.strategy == Strategy::ModelSwitch && config.n < 1) throw Error(Errc::InvalidArgument, "n must be >= 1");

  RunReport report;
  report.strategy = config.strategy;
  report.k = prebuilt ? prebuilt->cluster_model.k : config.k;
  report.n = config.strategy == Strategy::ModelSwitch ? config.n : 1;
  report.seeds = config.seeds;

  GradeLedger ledger;
  for (std::uint64_t seed : config.seeds) {
    const PreparedSeed p = prepare(queries, seed, config.val_fraction, embedder);
    ProfileStore store;
    if (prebuilt) {
      if (dataset_fingerprint(p.val) != prebuilt->dataset_fingerprint) {
        throw Error(Errc::FingerprintMismatch,
                    "store was calibrated on a different validation split than seed " + std::to_string(seed));
      }
      store = *prebuilt;
    } else {
      store = calibrate_seed(p, models, backend, embedder, config, seed, &ledger, config.k);
    }
    report.per_seed.push_back(run_seed(p, store, models, backend, config, seed));
  }
  summarize(report);
  return report;
}

json report_to_json(const RunReport& report) {
  json datasets = json::object();
  for (const auto& [name, s] : report.datasets) {
    datasets[name] = json{{"category", s.category},
                          {"accuracy", s.accuracy},
                          {"accuracy_std", s.accuracy_std},
                          {"oracle", s.oracle},
                          {"max_expert", s.max_expert},
                          {"average", s.average},
                          {"random_router", s.random_router},
                          {"per_model", s.per_model},
                          {"routing_distribution", s.routing_distribution},
                          {"seeds_completed", s.seeds_completed}};
  }
  json per_seed = json::array();
  for (const auto& run : report.per_seed) {
    json cells = json::array();
    for (const auto& c : run.cells) {
      json cell{{"dataset", c.dataset},
                {"category", c.category},
                {"n_test", c.n_test},
                {"accuracy", c.accuracy},
                {"oracle", c.oracle},
                {"max_expert", c.max_expert},
                {"average", c.average},
                {"random_router", c.random_router},
                {"per_model", c.per_model},
                {"routing_counts", c.routing_counts}};
      if (c.error) cell["error"] = *c.error;
      cells.push_back(std::move(cell));
    }
    per_seed.push_back(json{{"seed", run.seed},
                            {"store_fingerprint", run.store_fingerprint},
                            {"overall", run.overall},
                            {"per_category", run.per_category},
                            {"cells", std::move(cells)}});
  }
  return json{{"strategy", std::string(to_string(report.strategy))},
              {"k", report.k},
              {"n", report.n},
              {"seeds", report.seeds},
              {"overall", report.overall},
              {"per_category", report.per_category},
              {"datasets", std::move(datasets)},
              {"per_seed", std::move(per_seed)}};
}

namespace {
std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}
}  // namespace

std::string report_to_csv(const RunReport& report) {
  std::set<std::string> model_ids;
  for (const auto& [_, s] : report.datasets) {
    for (const auto& [m, _a] : s.per_model) model_ids.insert(m);
  }
  std::ostringstream out;
  out << "dataset,category,accuracy,accuracy_std,oracle,max_expert,average,random_router";
  for (const auto& m : model_ids) out << "," << m;
  out << "\n";
  for (const auto& [name, s] : report.datasets) {
    out << name << "," << s.category << "," << fmt(s.accuracy) << "," << fmt(s.accuracy_std) << "," << fmt(s.oracle)
        << "," << fmt(s.max_expert) << "," << fmt(s.average) << "," << fmt(s.random_router);
    for (const auto& m : model_ids) {
      auto it = s.per_model.find(m);
      out << "," << (it == s.per_model.end() ? std::string{} : fmt(it->second));
    }
    out << "\n";
  }
  out << "Avg.,," << fmt(report.overall) << "\n";
  return out.str();
}

std::string SweepTable::to_csv() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  return out.str();
}

double SweepTable::number(std::size_t row, const std::string& column) const {
  auto it = std::find(columns.begin(), columns.end(), column);
  if (it == columns.end()) throw Error(Errc::InvalidArgument, "no column " + column);
  return std::stod(rows.at(row).at(static_cast<std::size_t>(it - columns.begin())));
}

namespace {

/// Fraction of validation queries whose cluster-best model answered them correctly.
double cluster_argmax_accuracy(const ProfileStore& store, const std::vector<std::size_t>& cluster_ids,
                               std::span<const QueryRecord> val, const std::map<std::pair<std::string, std::string>, bool>& correct) {
  const auto profiles = store.profile_list();
  std::map<std::size_t, std::string> best;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const std::size_t c = cluster_ids[i];
    auto it = best.find(c);
    if (it == best.end()) it = best.emplace(c, top_n_for_cluster(profiles, c, 1).front()).first;
    auto hit = correct.find({it->second, val[i].key()});
    if (hit != correct.end() && hit->second) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(val.size());
}

double test_accuracy(const std::vector<QueryOutcome>& outcomes) {
  std::size_t hits = 0;
  for (const auto& o : outcomes) hits += o.correct ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

}  // namespace

SweepTable sweep_study(SweepKind kind, std::span<const double> grid, std::span<const QueryRecord> queries,
                       Backend& backend, std::span<const std::string> models, const Embedder& embedder,
                       const BenchmarkConfig& fixed) {
  if (grid.empty()) throw Error(Errc::InvalidArgument, "sweep grid is empty");
  if (models.empty()) throw Error(Errc::NoModels, "sweep needs at least one model");
  SweepTable table;

  if (kind == SweepKind::TestSize) {
    table.columns = {"test_fraction", "test_accuracy", "oracle", "max_expert"};
    for (double t : grid) {
      BenchmarkConfig cfg = fixed;
      cfg.val_fraction = 1.0 - t;
      const RunReport r = run_benchmark(queries, backend, models, embedder, cfg);
      std::vector<double> oracle;
      std::vector<double> max_expert;
      for (const auto& [_, s] : r.datasets) {
        oracle.push_back(s.oracle);
        max_expert.push_back(s.max_expert);
      }
      table.rows.push_back({num(t), num(r.overall), num(mean(oracle)), num(mean(max_expert))});
    }
    return table;
  }

  if (kind == SweepKind::KSweep) {
    table.columns = {"k", "val_accuracy", "test_accuracy", "val_oracle", "test_oracle", "inertia"};
  } else {
    table.columns = {"models", "val_accuracy", "test_accuracy", "test_oracle", "selected"};
  }
  std::vector<std::vector<std::vector<double>>> values(grid.size());  // [point][column][seed]
  std::vector<std::string> selected_labels(grid.size());

  GradeLedger ledger;
  for (std::uint64_t seed : fixed.seeds) {
    const PreparedSeed p = prepare(queries, seed, fixed.val_fraction, embedder);
    const std::vector<std::size_t> zeros(p.val.size(), 0);
    const ModelEvaluation val_eval = evaluate_models(models, backend, p.val, zeros, fixed.calibration, ledger);
    std::map<std::pair<std::string, std::string>, bool> val_correct;
    for (const auto& r : val_eval.records) val_correct[{r.model_id, r.query_id}] = r.correct;
    const CorrectnessMatrix test_matrix = direct_matrix(models, backend, p.test, fixed);
    const double test_oracle = oracle_accuracy(test_matrix);

    FitOptions fo = fixed.fit;
    fo.embedder_id = embedder.id();

    if (kind == SweepKind::KSweep) {
      CorrectnessMatrix val_matrix(models.size(), std::vector<bool>(p.val.size()));
      for (std::size_t m = 0; m < models.size(); ++m) {
        for (std::size_t i = 0; i < p.val.size(); ++i) val_matrix[m][i] = val_correct[{models[m], p.val[i].key()}];
      }
      const double val_oracle = oracle_accuracy(val_matrix);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto k = static_cast<std::size_t>(std::llround(grid[g]));
        const ClusterModel cm = fit(p.val_vecs, k, seed, fo);
        const ProfileStore store = calibrate(models, backend, p.val, embedder, cm, fixed.calibration, &ledger);
        std::vector<std::size_t> ids;
        for (const auto& v : p.val_vecs) ids.push_back(assign(v, cm).cluster_id);
        const double val_acc = cluster_argmax_accuracy(store, ids, p.val, val_correct);
        const auto outcomes =
            evaluate_strategy(fixed.strategy, store, p.test, p.test_vecs, test_matrix, models, backend, fixed, seed);
        std::vector<double> row{static_cast<double>(k), val_acc, test_accuracy(outcomes), val_oracle, test_oracle,
                                cm.inertia};
        values[g].resize(row.size());
        for (std::size_t c = 0; c < row.size(); ++c) values[g][c].push_back(row[c]);
      }
    } else {
      const ClusterModel cm = fit(p.val_vecs, fixed.k, seed, fo);
      const ProfileStore pool = calibrate(models, backend, p.val, embedder, cm, fixed.calibration, &ledger);
      std::vector<std::size_t> ids;
      for (const auto& v : p.val_vecs) ids.push_back(assign(v, cm).cluster_id);
      const auto pool_profiles = pool.profile_list();
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto m = static_cast<std::size_t>(std::llround(grid[g]));
        const std::vector<std::string> chosen = select_model_set(pool_profiles, m);
        ProfileStore store = pool;
        store.profiles.clear();
        for (const auto& id : chosen) store.profiles.emplace(id, pool.profiles.at(id));
        CorrectnessMatrix sub;
        std::vector<std::string> chosen_sorted;
        for (std::size_t r = 0; r < models.size(); ++r) {
          if (std::find(chosen.begin(), chosen.end(), models[r]) != chosen.end()) {
            sub.push_back(test_matrix[r]);
            chosen_sorted.push_back(models[r]);
          }
        }
        const double val_acc = cluster_argmax_accuracy(store, ids, p.val, val_correct);
        const auto outcomes =
            evaluate_strategy(fixed.strategy, store, p.test, p.test_vecs, sub, chosen_sorted, backend, fixed, seed);
        std::vector<double> row{static_cast<double>(m), val_acc, test_accuracy(outcomes), oracle_accuracy(sub)};
        values[g].resize(row.size());
        for (std::size_t c = 0; c < row.size(); ++c) values[g][c].push_back(row[c]);
        if (selected_labels[g].empty()) {
          for (std::size_t i = 0; i < chosen.size(); ++i) selected_labels[g] += (i ? "|" : "") + chosen[i];
        }
      }
    }
  }

  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<std::string> row;
    for (const auto& col : values[g]) row.push_back(num(mean(col)));
    if (kind == SweepKind::ModelCount) row.push_back(selected_labels[g]);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace cluster_route
