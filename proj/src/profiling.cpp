#include "cluster_route/profiling.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>

#include "cluster_route/ensemble.hpp"
#include "cluster_route/error.hpp"
#include "cluster_route/hashing.hpp"
#include "cluster_route/parallel.hpp"

namespace cluster_route {

using json = nlohmann::json;

CapabilityProfile CapabilityProfile::from_counts(std::string model_id, std::vector<std::size_t> correct,
                                                 std::vector<std::size_t> total) {
  if (correct.size() != total.size()) throw Error(Errc::CorruptFile, "profile count arrays differ in length");
  CapabilityProfile p;
  p.model_id = std::move(model_id);
  p.scores.resize(total.size());
  std::size_t sum_correct = 0;
  std::size_t sum_total = 0;
  for (std::size_t c = 0; c < total.size(); ++c) {
    if (correct[c] > total[c]) throw Error(Errc::CorruptFile, "correct count exceeds total in cluster " + std::to_string(c));
    if (total[c] > 0) p.scores[c] = static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    sum_correct += correct[c];
    sum_total += total[c];
  }
  p.global_score = sum_total == 0 ? 0.0 : static_cast<double>(sum_correct) / static_cast<double>(sum_total);
  p.correct_counts = std::move(correct);
  p.total_counts = std::move(total);
  return p;
}

std::vector<CapabilityProfile> ProfileStore::profile_list() const {
  std::vector<CapabilityProfile> out;
  out.reserve(profiles.size());
  for (const auto& [_, p] : profiles) out.push_back(p);
  return out;
}

std::string dataset_fingerprint(std::span<const QueryRecord> queries) {
  std::vector<std::string> keys;
  keys.reserve(queries.size());
  for (const auto& q : queries) keys.push_back(q.key());
  std::sort(keys.begin(), keys.end());
  std::string joined;
  for (const auto& k : keys) {
    joined += k;
    joined.push_back('\n');
  }
  return sha256_hex(joined);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

CapabilityProfile score_model(std::span<const ValidationRecord> records, std::size_t k, std::string model_id) {
  if (!records.empty()) {
    if (model_id.empty()) model_id = records.front().model_id;
    for (const auto& r : records) {
      if (r.model_id != model_id) throw Error(Errc::MixedModels, r.model_id + " vs " + model_id);
    }
  }
  // Tally in query order so the result does not depend on completion order.
  std::vector<const ValidationRecord*> sorted;
  sorted.reserve(records.size());
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const ValidationRecord* a, const ValidationRecord* b) { return a->query_id < b->query_id; });

  std::vector<std::size_t> correct(k, 0);
  std::vector<std::size_t> total(k, 0);
  for (const ValidationRecord* r : sorted) {
    if (r->cluster_id >= k) {
      throw Error(Errc::ClusterOutOfRange,
                  "record " + r->query_id + " in cluster " + std::to_string(r->cluster_id) + " with k=" + std::to_string(k));
    }
    ++total[r->cluster_id];
    if (r->correct) ++correct[r->cluster_id];
  }
  return CapabilityProfile::from_counts(std::move(model_id), std::move(correct), std::move(total));
}

GradeLedger::GradeLedger(std::string path) : path_(std::move(path)) {
  std::ifstream in(*path_);
  std::string line;
  while (in && std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded()) continue;
    entries_.insert_or_assign(
        Key{rec.value("model_id", ""), rec.value("query", ""), rec.value("sampling", "")},
        GradedAnswer{rec.value("raw", ""), rec.value("normalized", ""), rec.value("correct", false)});
  }
}

std::optional<GradedAnswer> GradeLedger::find(const std::string& model_id, const std::string& query_key,
                                              const std::string& fingerprint) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(Key{model_id, query_key, fingerprint});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void GradeLedger::insert(const std::string& model_id, const std::string& query_key, const std::string& fingerprint,
                         const GradedAnswer& answer) {
  std::lock_guard lock(mutex_);
  entries_.insert_or_assign(Key{model_id, query_key, fingerprint}, answer);
  if (!path_) return;
  std::ofstream out(*path_, std::ios::app);
  if (!out) throw Error(Errc::IoError, "cannot append to grade ledger " + *path_);
  out << json{{"model_id", model_id},     {"query", query_key},          {"sampling", fingerprint},
              {"raw", answer.raw},        {"normalized", answer.normalized}, {"correct", answer.correct}}
             .dump()
      << '\n';
}

std::size_t GradeLedger::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::string CalibrationOptions::sampling_fingerprint() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s:r=%zu:t=%.6g:p=%.6g:m=%zu",
                mode == CalibrationMode::SingleSample ? "single" : "sc",
                mode == CalibrationMode::SingleSample ? std::size_t{1} : rounds, params.temperature, params.top_p,
                params.max_tokens);
  return buf;
}

ModelEvaluation evaluate_models(std::span<const std::string> models, Backend& backend,
                                std::span<const QueryRecord> queries, std::span<const std::size_t> cluster_ids,
                                const CalibrationOptions& options, GradeLedger& ledger) {
  if (cluster_ids.size() != queries.size()) throw Error(Errc::InvalidArgument, "one cluster id per query required");
  const std::string fingerprint = options.sampling_fingerprint();
  SamplingParams params = options.params;
  params.rounds = options.mode == CalibrationMode::SingleSample ? 1 : options.rounds;

  const std::size_t n = models.size() * queries.size();
  std::vector<std::optional<ValidationRecord>> slots(n);
  std::vector<std::string> failures(n);

  parallel_for(n, options.parallelism, [&](std::size_t idx) {
    const std::string& model = models[idx / queries.size()];
    const QueryRecord& q = queries[idx % queries.size()];
    const std::string key = q.key();
    std::optional<GradedAnswer> graded = ledger.find(model, key, fingerprint);
    if (!graded) {
      try {
        EnsembleResult r;
        if (options.mode == CalibrationMode::SingleSample || q.grader == GraderKind::CodePluggable) {
          r = direct(model, q, backend, params);
        } else {
          r = self_consistency(model, q, params, backend);
        }
        graded = GradedAnswer{r.raw_answer, r.answer, grade(r.answer, q.gold, q.grader, options.grader)};
      } catch (const Error& e) {
        if (e.code() != Errc::BackendFailure && e.code() != Errc::AuthMissing) throw;
        failures[idx] = e.what();
        return;
      }
      ledger.insert(model, key, fingerprint, *graded);
    }
    slots[idx] = ValidationRecord{key, model, cluster_ids[idx % queries.size()], graded->raw, graded->normalized,
                                  graded->correct};
  });

  ModelEvaluation out;
  std::set<std::string> incomplete;
  for (std::size_t idx = 0; idx < n; ++idx) {
    if (slots[idx]) {
      out.records.push_back(std::move(*slots[idx]));
    } else {
      incomplete.insert(models[idx / queries.size()]);
    }
  }
  if (!incomplete.empty() && !options.allow_partial) {
    std::string first;
    for (const auto& f : failures) {
      if (!f.empty()) {
        first = f;
        break;
      }
    }
    throw Error(Errc::BackendFailure, "calibration incomplete for " + *incomplete.begin() + " (" + first + ")");
  }
  out.incomplete.assign(incomplete.begin(), incomplete.end());
  std::sort(out.records.begin(), out.records.end(), [](const ValidationRecord& a, const ValidationRecord& b) {
    return std::tie(a.model_id, a.query_id) < std::tie(b.model_id, b.query_id);
  });
  return out;
}

namespace {

std::vector<std::size_t> assign_all(std::span<const QueryRecord> queries, const Embedder& embedder,
                                    const ClusterModel& model) {
  std::vector<std::string> texts;
  texts.reserve(queries.size());
  for (const auto& q : queries) texts.push_back(q.text);
  const auto vectors = embedder.embed_batch(texts);
  std::vector<std::size_t> ids;
  ids.reserve(vectors.size());
  for (const auto& v : vectors) ids.push_back(assign(v, model).cluster_id);
  return ids;
}

void check_embedder(const ClusterModel& model, const Embedder& embedder) {
  if (!model.embedder_id.empty() && model.embedder_id != embedder.id()) {
    throw Error(Errc::InvalidConfig,
                "cluster model was fit with embedder '" + model.embedder_id + "', not '" + embedder.id() + "'");
  }
}

void check_unique(std::span<const std::string> models) {
  std::set<std::string> seen;
  for (const auto& m : models) {
    if (!seen.insert(m).second) throw Error(Errc::DuplicateModel, m);
  }
}

std::map<std::string, CapabilityProfile> build_profiles(std::span<const std::string> models,
                                                        const std::vector<ValidationRecord>& records, std::size_t k) {
  std::map<std::string, std::vector<ValidationRecord>> by_model;
  for (const auto& m : models) by_model[m];
  for (const auto& r : records) by_model[r.model_id].push_back(r);
  std::map<std::string, CapabilityProfile> out;
  for (const auto& [id, recs] : by_model) out.emplace(id, score_model(recs, k, id));
  return out;
}

}  // namespace

ProfileStore calibrate(std::span<const std::string> models, Backend& backend, std::span<const QueryRecord> val_queries,
                       const Embedder& embedder, const ClusterModel& cluster_model, const CalibrationOptions& options,
                       GradeLedger* ledger) {
  if (models.empty()) throw Error(Errc::NoModels, "calibrate needs at least one model");
  if (val_queries.empty()) throw Error(Errc::InvalidArgument, "calibrate needs validation queries");
  check_unique(models);
  check_embedder(cluster_model, embedder);

  GradeLedger scratch;
  GradeLedger& grades = ledger ? *ledger : scratch;
  const auto cluster_ids = assign_all(val_queries, embedder, cluster_model);
  ModelEvaluation eval = evaluate_models(models, backend, val_queries, cluster_ids, options, grades);

  ProfileStore store;
  store.version = 1;
  store.embedder_id = embedder.id();
  store.cluster_model = cluster_model;
  store.cluster_model.embedder_id = embedder.id();
  store.profiles = build_profiles(models, eval.records, cluster_model.k);
  store.dataset_fingerprint = dataset_fingerprint(val_queries);
  store.created_at = options.created_at.empty() ? utc_timestamp() : options.created_at;
  store.incomplete_models = std::move(eval.incomplete);
  return store;
}

ProfileStore add_model(const ProfileStore& store, const std::string& new_model, Backend& backend,
                       std::span<const QueryRecord> val_queries, const Embedder& embedder,
                       const CalibrationOptions& options, GradeLedger* ledger) {
  if (store.profiles.count(new_model)) throw Error(Errc::DuplicateModel, new_model);
  if (dataset_fingerprint(val_queries) != store.dataset_fingerprint) {
    throw Error(Errc::FingerprintMismatch, "validation queries do not match the store's dataset fingerprint");
  }
  check_embedder(store.cluster_model, embedder);

  GradeLedger scratch;
  GradeLedger& grades = ledger ? *ledger : scratch;
  const auto cluster_ids = assign_all(val_queries, embedder, store.cluster_model);
  const std::string models[] = {new_model};
  ModelEvaluation eval = evaluate_models(models, backend, val_queries, cluster_ids, options, grades);

  ProfileStore next = store;
  next.profiles.emplace(new_model, score_model(eval.records, store.cluster_model.k, new_model));
  for (auto& m : eval.incomplete) next.incomplete_models.push_back(std::move(m));
  next.version = store.version + 1;
  next.created_at = options.created_at.empty() ? utc_timestamp() : options.created_at;
  return next;
}

ProfileStore recalibrate_with_dataset(const ProfileStore& store, std::span<const QueryRecord> old_val_queries,
                                      std::span<const QueryRecord> new_queries, std::span<const std::string> models,
                                      Backend& backend, const Embedder& embedder, std::size_t k, std::uint64_t seed,
                                      const CalibrationOptions& options, GradeLedger* ledger,
                                      const FitOptions& fit_options) {
  if (dataset_fingerprint(old_val_queries) != store.dataset_fingerprint) {
    throw Error(Errc::FingerprintMismatch, "previous validation queries do not match the store");
  }
  if (embedder.id() != store.embedder_id) {
    throw Error(Errc::InvalidConfig, "store was built with embedder '" + store.embedder_id + "'");
  }
  std::vector<std::string> model_ids(models.begin(), models.end());
  if (model_ids.empty()) {
    for (const auto& [id, _] : store.profiles) model_ids.push_back(id);
  }
  check_unique(model_ids);

  std::vector<QueryRecord> all(old_val_queries.begin(), old_val_queries.end());
  std::set<std::string> keys;
  for (const auto& q : all) keys.insert(q.key());
  for (const auto& q : new_queries) {
    if (!keys.insert(q.key()).second) throw Error(Errc::InvalidArgument, "query " + q.key() + " already calibrated");
    all.push_back(q);
  }

  std::vector<std::string> old_texts;
  std::vector<std::string> new_texts;
  for (const auto& q : old_val_queries) old_texts.push_back(q.text);
  for (const auto& q : new_queries) new_texts.push_back(q.text);
  std::vector<EmbeddingVector> old_vecs = old_texts.empty() ? std::vector<EmbeddingVector>{} : embedder.embed_batch(old_texts);
  std::vector<EmbeddingVector> new_vecs = new_texts.empty() ? std::vector<EmbeddingVector>{} : embedder.embed_batch(new_texts);

  FitOptions fo = fit_options;
  fo.embedder_id = embedder.id();
  ClusterModel model = refit_with_dataset(old_vecs, new_vecs, k, seed, fo);

  std::vector<std::size_t> cluster_ids;
  cluster_ids.reserve(all.size());
  for (const auto& v : old_vecs) cluster_ids.push_back(assign(v, model).cluster_id);
  for (const auto& v : new_vecs) cluster_ids.push_back(assign(v, model).cluster_id);

  GradeLedger scratch;
  GradeLedger& grades = ledger ? *ledger : scratch;
  ModelEvaluation eval = evaluate_models(model_ids, backend, all, cluster_ids, options, grades);

  ProfileStore next;
  next.version = store.version + 1;
  next.embedder_id = embedder.id();
  next.cluster_model = std::move(model);
  next.profiles = build_profiles(model_ids, eval.records, k);
  next.dataset_fingerprint = dataset_fingerprint(all);
  next.created_at = options.created_at.empty() ? utc_timestamp() : options.created_at;
  next.incomplete_models = std::move(eval.incomplete);
  return next;
}

}  // namespace cluster_route
