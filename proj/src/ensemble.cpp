#include "cluster_route/ensemble.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <regex>

#include "cluster_route/error.hpp"

namespace cluster_route {

namespace {

std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string fold(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view last_nonempty_line(std::string_view s) {
  std::string_view best;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find('\n', start);
    if (end == std::string_view::npos) end = s.size();
    auto line = trim(s.substr(start, end - start));
    if (!line.empty()) best = line;
    start = end + 1;
  }
  return best;
}

std::optional<std::string_view> last_boxed(std::string_view s) {
  static constexpr std::string_view kBoxed = "\\boxed{";
  std::size_t pos = s.rfind(kBoxed);
  while (pos != std::string_view::npos) {
    const std::size_t open = pos + kBoxed.size();
    int depth = 1;
    for (std::size_t i = open; i < s.size(); ++i) {
      if (s[i] == '{') ++depth;
      if (s[i] == '}' && --depth == 0) return s.substr(open, i - open);
    }
    // Unbalanced; try an earlier occurrence.
    if (pos == 0) break;
    pos = s.rfind(kBoxed, pos - 1);
  }
  return std::nullopt;
}

std::string_view after_marker(std::string_view raw) {
  const std::string lower = fold(raw);
  std::size_t best = std::string::npos;
  std::size_t best_len = 0;
  for (std::string_view marker : {std::string_view("answer is"), std::string_view("answer:")}) {
    const std::size_t p = lower.rfind(marker);
    if (p != std::string::npos && (best == std::string::npos || p > best)) {
      best = p;
      best_len = marker.size();
    }
  }
  if (best == std::string::npos) return {};
  std::string_view rest = raw.substr(best + best_len);
  const std::size_t eol = rest.find('\n');
  std::string_view line = trim(rest.substr(0, eol));
  if (line.empty()) return last_nonempty_line(rest);
  return line;
}

std::string extract(std::string_view raw) {
  if (auto boxed = last_boxed(raw)) return std::string(trim(*boxed));
  std::string_view picked = after_marker(raw);
  if (picked.empty()) picked = last_nonempty_line(raw);
  picked = trim(picked);
  // Sentence punctuation is not part of the answer.
  while (!picked.empty() && (picked.back() == '.' || picked.back() == ':')) picked.remove_suffix(1);
  return std::string(trim(picked));
}

std::string render_double(double x) {
  if (x == 0.0) return "0";
  if (std::fabs(x) < 1e15 && x == std::round(x)) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", x);
    return buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string canonical_integer(std::string digits) {
  bool negative = false;
  if (!digits.empty() && (digits[0] == '-' || digits[0] == '+')) {
    negative = digits[0] == '-';
    digits.erase(0, 1);
  }
  digits.erase(std::remove(digits.begin(), digits.end(), ','), digits.end());
  const std::size_t nz = digits.find_first_not_of('0');
  digits = nz == std::string::npos ? "0" : digits.substr(nz);
  if (digits == "0") return "0";
  return negative ? "-" + digits : digits;
}

std::string canonical_number(std::string_view text) {
  static const std::regex kNumber(
      R"(([-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?:[eE][-+]?\d+)?|[-+]?\.\d+(?:[eE][-+]?\d+)?)(?:\s*/\s*([-+]?\d+))?)");
  std::string s(text);
  std::smatch last;
  bool found = false;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kNumber); it != std::sregex_iterator(); ++it) {
    last = *it;
    found = true;
  }
  if (!found) return std::string(kEmptyAnswer);

  std::string num = last[1].str();
  const bool is_integer = num.find_first_of(".eE") == std::string::npos;
  if (last[2].matched) {
    std::string den_text = last[2].str();
    if (is_integer) {
      std::string p = canonical_integer(num);
      std::string q = canonical_integer(den_text);
      if (q == "0") return std::string(kEmptyAnswer);
      if (p.size() <= 17 && q.size() <= 17) {
        long long pn = std::stoll(p);
        long long qn = std::stoll(q);
        if (qn < 0) {
          pn = -pn;
          qn = -qn;
        }
        const long long g = std::gcd(pn < 0 ? -pn : pn, qn);
        if (g > 0) {
          pn /= g;
          qn /= g;
        }
        if (qn == 1) return std::to_string(pn);
        return render_double(static_cast<double>(pn) / static_cast<double>(qn));
      }
    }
    num.erase(std::remove(num.begin(), num.end(), ','), num.end());
    const double den = std::stod(den_text);
    if (den == 0.0) return std::string(kEmptyAnswer);
    return render_double(std::stod(num) / den);
  }
  if (is_integer) return canonical_integer(num);
  num.erase(std::remove(num.begin(), num.end(), ','), num.end());
  return render_double(std::stod(num));
}

std::string canonical_choice(std::string_view text) {
  static const std::regex kLeading(R"(^\(?([A-Ja-j])\)?(?:[\s.:,)\]]|$))");
  static const std::regex kStandalone(R"((?:^|[^A-Za-z0-9])\(?([A-J])\)?(?=[^A-Za-z0-9]|$))");
  std::string s(text);
  std::smatch m;
  if (std::regex_search(s, m, kLeading)) {
    return std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0]))));
  }
  std::string letter;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kStandalone); it != std::sregex_iterator(); ++it) {
    letter = (*it)[1].str();
  }
  return letter;
}

}  // namespace

std::string normalize_answer(std::string_view raw, GraderKind kind) {
  if (kind == GraderKind::CodePluggable) return std::string(trim(raw));
  const std::string extracted = extract(raw);
  switch (kind) {
    case GraderKind::Numeric: return canonical_number(extracted);
    case GraderKind::MultipleChoice: return canonical_choice(extracted);
    default: return fold(extracted);
  }
}

VoteOutcome majority_vote(std::span<const Sample> samples, GraderKind kind,
                          std::span<const std::string> model_priority) {
  VoteOutcome outcome;
  for (const Sample& s : samples) {
    VoteGroup& g = outcome.groups[normalize_answer(s.raw, kind)];
    ++g.count;
    g.samples.push_back(s);
  }
  outcome.samples_used = samples.size();
  if (outcome.groups.empty()) return outcome;

  auto priority_of = [&](const std::string& model) {
    auto it = std::find(model_priority.begin(), model_priority.end(), model);
    return static_cast<std::size_t>(it - model_priority.begin());
  };

  const bool only_empty = outcome.groups.size() == 1 && outcome.groups.begin()->first == kEmptyAnswer;
  std::size_t best_count = 0;
  for (const auto& [answer, g] : outcome.groups) {
    if (answer == kEmptyAnswer && !only_empty) continue;
    best_count = std::max(best_count, g.count);
  }

  struct Candidate {
    std::size_t priority;
    std::size_t round;
    const std::string* answer;
  };
  std::vector<Candidate> tied;
  for (const auto& [answer, g] : outcome.groups) {
    if (answer == kEmptyAnswer && !only_empty) continue;
    if (g.count != best_count) continue;
    Candidate c{model_priority.size(), static_cast<std::size_t>(-1), &answer};
    for (const Sample& s : g.samples) {
      c.priority = std::min(c.priority, priority_of(s.model_id));
      c.round = std::min(c.round, s.round);
    }
    tied.push_back(c);
  }
  outcome.tie = tied.size() > 1;
  const auto win = std::min_element(tied.begin(), tied.end(), [](const Candidate& a, const Candidate& b) {
    if (a.priority != b.priority) return a.priority < b.priority;
    if (a.round != b.round) return a.round < b.round;
    return *a.answer < *b.answer;
  });
  outcome.winner = *win->answer;
  return outcome;
}

namespace {

EnsembleResult finish(std::vector<Sample> samples, std::size_t failures, const QueryRecord& query,
                      std::span<const std::string> priority) {
  if (samples.empty()) {
    throw Error(Errc::BackendFailure, "all " + std::to_string(failures) + " samples failed for " + query.key());
  }
  EnsembleResult result;
  result.vote = majority_vote(samples, query.grader, priority);
  result.answer = result.vote.winner;
  result.raw_answer = result.vote.groups.at(result.answer).samples.front().raw;
  result.failures = failures;
  result.degraded = failures > 0;
  result.unparsed = result.answer == kEmptyAnswer;
  return result;
}

}  // namespace

EnsembleResult self_consistency(const std::string& model, const QueryRecord& query, const SamplingParams& params,
                                Backend& backend) {
  params.validate();
  std::vector<Sample> samples;
  std::size_t failures = 0;
  for (std::size_t r = 0; r < params.rounds; ++r) {
    try {
      samples.push_back({model, r, backend.complete(model, query, params, r)});
    } catch (const Error&) {
      ++failures;
    }
  }
  const std::string priority[] = {model};
  return finish(std::move(samples), failures, query, priority);
}

EnsembleResult model_switch(std::span<const std::string> models, const QueryRecord& query,
                            const SamplingParams& params, Backend& backend) {
  if (models.empty()) throw Error(Errc::NoModels, "model_switch needs at least one model");
  if (models.size() == 1) return self_consistency(models.front(), query, params, backend);
  params.validate();

  std::vector<Sample> samples;
  std::map<std::string, std::size_t> counts;
  std::size_t failures = 0;
  for (std::size_t t = 0; t < params.rounds; ++t) {
    const std::string& model = models[t % models.size()];
    try {
      Sample s{model, t, backend.complete(model, query, params, t)};
      const std::string key = normalize_answer(s.raw, query.grader);
      samples.push_back(std::move(s));
      if (key != kEmptyAnswer && 2 * ++counts[key] > params.rounds) break;
    } catch (const Error&) {
      ++failures;
    }
  }
  return finish(std::move(samples), failures, query, models);
}

EnsembleResult direct(const std::string& model, const QueryRecord& query, Backend& backend,
                      const SamplingParams& params) {
  std::vector<Sample> samples{{model, 0, backend.complete(model, query, params, 0)}};
  const std::string priority[] = {model};
  return finish(std::move(samples), 0, query, priority);
}

EnsembleResult run_ensemble(EnsembleMode mode, std::span<const std::string> selected, const QueryRecord& query,
                            const SamplingParams& vote_params, const SamplingParams& direct_params, Backend& backend) {
  if (selected.empty()) throw Error(Errc::NoModels, "no model selected for " + query.key());
  if (mode == EnsembleMode::Direct || query.grader == GraderKind::CodePluggable) {
    return direct(selected.front(), query, backend, direct_params);
  }
  if (selected.size() == 1) return self_consistency(selected.front(), query, vote_params, backend);
  return model_switch(selected, query, vote_params, backend);
}

}  // namespace cluster_route
