#pragma once

// Adaptive k-NN decision rules.
//
// Every rule here scans the defined neighborhood sizes of a profile in
// ascending order and stops at the first ball whose empirical label bias is
// significant, i.e. strictly exceeds a k-dependent confidence radius. If no
// ball qualifies the rule abstains.

#include <aknn/dataset.hpp>
#include <aknn/neighbor_index.hpp>
#include <aknn/parallel.hpp>

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace aknn {

// c1 * sqrt((ln n + ln(1/delta)) / k)
struct TheoryDefault {
  double c1 = 1.0;
  double delta = 0.1;
};

// c1 * sqrt((d0 ln n + ln(1/delta)) / k), d0 the VC dimension of balls.
struct TheoryVC {
  double c1 = 1.0;
  double delta = 0.1;
  unsigned d0 = 2;
};

// A / sqrt(k)
struct Practical {
  double A = 1.0;
};

using ConfidenceRule = std::variant<TheoryDefault, TheoryVC, Practical>;

inline void validate(const ConfidenceRule& rule) {
  std::visit(
      [](const auto& r) {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, Practical>) {
          if (!(r.A >= 0.0) || !std::isfinite(r.A)) throw std::invalid_argument("Practical rule: A must be >= 0");
        } else {
          if (!(r.c1 > 0.0) || !std::isfinite(r.c1)) throw std::invalid_argument("theory rule: c1 must be > 0");
          if (!(r.delta > 0.0 && r.delta < 1.0)) throw std::invalid_argument("theory rule: delta must lie in (0,1)");
          if constexpr (std::is_same_v<R, TheoryVC>)
            if (r.d0 == 0) throw std::invalid_argument("theory rule: d0 must be positive");
        }
      },
      rule);
}

inline std::string describe(const ConfidenceRule& rule) {
  return std::visit(
      [](const auto& r) -> std::string {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, Practical>) return "practical(A=" + detail::format_double(r.A) + ")";
        if constexpr (std::is_same_v<R, TheoryDefault>)
          return "theory(c1=" + detail::format_double(r.c1) + ",delta=" + detail::format_double(r.delta) + ")";
        if constexpr (std::is_same_v<R, TheoryVC>)
          return "theory_vc(c1=" + detail::format_double(r.c1) + ",delta=" + detail::format_double(r.delta) +
                 ",d0=" + std::to_string(r.d0) + ")";
      },
      rule);
}

// Confidence radius for a ball of k points out of n. Natural logarithms.
inline double delta_threshold(const ConfidenceRule& rule, std::size_t n, std::size_t k) {
  if (k == 0) throw std::invalid_argument("delta_threshold: k must be positive");
  const double kd = static_cast<double>(k);
  return std::visit(
      [&](const auto& r) -> double {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, Practical>) {
          return r.A / std::sqrt(kd);
        } else {
          if (n == 0 || k > n) throw std::invalid_argument("delta_threshold: theory rules need 0 < k <= n");
          double d0 = 1.0;
          if constexpr (std::is_same_v<R, TheoryVC>) d0 = static_cast<double>(r.d0);
          const double log_term = d0 * std::log(static_cast<double>(n)) + std::log(1.0 / r.delta);
          return r.c1 * std::sqrt(log_term / kd);
        }
      },
      rule);
}

struct Prediction {
  // Predicted labels; empty means abstain ("?").
  std::vector<LabelId> labels;
  std::optional<std::size_t> chosen_k;
  // Significance statistic minus threshold at chosen_k.
  std::optional<double> margin;

  bool abstained() const noexcept { return labels.empty(); }
  bool single() const noexcept { return labels.size() == 1; }
};

// Binary rule. The first alphabet label is +1, the second -1.
inline Prediction predict_binary(const ProfileView& profile, const ConfidenceRule& rule) {
  if (profile.alphabet_size() != 2) throw std::invalid_argument("predict_binary: alphabet must have exactly two labels");
  for (std::size_t g = 0; g < profile.groups(); ++g) {
    const std::size_t k = profile.total(g);
    const double eta = (static_cast<double>(profile.count(g, 0)) - static_cast<double>(profile.count(g, 1))) /
                       static_cast<double>(k);
    const double threshold = delta_threshold(rule, profile.n_reference(), k);
    if (std::abs(eta) > threshold) return {{eta > 0 ? LabelId{0} : LabelId{1}}, k, std::abs(eta) - threshold};
  }
  return {};
}

// Multiclass rule: stop at the first k where some label's empirical frequency
// exceeds 1/|Y| by more than the threshold; every such label is returned.
inline Prediction predict_multiclass(const ProfileView& profile, const ConfidenceRule& rule) {
  const std::size_t labels = profile.alphabet_size();
  if (labels < 2) throw std::invalid_argument("predict_multiclass: alphabet must have at least two labels");
  const double chance = 1.0 / static_cast<double>(labels);
  for (std::size_t g = 0; g < profile.groups(); ++g) {
    const std::size_t k = profile.total(g);
    const double threshold = delta_threshold(rule, profile.n_reference(), k);
    Prediction p;
    double best = 0.0;
    for (std::size_t y = 0; y < labels; ++y) {
      const double excess = static_cast<double>(profile.count(g, y)) / static_cast<double>(k) - chance;
      if (excess > threshold) {
        if (p.labels.empty() || excess > best) best = excess;
        p.labels.push_back(static_cast<LabelId>(y));
      }
    }
    if (!p.labels.empty()) {
      p.chosen_k = k;
      p.margin = best - threshold;
      return p;
    }
  }
  return {};
}

enum class ResolutionScore {
  // max_k eta^y(B_k) / sqrt(k)
  literal,
  // max_k (eta^y(B_k) - 1/|Y|) * sqrt(k)
  significance,
};

inline ResolutionScore parse_resolution(const std::string& s) {
  if (s == "literal") return ResolutionScore::literal;
  if (s == "significance") return ResolutionScore::significance;
  throw std::invalid_argument("unknown resolution score '" + s + "'");
}

// Single-label fallback: the label with the largest score over all defined
// k; ties go to the earlier alphabet label.
inline LabelId resolve_single_label(const ProfileView& profile, ResolutionScore score = ResolutionScore::literal) {
  const std::size_t labels = profile.alphabet_size();
  if (labels == 0 || profile.empty()) throw std::invalid_argument("resolve_single_label: empty profile");
  const double chance = 1.0 / static_cast<double>(labels);
  std::vector<double> best(labels, -INFINITY);
  for (std::size_t g = 0; g < profile.groups(); ++g) {
    const double k = static_cast<double>(profile.total(g));
    const double root = std::sqrt(k);
    for (std::size_t y = 0; y < labels; ++y) {
      const double freq = static_cast<double>(profile.count(g, y)) / k;
      const double s = score == ResolutionScore::literal ? freq / root : (freq - chance) * root;
      if (s > best[y]) best[y] = s;
    }
  }
  std::size_t arg = 0;
  for (std::size_t y = 1; y < labels; ++y)
    if (best[y] > best[arg]) arg = y;
  return static_cast<LabelId>(arg);
}

// Index of the smallest defined ball holding at least k points.
inline std::size_t group_for_k(const ProfileView& profile, std::size_t k) {
  auto totals = profile.defined_k();
  auto it = std::lower_bound(totals.begin(), totals.end(), k);
  if (k == 0 || it == totals.end())
    throw std::invalid_argument("knn_predict: k=" + std::to_string(k) + " exceeds the profile size");
  return static_cast<std::size_t>(it - totals.begin());
}

// Plain k-NN majority vote on the smallest defined ball with at least k
// points. Majority ties go to the earlier alphabet label.
inline LabelId knn_predict(const ProfileView& profile, std::size_t k) {
  const std::size_t g = group_for_k(profile, k);
  auto counts = profile.counts(g);
  std::size_t arg = 0;
  for (std::size_t y = 1; y < counts.size(); ++y)
    if (counts[y] > counts[arg]) arg = y;
  return static_cast<LabelId>(arg);
}

enum class RuleMode { binary, multiclass };

inline Prediction predict(const ProfileView& profile, const ConfidenceRule& rule, RuleMode mode) {
  return mode == RuleMode::binary ? predict_binary(profile, rule) : predict_multiclass(profile, rule);
}

// Same answer as predict() on the full profile, computed on growing
// prefixes: the scan only reads groups up to the one where it stops, and a
// capped profile reproduces those groups exactly.
inline Prediction predict_progressive(const NeighborIndex& index, std::span<const double> query,
                                      const ConfidenceRule& rule, RuleMode mode, ProfileOptions opts = {},
                                      std::size_t first_cap = 32) {
  const std::size_t limit = opts.max_k.value_or(index.size());
  std::size_t cap = std::max<std::size_t>(1, std::min(first_cap, limit));
  for (;;) {
    opts.max_k = cap;
    const auto profile = index.profile(query, opts);
    const auto p = predict(profile, rule, mode);
    if (!p.abstained() || cap >= limit || profile.defined_k().back() >= profile.n_reference()) return p;
    cap = std::min(limit, cap * 4);
  }
}

struct QueryOutcome {
  std::optional<std::size_t> chosen_k;
  // Absent when the query received no single-label prediction.
  std::optional<bool> correct;
  std::optional<LabelId> predicted;
  bool multilabel = false;
  bool multilabel_contains_truth = false;
};

struct EvalReport {
  std::size_t n_queries = 0;
  std::size_t n_predicted = 0;
  std::size_t n_correct_among_predicted = 0;
  std::size_t n_multilabel = 0;
  std::size_t n_multilabel_containing_truth = 0;
  std::vector<QueryOutcome> per_query;

  double coverage() const { return n_queries == 0 ? 0.0 : static_cast<double>(n_predicted) / n_queries; }
  std::optional<double> accuracy_on_predicted() const {
    if (n_predicted == 0) return std::nullopt;
    return static_cast<double>(n_correct_among_predicted) / static_cast<double>(n_predicted);
  }
  double multilabel_rate() const { return n_queries == 0 ? 0.0 : static_cast<double>(n_multilabel) / n_queries; }
};

struct EvalOptions {
  RuleMode mode = RuleMode::multiclass;
  // Query i is training row i and is left out of its own neighborhood.
  bool exclude_self = false;
  std::optional<std::size_t> max_k;
  // When set, abstentions and multilabel outcomes are replaced by a single
  // resolved label, so every query is predicted.
  std::optional<ResolutionScore> resolve;
  Metric metric = Metric::euclidean;
  std::size_t workers = 1;
};

// Query labels rewritten into the training alphabet's indices.
inline std::vector<LabelId> map_labels(const LabeledDataset& train, const LabeledDataset& queries) {
  std::vector<LabelId> remap(queries.alphabet_size());
  for (std::size_t y = 0; y < queries.alphabet_size(); ++y) {
    const std::size_t t = train.find_label(queries.alphabet()[y]);
    if (t == train.alphabet_size())
      throw DataError("evaluate: alphabet mismatch, query label '" + queries.alphabet()[y] +
                      "' is not in the training alphabet");
    remap[y] = static_cast<LabelId>(t);
  }
  std::vector<LabelId> out;
  out.reserve(queries.size());
  for (LabelId y : queries.labels()) out.push_back(remap[y]);
  return out;
}

// Scores one prediction against the truth. `profile` is only read when a
// resolution score is given and the prediction is not a single label.
inline QueryOutcome score_prediction(const Prediction& p, const ProfileView& profile, LabelId truth,
                                     const std::optional<ResolutionScore>& resolve) {
  QueryOutcome q;
  q.chosen_k = p.chosen_k;
  q.multilabel = p.labels.size() > 1;
  for (LabelId y : p.labels)
    if (q.multilabel && y == truth) q.multilabel_contains_truth = true;
  if (p.single())
    q.predicted = p.labels.front();
  else if (resolve)
    q.predicted = resolve_single_label(profile, *resolve);
  if (q.predicted) q.correct = *q.predicted == truth;
  return q;
}

inline void accumulate(EvalReport& report, const QueryOutcome& q) {
  ++report.n_queries;
  if (q.multilabel) ++report.n_multilabel;
  if (q.multilabel_contains_truth) ++report.n_multilabel_containing_truth;
  if (q.predicted) {
    ++report.n_predicted;
    if (*q.correct) ++report.n_correct_among_predicted;
  }
  report.per_query.push_back(q);
}

inline EvalReport evaluate(const LabeledDataset& train, const LabeledDataset& queries, const ConfidenceRule& rule,
                           const EvalOptions& opts = {}) {
  validate(rule);
  if (train.dim() != queries.dim()) throw DataError("evaluate: query dimension does not match training data");
  if (opts.exclude_self && queries.size() != train.size())
    throw std::invalid_argument("evaluate: exclude_self requires queries to be the training rows");
  const auto truth = map_labels(train, queries);
  const NeighborIndex index(train, opts.metric);

  std::vector<QueryOutcome> outcomes(queries.size());
  parallel_for(queries.size(), opts.workers, [&](std::size_t i) {
    ProfileOptions po;
    po.max_k = opts.max_k;
    if (opts.exclude_self) po.exclude_row = i;
    const auto profile = index.profile(queries.row(i), po);
    outcomes[i] = score_prediction(predict(profile, rule, opts.mode), profile, truth[i], opts.resolve);
  });

  EvalReport report;
  report.per_query.reserve(queries.size());
  for (const auto& q : outcomes) accumulate(report, q);
  return report;
}

}  // namespace aknn
