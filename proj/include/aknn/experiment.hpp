#pragma once

// Experiment drivers behind the command-line tool.
//
// Each command takes a resolved Config and returns its outputs in memory:
// named CSV tables, auxiliary files (SVG charts, JSON reports) and console
// text. Nothing here touches the filesystem except dataset loading; writing
// the outputs is left to the caller.

#include <aknn/classifier.hpp>
#include <aknn/config.hpp>
#include <aknn/dataset.hpp>
#include <aknn/errors.hpp>
#include <aknn/neighbor_index.hpp>
#include <aknn/parallel.hpp>
#include <aknn/random.hpp>
#include <aknn/svg.hpp>
#include <aknn/synthetic.hpp>
#include <aknn/ucecm.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace aknn {

// Constants fitted by running the lemma validators on the noisy step
// instance (flip 0.2, m = 20, n = 5000, delta = 0.1, 200 trials, seed 1):
// the smallest value on the calibration grid whose failure rate stayed
// within delta^2/2 plus Monte-Carlo slack. See docs/calibration.md.
inline constexpr double kCalibratedC1 = 1.0;
inline constexpr double kCalibratedCo = 0.5;

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& col) const {
    auto it = std::find(header.begin(), header.end(), col);
    if (it == header.end()) throw std::out_of_range("table " + name + ": no column '" + col + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
  const std::string& cell(std::size_t row, const std::string& col) const { return rows.at(row).at(column(col)); }
  double number(std::size_t row, const std::string& col) const { return std::stod(cell(row, col)); }

  std::string to_csv() const {
    std::string out;
    auto emit = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    emit(header);
    for (const auto& r : rows) emit(r);
    return out;
  }
};

struct Artifact {
  std::string name;
  std::string content;
};

struct CommandOutput {
  std::vector<Table> tables;
  std::vector<Artifact> files;
  std::string console;

  const Table& table(const std::string& name) const {
    for (const auto& t : tables)
      if (t.name == name) return t;
    throw std::out_of_range("no table named " + name);
  }
};

enum class Command { sweep_noise, sweep_k, validate, rates, predict };

inline Command parse_command(const std::string& s) {
  if (s == "sweep-noise") return Command::sweep_noise;
  if (s == "sweep-k") return Command::sweep_k;
  if (s == "validate") return Command::validate;
  if (s == "rates") return Command::rates;
  if (s == "predict") return Command::predict;
  throw ConfigError("unknown command '" + s + "'");
}

namespace detail {

inline std::string fmt(double v) { return std::isfinite(v) ? format_double(v) : std::string("NA"); }
inline std::string fmt(std::optional<double> v) { return v ? fmt(*v) : std::string("NA"); }

inline const std::map<std::string, std::string>& data_defaults() {
  static const std::map<std::string, std::string> d{
      {"data", "step"},
      {"label_column", "label"},
      {"dim", "1"},
      {"n_train", "5000"},
      {"n_test", "2000"},
      {"test_fraction", "0.3"},
      {"eval_mode", "split"},
      {"metric", "euclidean"},
      {"seed", "1"},
      {"workers", "1"},
  };
  return d;
}

inline std::map<std::string, std::string> merged(std::map<std::string, std::string> extra) {
  for (const auto& [k, v] : data_defaults()) extra.emplace(k, v);
  return extra;
}

inline std::string pointwise_schedule() {
  std::string s;
  for (std::size_t n = 1; n <= 4096; n *= 2) s += (s.empty() ? "" : ",") + std::to_string(n);
  return s;
}

}  // namespace detail

inline Config default_config_table(Command cmd) {
  const std::string c1 = detail::format_double(kCalibratedC1);
  const std::string co = detail::format_double(kCalibratedCo);
  switch (cmd) {
    case Command::sweep_noise:
      return Config(detail::merged({{"noise", "0,0.2,0.4"},
                                    {"noise_target", "all"},
                                    {"k", "1:101:2"},
                                    {"A", "0.5,1,2"},
                                    {"mode", "multiclass"},
                                    {"resolve", "literal"}}));
    case Command::sweep_k:
      return Config(detail::merged({{"noise", "0"},
                                    {"noise_target", "all"},
                                    {"k", "1,2,5,10,20,50,100,200,500,1000"},
                                    {"A", "0.5,1,2"},
                                    {"caps", "1,2,5,10,20,50,100,200,500,1000"},
                                    {"mode", "multiclass"},
                                    {"resolve", "none"}}));
    case Command::rates:
      return Config({{"dist", "step"},
                     {"points", "0.25"},
                     {"n_values", detail::pointwise_schedule()},
                     {"replicas", "200"},
                     {"risk_n", "500,2000,8000"},
                     {"risk_replicas", "20"},
                     {"risk_queries", "1000"},
                     {"rule", "theory"},
                     {"c1", c1},
                     {"delta", "0.1"},
                     {"d0", "2"},
                     {"A", "1"},
                     {"advantage_grid", "10000"},
                     {"seed", "1"},
                     {"workers", "1"}});
    case Command::validate:
      return Config({{"validator", "ucecm"},
                     {"dist", "noisy_step:0.2"},
                     {"n", "2000"},
                     {"trials", "200"},
                     {"delta", "0.1"},
                     {"m", "20"},
                     {"d0", "2"},
                     {"c1", c1},
                     {"c_o", co},
                     {"bias_log_n", "true"},
                     {"counterexample_n", "10,100,1000,10000"},
                     {"seed", "1"},
                     {"workers", "1"}});
    case Command::predict:
      return Config(detail::merged({{"query", "0.25"},
                                    {"rule", "practical"},
                                    {"c1", c1},
                                    {"delta", "0.1"},
                                    {"d0", "2"},
                                    {"A", "1"},
                                    {"mode", "multiclass"},
                                    {"max_k", "0"},
                                    {"noise", "0"}}));
  }
  throw std::logic_error("default_config: unhandled command");
}

inline Config default_config(Command cmd) {
  auto c = default_config_table(cmd);
  c.mark_runtime("workers");
  return c;
}

// ---------------------------------------------------------------------------
// Data preparation

struct PreparedData {
  LabeledDataset train;
  // Absent in in-sample mode, where the training rows are the queries.
  std::optional<LabeledDataset> test;
  std::optional<SyntheticDistribution> dist;
};

inline std::size_t resolved_workers(const Config& c) {
  const auto w = c.integer("workers");
  return w == 0 ? default_workers() : static_cast<std::size_t>(w);
}

inline bool in_sample_mode(const Config& c) {
  const auto& m = c.str("eval_mode");
  if (m == "in_sample") return true;
  if (m == "split") return false;
  throw ConfigError("eval_mode must be 'split' or 'in_sample', got '" + m + "'");
}

inline PreparedData prepare_data(const Config& c) {
  const std::string& spec = c.str("data");
  const std::uint64_t seed = c.integer("seed");
  const bool in_sample = in_sample_mode(c);

  if (spec.rfind("csv:", 0) == 0 || spec.rfind("bin:", 0) == 0) {
    auto ds = spec[0] == 'c' ? load_csv(spec.substr(4), c.str("label_column")) : load_binary(spec.substr(4));
    if (in_sample) return {std::move(ds), std::nullopt, std::nullopt};
    auto parts = split(ds, c.real("test_fraction"), derive_seed(seed, {0x5917u}));
    if (parts.train.size() == 0 || parts.test.size() == 0) throw ConfigError("test_fraction leaves an empty side");
    return {std::move(parts.train), std::move(parts.test), std::nullopt};
  }

  auto dist = parse_distribution_spec(spec);
  const std::size_t n_train = c.integer("n_train");
  const std::size_t n_test = in_sample ? 0 : c.integer("n_test");
  const std::size_t dim = c.integer("dim");
  if (n_train == 0) throw ConfigError("n_train must be positive");
  if (!in_sample && n_test == 0) throw ConfigError("n_test must be positive");
  if (dim == 0) throw ConfigError("dim must be positive");
  const auto drawn_seed = derive_seed(seed, {0xDA7Au});
  auto all = dim == 1 ? sample(dist, n_train + n_test, drawn_seed)
                      : sample_product(dist, n_train + n_test, dim, drawn_seed);
  std::vector<std::size_t> train_rows(n_train), test_rows(n_test);
  for (std::size_t i = 0; i < n_train; ++i) train_rows[i] = i;
  for (std::size_t i = 0; i < n_test; ++i) test_rows[i] = n_train + i;
  PreparedData out{all.subset(train_rows), std::nullopt, std::move(dist)};
  if (!in_sample) out.test = all.subset(test_rows);
  return out;
}

// Training set and queries after label noise at rate p.
struct NoisyData {
  LabeledDataset train;
  LabeledDataset queries;
  bool exclude_self = false;
  // Bayes labels of the queries, in the training alphabet, when known.
  std::optional<std::vector<LabelId>> bayes;
};

inline NoisyData apply_noise(const PreparedData& data, double p, const std::string& target, std::uint64_t seed) {
  if (target != "all" && target != "train") throw ConfigError("noise_target must be 'all' or 'train'");
  const auto bits = std::bit_cast<std::uint64_t>(p);
  auto train = inject_label_noise(data.train, {p, derive_seed(seed, {0x401u, bits})});
  std::optional<LabeledDataset> queries;
  bool exclude_self = !data.test.has_value();
  if (exclude_self)
    queries = train;
  else if (target == "all")
    queries = inject_label_noise(*data.test, {p, derive_seed(seed, {0x402u, bits})});
  else
    queries = *data.test;

  std::optional<std::vector<LabelId>> bayes;
  if (data.dist) {
    std::vector<LabelId> b(queries->size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = bayes_label(*data.dist, queries->row(i)[0]);
    bayes = std::move(b);
  }
  return {std::move(train), std::move(*queries), exclude_self, std::move(bayes)};
}

// ---------------------------------------------------------------------------
// Scoring many methods on one set of neighbor profiles

struct KnnMethod {
  std::size_t k;
};

struct AknnMethod {
  ConfidenceRule rule;
  RuleMode mode = RuleMode::multiclass;
  std::optional<std::size_t> max_k;
  std::optional<ResolutionScore> resolve;
};

using Method = std::variant<KnnMethod, AknnMethod>;

struct MethodScore {
  EvalReport report;
  // Fraction of single-label predictions equal to the Bayes label.
  std::optional<double> bayes_agreement;
  // Among queries with any (single or multilabel) prediction, the fraction
  // whose prediction contains the true label.
  std::optional<double> set_accuracy;
  std::optional<double> mean_k;
};

struct ScoringOptions {
  bool exclude_self = false;
  Metric metric = Metric::euclidean;
  std::size_t workers = 1;
};

inline std::vector<MethodScore> score_methods(const LabeledDataset& train, const LabeledDataset& queries,
                                              const std::vector<Method>& methods, const ScoringOptions& opts = {},
                                              const std::vector<LabelId>* bayes = nullptr) {
  if (methods.empty()) throw std::invalid_argument("score_methods: no methods");
  if (train.dim() != queries.dim()) throw DataError("query dimension does not match training data");
  if (opts.exclude_self && queries.size() != train.size())
    throw std::invalid_argument("score_methods: exclude_self requires queries to be the training rows");
  if (bayes && bayes->size() != queries.size()) throw std::invalid_argument("score_methods: bayes size mismatch");
  const std::size_t n_ref = opts.exclude_self ? train.size() - 1 : train.size();

  std::optional<std::size_t> cap = std::size_t{0};
  for (const auto& m : methods) {
    if (const auto* knn = std::get_if<KnnMethod>(&m)) {
      if (knn->k == 0 || knn->k > n_ref)
        throw ConfigError("k=" + std::to_string(knn->k) + " must lie in [1, " + std::to_string(n_ref) + "]");
      if (cap) cap = std::max(*cap, knn->k);
    } else {
      const auto& a = std::get<AknnMethod>(m);
      validate(a.rule);
      if (a.max_k && *a.max_k == 0) throw ConfigError("neighborhood cap must be positive");
      if (!a.max_k)
        cap.reset();
      else if (cap)
        cap = std::max(*cap, *a.max_k);
    }
  }

  const auto truth = map_labels(train, queries);
  const NeighborIndex index(train, opts.metric);
  const std::size_t M = methods.size();
  std::vector<QueryOutcome> outcomes(queries.size() * M);

  parallel_for(queries.size(), opts.workers, [&](std::size_t i) {
    ProfileOptions po;
    po.max_k = cap;
    if (opts.exclude_self) po.exclude_row = i;
    const auto profile = index.profile(queries.row(i), po);
    const ProfileView full = profile.view();
    for (std::size_t m = 0; m < M; ++m) {
      if (const auto* knn = std::get_if<KnnMethod>(&methods[m])) {
        Prediction p;
        p.labels = {knn_predict(full, knn->k)};
        p.chosen_k = full.total(group_for_k(full, knn->k));
        outcomes[i * M + m] = score_prediction(p, full, truth[i], std::nullopt);
      } else {
        const auto& a = std::get<AknnMethod>(methods[m]);
        const ProfileView view = a.max_k ? full.truncated(*a.max_k) : full;
        outcomes[i * M + m] = score_prediction(predict(view, a.rule, a.mode), view, truth[i], a.resolve);
      }
    }
  });

  std::vector<MethodScore> scores(M);
  for (std::size_t m = 0; m < M; ++m) {
    auto& s = scores[m];
    s.report.per_query.reserve(queries.size());
    std::size_t agree = 0, set_hits = 0, set_total = 0, k_count = 0;
    double k_sum = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const auto& q = outcomes[i * M + m];
      accumulate(s.report, q);
      if (bayes && q.predicted && *q.predicted == (*bayes)[i]) ++agree;
      if (q.predicted || q.multilabel) {
        ++set_total;
        if ((q.correct && *q.correct) || q.multilabel_contains_truth) ++set_hits;
      }
      if (q.chosen_k) {
        ++k_count;
        k_sum += static_cast<double>(*q.chosen_k);
      }
    }
    if (bayes && s.report.n_predicted > 0)
      s.bayes_agreement = static_cast<double>(agree) / static_cast<double>(s.report.n_predicted);
    if (set_total > 0) s.set_accuracy = static_cast<double>(set_hits) / static_cast<double>(set_total);
    if (k_count > 0) s.mean_k = k_sum / static_cast<double>(k_count);
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Config helpers

inline RuleMode parse_mode(const std::string& s) {
  if (s == "binary") return RuleMode::binary;
  if (s == "multiclass") return RuleMode::multiclass;
  throw ConfigError("mode must be 'binary' or 'multiclass', got '" + s + "'");
}

inline std::optional<ResolutionScore> parse_resolve_option(const std::string& s) {
  if (s == "none") return std::nullopt;
  try {
    return parse_resolution(s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

inline ConfidenceRule rule_from_config(const Config& c) {
  const auto& r = c.str("rule");
  ConfidenceRule rule;
  if (r == "theory")
    rule = TheoryDefault{c.real("c1"), c.real("delta")};
  else if (r == "theory_vc")
    rule = TheoryVC{c.real("c1"), c.real("delta"), static_cast<unsigned>(c.integer("d0"))};
  else if (r == "practical")
    rule = Practical{c.real("A")};
  else
    throw ConfigError("rule must be 'theory', 'theory_vc' or 'practical', got '" + r + "'");
  try {
    validate(rule);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return rule;
}

template <class T>
std::vector<T> sorted_unique(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline std::vector<double> nonnegative_reals(const Config& c, const std::string& key) {
  auto v = sorted_unique(c.reals(key));
  if (v.front() < 0.0) throw ConfigError("config key '" + key + "' must be nonnegative");
  return v;
}

inline std::vector<std::size_t> positive_sizes(const Config& c, const std::string& key) {
  std::vector<std::size_t> out;
  for (auto v : sorted_unique(c.integers(key))) {
    if (v == 0) throw ConfigError("config key '" + key + "' must hold positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

inline std::vector<double> noise_levels(const Config& c) {
  auto v = nonnegative_reals(c, "noise");
  if (v.back() > 1.0) throw ConfigError("noise levels must lie in [0,1]");
  return v;
}

// ---------------------------------------------------------------------------
// sweep-noise

inline CommandOutput cmd_sweep_noise(const Config& c) {
  const auto hash = c.hash();
  const auto noise = noise_levels(c);
  const auto ks = positive_sizes(c, "k");
  const auto As = nonnegative_reals(c, "A");
  const auto mode = parse_mode(c.str("mode"));
  const auto resolve = parse_resolve_option(c.str("resolve"));
  const auto data = prepare_data(c);
  ScoringOptions so{false, parse_metric(c.str("metric")), resolved_workers(c)};

  std::vector<Method> methods;
  for (double a : As) methods.push_back(AknnMethod{Practical{a}, mode, std::nullopt, resolve});
  for (auto k : ks) methods.push_back(KnnMethod{k});

  Table t{"sweep_noise",
          {"config_hash", "noise", "method", "param", "accuracy", "coverage", "multilabel_rate", "set_accuracy",
           "bayes_agreement", "mean_k", "n_queries"},
          {}};
  LineChart chart("Accuracy against k under label noise", "k", "accuracy");
  for (double p : noise) {
    const auto nd = apply_noise(data, p, c.str("noise_target"), c.integer("seed"));
    so.exclude_self = nd.exclude_self;
    const auto scores = score_methods(nd.train, nd.queries, methods, so, nd.bayes ? &*nd.bayes : nullptr);
    LineChart::Series knn_series{"k-NN p=" + detail::fmt(p), {}, false};
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const auto& s = scores[m];
      const bool is_knn = std::holds_alternative<KnnMethod>(methods[m]);
      const std::string param = is_knn ? std::to_string(std::get<KnnMethod>(methods[m]).k)
                                       : detail::fmt(std::get<Practical>(std::get<AknnMethod>(methods[m]).rule).A);
      t.rows.push_back({hash, detail::fmt(p), is_knn ? "knn" : "aknn", param, detail::fmt(s.report.accuracy_on_predicted()),
                        detail::fmt(s.report.coverage()), detail::fmt(s.report.multilabel_rate()),
                        detail::fmt(s.set_accuracy), detail::fmt(s.bayes_agreement), detail::fmt(s.mean_k),
                        std::to_string(s.report.n_queries)});
      if (is_knn && s.report.accuracy_on_predicted())
        knn_series.points.emplace_back(static_cast<double>(std::get<KnnMethod>(methods[m]).k),
                                       *s.report.accuracy_on_predicted());
    }
    const double k_lo = static_cast<double>(ks.front()), k_hi = static_cast<double>(ks.back());
    for (std::size_t m = 0; m < As.size(); ++m)
      if (auto acc = scores[m].report.accuracy_on_predicted())
        chart.add({"AKNN A=" + detail::fmt(As[m]) + " p=" + detail::fmt(p), {{k_lo, *acc}, {k_hi, *acc}}, true});
    chart.add(std::move(knn_series));
  }
  CommandOutput out;
  out.console = "sweep-noise: " + std::to_string(t.rows.size()) + " rows, config " + hash + "\n";
  out.tables.push_back(std::move(t));
  out.files.push_back({"sweep_noise.svg", chart.render()});
  return out;
}

// ---------------------------------------------------------------------------
// sweep-k

inline CommandOutput cmd_sweep_k(const Config& c) {
  const auto hash = c.hash();
  const auto noise = noise_levels(c);
  if (noise.size() != 1) throw ConfigError("sweep-k takes a single noise level");
  const auto ks = positive_sizes(c, "k");
  const auto As = nonnegative_reals(c, "A");
  const auto caps = positive_sizes(c, "caps");
  const auto mode = parse_mode(c.str("mode"));
  const auto resolve = parse_resolve_option(c.str("resolve"));
  const auto data = prepare_data(c);
  const auto nd = apply_noise(data, noise.front(), c.str("noise_target"), c.integer("seed"));
  const ScoringOptions so{nd.exclude_self, parse_metric(c.str("metric")), resolved_workers(c)};

  std::vector<Method> methods;
  for (double a : As)
    for (auto cap : caps) methods.push_back(AknnMethod{Practical{a}, mode, cap, resolve});
  for (auto k : ks) methods.push_back(KnnMethod{k});
  const auto scores = score_methods(nd.train, nd.queries, methods, so, nd.bayes ? &*nd.bayes : nullptr);

  Table t{"sweep_k",
          {"config_hash", "method", "A", "cap", "accuracy", "coverage", "multilabel_rate", "set_accuracy",
           "bayes_agreement", "mean_k", "n_queries"},
          {}};
  LineChart acc_chart("Accuracy on predicted points against neighborhood cap", "k / cap", "accuracy");
  LineChart cov_chart("Coverage against neighborhood cap", "k / cap", "coverage");
  acc_chart.log_x();
  cov_chart.log_x().y_range(0.0, 1.0);
  std::size_t m = 0;
  for (double a : As) {
    LineChart::Series acc{"AKNN A=" + detail::fmt(a), {}, false}, cov = acc;
    for (auto cap : caps) {
      const auto& s = scores[m++];
      t.rows.push_back({hash, "aknn", detail::fmt(a), std::to_string(cap),
                        detail::fmt(s.report.accuracy_on_predicted()), detail::fmt(s.report.coverage()),
                        detail::fmt(s.report.multilabel_rate()), detail::fmt(s.set_accuracy),
                        detail::fmt(s.bayes_agreement), detail::fmt(s.mean_k), std::to_string(s.report.n_queries)});
      if (auto v = s.report.accuracy_on_predicted()) acc.points.emplace_back(static_cast<double>(cap), *v);
      cov.points.emplace_back(static_cast<double>(cap), s.report.coverage());
    }
    acc_chart.add(std::move(acc));
    cov_chart.add(std::move(cov));
  }
  LineChart::Series knn{"k-NN", {}, true};
  for (auto k : ks) {
    const auto& s = scores[m++];
    t.rows.push_back({hash, "knn", "NA", std::to_string(k), detail::fmt(s.report.accuracy_on_predicted()),
                      detail::fmt(s.report.coverage()), detail::fmt(s.report.multilabel_rate()),
                      detail::fmt(s.set_accuracy), detail::fmt(s.bayes_agreement), detail::fmt(s.mean_k),
                      std::to_string(s.report.n_queries)});
    knn.points.emplace_back(static_cast<double>(k), *s.report.accuracy_on_predicted());
  }
  acc_chart.add(std::move(knn));

  CommandOutput out;
  out.console = "sweep-k: " + std::to_string(t.rows.size()) + " rows, config " + hash + "\n";
  out.tables.push_back(std::move(t));
  out.files.push_back({"sweep_k_accuracy.svg", acc_chart.render()});
  out.files.push_back({"sweep_k_coverage.svg", cov_chart.render()});
  return out;
}

// ---------------------------------------------------------------------------
// rates

struct PointwiseRate {
  double x;
  std::size_t n;
  std::size_t replicas;
  std::size_t errors = 0;
  std::size_t abstentions = 0;
  std::optional<double> mean_k;

  double error_rate() const { return static_cast<double>(errors) / static_cast<double>(replicas); }
  double abstain_rate() const { return static_cast<double>(abstentions) / static_cast<double>(replicas); }
};

// Monte-Carlo estimate of Pr[g_n(x) != g*(x)] for every x and n; an
// abstention counts as an error. Replica r at size n uses one training
// sample shared by all x.
inline std::vector<PointwiseRate> pointwise_rates(const SyntheticDistribution& dist, const std::vector<double>& xs,
                                                  const std::vector<std::size_t>& ns, std::size_t replicas,
                                                  const ConfidenceRule& rule, std::uint64_t seed,
                                                  std::size_t workers = 1) {
  if (replicas == 0) throw std::invalid_argument("pointwise_rates: replicas must be positive");
  validate(rule);
  std::vector<PointwiseRate> out;
  for (double x : xs)
    for (auto n : ns) out.push_back({x, n, replicas, 0, 0, std::nullopt});
  for (std::size_t ni = 0; ni < ns.size(); ++ni) {
    const std::size_t n = ns[ni];
    // wrong[r * |xs| + j], chosen[r * |xs| + j] (0 when abstained)
    std::vector<char> wrong(replicas * xs.size()), abstained(replicas * xs.size());
    std::vector<std::size_t> chosen(replicas * xs.size());
    parallel_for(replicas, workers, [&](std::size_t r) {
      const auto train = sample(dist, n, derive_seed(seed, {0x9A7Eu, n, r}));
      const NeighborIndex index(train);
      for (std::size_t j = 0; j < xs.size(); ++j) {
        const double q[1] = {xs[j]};
        const auto pred = predict_progressive(index, q, rule, RuleMode::binary);
        const std::size_t slot = r * xs.size() + j;
        abstained[slot] = pred.abstained();
        wrong[slot] = pred.abstained() || pred.labels.front() != bayes_label(dist, xs[j]);
        chosen[slot] = pred.chosen_k.value_or(0);
      }
    });
    for (std::size_t j = 0; j < xs.size(); ++j) {
      auto& row = out[j * ns.size() + ni];
      double k_sum = 0.0;
      std::size_t k_count = 0;
      for (std::size_t r = 0; r < replicas; ++r) {
        const std::size_t slot = r * xs.size() + j;
        row.errors += wrong[slot];
        row.abstentions += abstained[slot];
        if (chosen[slot]) {
          k_sum += static_cast<double>(chosen[slot]);
          ++k_count;
        }
      }
      if (k_count) row.mean_k = k_sum / static_cast<double>(k_count);
    }
  }
  return out;
}

struct RiskEstimate {
  std::size_t n;
  std::vector<double> per_replica;
  double mean_abstain_rate = 0.0;

  double mean() const {
    double s = 0.0;
    for (double v : per_replica) s += v;
    return s / static_cast<double>(per_replica.size());
  }
  double sd() const {
    if (per_replica.size() < 2) return 0.0;
    const double mu = mean();
    double s = 0.0;
    for (double v : per_replica) s += (v - mu) * (v - mu);
    return std::sqrt(s / static_cast<double>(per_replica.size() - 1));
  }
  double standard_error() const { return sd() / std::sqrt(static_cast<double>(per_replica.size())); }
};

// Risk of the binary rule, integrated over the marginal by the midpoint
// quantile grid x_j = F^{-1}((j + 1/2) / M) with the exact conditional error
// (1 - s eta(x)) / 2 of predicting s, and 1 for an abstention.
inline std::vector<RiskEstimate> risk_trajectory(const SyntheticDistribution& dist, const std::vector<std::size_t>& ns,
                                                 std::size_t replicas, std::size_t queries,
                                                 const ConfidenceRule& rule, std::uint64_t seed,
                                                 std::size_t workers = 1) {
  if (replicas == 0 || queries == 0) throw std::invalid_argument("risk_trajectory: replicas and queries must be positive");
  validate(rule);
  std::vector<double> xs(queries);
  for (std::size_t j = 0; j < queries; ++j)
    xs[j] = dist.quantile((static_cast<double>(j) + 0.5) / static_cast<double>(queries));
  std::vector<RiskEstimate> out;
  for (auto n : ns) {
    std::vector<double> risk(replicas), abstain(replicas);
    parallel_for(replicas, workers, [&](std::size_t r) {
      const auto train = sample(dist, n, derive_seed(seed, {0x215Cu, n, r}));
      const NeighborIndex index(train);
      double err = 0.0;
      std::size_t abst = 0;
      for (double x : xs) {
        const double q[1] = {x};
        const auto pred = predict_progressive(index, q, rule, RuleMode::binary);
        if (pred.abstained()) {
          err += 1.0;
          ++abst;
        } else {
          const double s = pred.labels.front() == 0 ? 1.0 : -1.0;
          err += 0.5 * (1.0 - s * dist.eta_at(x));
        }
      }
      risk[r] = err / static_cast<double>(xs.size());
      abstain[r] = static_cast<double>(abst) / static_cast<double>(xs.size());
    });
    double a = 0.0;
    for (double v : abstain) a += v;
    out.push_back({n, std::move(risk), a / static_cast<double>(replicas)});
  }
  return out;
}

inline CommandOutput cmd_rates(const Config& c) {
  const auto hash = c.hash();
  const auto dist = parse_distribution_spec(c.str("dist"));
  const auto rule = rule_from_config(c);
  const auto xs = sorted_unique(c.reals("points"));
  for (double x : xs)
    if (x < 0.0 || x > 1.0) throw ConfigError("rate points must lie in [0,1]");
  const auto ns = positive_sizes(c, "n_values");
  const auto risk_ns = positive_sizes(c, "risk_n");
  const std::size_t replicas = c.integer("replicas");
  const std::size_t risk_replicas = c.integer("risk_replicas");
  const std::size_t risk_queries = c.integer("risk_queries");
  const std::size_t grid = c.integer("advantage_grid");
  if (replicas == 0 || risk_replicas == 0 || risk_queries == 0) throw ConfigError("replica and query counts must be positive");
  if (grid < 100) throw ConfigError("advantage_grid must be at least 100");
  const std::uint64_t seed = c.integer("seed");
  const std::size_t workers = resolved_workers(c);

  CommandOutput out;
  Table pw{"rates_pointwise",
           {"config_hash", "x", "advantage", "n", "replicas", "error_rate", "abstain_rate", "mean_k"},
           {}};
  LineChart pchart("Pointwise error probability", "n", "Pr[g_n(x) != g*(x)]");
  pchart.log_x().y_range(0.0, 1.0);
  const auto rates = pointwise_rates(dist, xs, ns, replicas, rule, seed, workers);
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const double adv = advantage(dist, xs[j], grid).value;
    LineChart::Series s{"x=" + detail::fmt(xs[j]) + " adv=" + detail::fmt(adv), {}, false};
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const auto& r = rates[j * ns.size() + i];
      pw.rows.push_back({hash, detail::fmt(r.x), detail::fmt(adv), std::to_string(r.n), std::to_string(r.replicas),
                         detail::fmt(r.error_rate()), detail::fmt(r.abstain_rate()), detail::fmt(r.mean_k)});
      s.points.emplace_back(static_cast<double>(r.n), r.error_rate());
    }
    pchart.add(std::move(s));
  }

  const double r_star = bayes_risk(dist);
  Table rk{"rates_risk",
           {"config_hash", "n", "replicas", "queries", "risk", "risk_sd", "risk_se", "bayes_risk", "abstain_rate"},
           {}};
  LineChart rchart("Risk trajectory", "n", "risk");
  rchart.log_x();
  LineChart::Series rs{"R_n", {}, false}, bs{"R*", {}, true};
  for (const auto& e : risk_trajectory(dist, risk_ns, risk_replicas, risk_queries, rule, seed, workers)) {
    rk.rows.push_back({hash, std::to_string(e.n), std::to_string(e.per_replica.size()), std::to_string(risk_queries),
                       detail::fmt(e.mean()), detail::fmt(e.sd()), detail::fmt(e.standard_error()),
                       detail::fmt(r_star), detail::fmt(e.mean_abstain_rate)});
    rs.points.emplace_back(static_cast<double>(e.n), e.mean());
    bs.points.emplace_back(static_cast<double>(e.n), r_star);
  }
  rchart.add(std::move(rs)).add(std::move(bs));

  out.console = "rates: " + describe(rule) + ", config " + hash + "\n";
  out.tables.push_back(std::move(pw));
  out.tables.push_back(std::move(rk));
  out.files.push_back({"rates_pointwise.svg", pchart.render()});
  out.files.push_back({"rates_risk.svg", rchart.render()});
  return out;
}

// ---------------------------------------------------------------------------
// validate

inline CommandOutput cmd_validate(const Config& c) {
  const auto hash = c.hash();
  const auto& which = c.str("validator");
  static const std::vector<std::string> known{"ucecm", "bias_lemma", "mass_lemma", "counterexample", "all"};
  if (std::find(known.begin(), known.end(), which) == known.end())
    throw ConfigError("validator must be one of ucecm, bias_lemma, mass_lemma, counterexample, all");
  const bool all = which == "all";
  const std::size_t n = c.integer("n"), trials = c.integer("trials"), m = c.integer("m");
  const double delta = c.real("delta");
  ValidatorOptions vo{c.integer("seed"), resolved_workers(c), static_cast<unsigned>(c.integer("d0"))};
  if (vo.d0 == 0) throw ConfigError("d0 must be positive");

  CommandOutput out;
  auto emit = [&](const std::string& name, ValidationReport r) {
    auto j = r.to_json();
    j["config_hash"] = hash;
    out.files.push_back({name + ".json", j.dump(2) + "\n"});
    out.console += name + ": " + std::to_string(r.violations) + "/" + std::to_string(r.trials) +
                   " violations, failure rate " + detail::fmt(r.empirical_failure_rate()) + " (bound " +
                   detail::fmt(r.bound_delta) + ")\n";
  };

  if (all || which != "counterexample") {
    const auto dist = parse_distribution_spec(c.str("dist"));
    if (all || which == "ucecm") emit("ucecm", validate_ucecm(dist, n, trials, delta, m, vo));
    if (all || which == "bias_lemma") {
      BiasLemmaOptions bo;
      static_cast<ValidatorOptions&>(bo) = vo;
      bo.include_log_n = c.flag("bias_log_n");
      emit("bias_lemma", validate_bias_lemma(dist, n, trials, delta, c.real("c1"), m, bo));
    }
    if (all || which == "mass_lemma") emit("mass_lemma", validate_mass_lemma(dist, n, trials, delta, c.real("c_o"), m, vo));
  }
  if (all || which == "counterexample") {
    Table t{"counterexample", {"config_hash", "n", "trials", "median", "min", "max", "mean"}, {}};
    LineChart chart("Counterexample statistic", "n", "median T");
    chart.log_x();
    LineChart::Series s{"median T", {}, false};
    for (auto cn : positive_sizes(c, "counterexample_n")) {
      const auto ts = counterexample_statistic(cn, trials, vo.seed, vo.workers);
      double sum = 0.0;
      for (double v : ts) sum += v;
      const double med = median(ts);
      t.rows.push_back({hash, std::to_string(cn), std::to_string(trials), detail::fmt(med),
                        detail::fmt(*std::min_element(ts.begin(), ts.end())),
                        detail::fmt(*std::max_element(ts.begin(), ts.end())),
                        detail::fmt(sum / static_cast<double>(ts.size()))});
      s.points.emplace_back(static_cast<double>(cn), med);
      out.console += "counterexample n=" + std::to_string(cn) + ": median T " + detail::fmt(med) + "\n";
    }
    chart.add(std::move(s));
    out.tables.push_back(std::move(t));
    out.files.push_back({"counterexample.svg", chart.render()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// predict

inline CommandOutput cmd_predict(const Config& c) {
  const auto hash = c.hash();
  const auto data = prepare_data(c);
  const auto nd = apply_noise(data, c.real("noise"), "train", c.integer("seed"));
  const auto rule = rule_from_config(c);
  const auto mode = parse_mode(c.str("mode"));
  const auto query = c.reals("query");
  if (query.size() != nd.train.dim())
    throw ConfigError("query has " + std::to_string(query.size()) + " coordinates, data has " +
                      std::to_string(nd.train.dim()));
  const NeighborIndex index(nd.train, parse_metric(c.str("metric")));
  const auto profile = index.profile(query);
  ProfileView view = profile.view();
  if (const auto cap = c.integer("max_k")) view = view.truncated(cap);

  const auto& alphabet = nd.train.alphabet();
  const std::size_t L = alphabet.size();
  if (mode == RuleMode::binary && L != 2) throw ConfigError("binary mode needs exactly two labels");
  Table t{"predict_trace", {"config_hash", "k", "radius"}, {}};
  for (const auto& a : alphabet) t.header.push_back("count_" + a);
  for (const auto& a : alphabet) t.header.push_back("eta_" + a);
  t.header.insert(t.header.end(), {"statistic", "threshold", "verdict"});

  const double chance = 1.0 / static_cast<double>(L);
  const Prediction pred = predict(view, rule, mode);
  for (std::size_t g = 0; g < view.groups(); ++g) {
    const std::size_t k = view.total(g);
    const double threshold = delta_threshold(rule, view.n_reference(), k);
    std::vector<std::string> row{hash, std::to_string(k), detail::fmt(view.radius(g))};
    for (std::size_t y = 0; y < L; ++y) row.push_back(std::to_string(view.count(g, y)));
    double stat = -INFINITY;
    for (std::size_t y = 0; y < L; ++y) {
      const double freq = static_cast<double>(view.count(g, y)) / static_cast<double>(k);
      row.push_back(detail::fmt(freq));
      stat = std::max(stat, mode == RuleMode::binary
                                ? std::abs(freq - static_cast<double>(view.count(g, 1 - y)) / static_cast<double>(k))
                                : freq - chance);
    }
    const bool fires = stat > threshold;
    row.insert(row.end(), {detail::fmt(stat), detail::fmt(threshold), fires ? "significant" : "continue"});
    t.rows.push_back(std::move(row));
    if (fires) break;
  }

  std::ostringstream console;
  console << "query:";
  for (double q : query) console << ' ' << detail::fmt(q);
  console << "  rule: " << describe(rule) << "  n=" << nd.train.size() << "\n";
  console << t.to_csv();
  if (pred.abstained()) {
    console << "prediction: ?\n";
  } else {
    console << "prediction:";
    for (auto y : pred.labels) console << ' ' << alphabet[y];
    console << " (k=" << *pred.chosen_k << ")\n";
  }
  CommandOutput out;
  out.console = console.str();
  out.tables.push_back(std::move(t));
  return out;
}

inline CommandOutput run_command(Command cmd, const Config& c) {
  switch (cmd) {
    case Command::sweep_noise:
      return cmd_sweep_noise(c);
    case Command::sweep_k:
      return cmd_sweep_k(c);
    case Command::validate:
      return cmd_validate(c);
    case Command::rates:
      return cmd_rates(c);
    case Command::predict:
      return cmd_predict(c);
  }
  throw std::logic_error("run_command: unhandled command");
}

}  // namespace aknn
