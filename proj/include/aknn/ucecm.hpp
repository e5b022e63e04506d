#pragma once

// Monte-Carlo validators for uniform large-deviation statements over finite
// families of closed intervals in [0,1].
//
// Each validator draws `trials` independent samples of size n from a
// synthetic distribution, checks the claimed inequality exhaustively over
// its interval family using the distribution's closed-form probabilities,
// and counts a trial as a violation when any member of the family fails.
// Trial t always uses the seed derive_seed(seed, {tag, t}), so serial and
// threaded runs report identical counts.

#include <aknn/parallel.hpp>
#include <aknn/random.hpp>
#include <aknn/synthetic.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace aknn {

struct Interval {
  double lo;
  double hi;
};

class IntervalFamily {
 public:
  static constexpr std::size_t kMaxMembers = 1275;  // the m = 50 grid

  explicit IntervalFamily(std::vector<Interval> members) : members_(std::move(members)) {
    if (members_.empty()) throw std::invalid_argument("interval family: no members");
    if (members_.size() > kMaxMembers)
      throw std::invalid_argument("interval family: too large for exhaustive checking");
    for (const auto& i : members_)
      if (!(i.lo <= i.hi) || i.lo < 0.0 || i.hi > 1.0)
        throw std::invalid_argument("interval family: members must be intervals inside [0,1]");
  }

  // All [a, b] with a < b on the grid {0, 1/m, ..., 1}; m(m+1)/2 members.
  static IntervalFamily grid(std::size_t m) {
    if (m < 5 || m > 50) throw std::invalid_argument("interval family: grid resolution m must lie in [5, 50]");
    std::vector<Interval> out;
    for (std::size_t a = 0; a <= m; ++a)
      for (std::size_t b = a + 1; b <= m; ++b)
        out.push_back({static_cast<double>(a) / m, static_cast<double>(b) / m});
    return IntervalFamily(std::move(out));
  }

  std::size_t size() const noexcept { return members_.size(); }
  const std::vector<Interval>& members() const noexcept { return members_; }

 private:
  std::vector<Interval> members_;
};

struct ValidationReport {
  std::string validator;
  std::size_t trials = 0;
  std::size_t violations = 0;
  // Failure probability the statement promises not to exceed.
  double bound_delta = 0.0;
  // Largest (deviation - allowed deviation) seen; positive iff violated.
  double worst_gap = -std::numeric_limits<double>::infinity();
  nlohmann::ordered_json config;

  double empirical_failure_rate() const {
    return trials == 0 ? 0.0 : static_cast<double>(violations) / static_cast<double>(trials);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["validator"] = validator;
    j["config"] = config;
    j["trials"] = trials;
    j["violations"] = violations;
    j["empirical_failure_rate"] = empirical_failure_rate();
    j["bound_delta"] = bound_delta;
    if (std::isfinite(worst_gap))
      j["worst_gap"] = worst_gap;
    else
      j["worst_gap"] = nullptr;
    return j;
  }
};

namespace detail {

// Endpoint-indexed counting over a sorted sample: count([e_a, e_b]) is
// le[b] - lt[a] for the union of the families' endpoints.
class EndpointIndex {
 public:
  explicit EndpointIndex(std::vector<double> endpoints) : points_(std::move(endpoints)) {
    std::sort(points_.begin(), points_.end());
    points_.erase(std::unique(points_.begin(), points_.end()), points_.end());
  }

  std::size_t index_of(double v) const {
    return static_cast<std::size_t>(std::lower_bound(points_.begin(), points_.end(), v) - points_.begin());
  }
  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<double>& points() const noexcept { return points_; }

 private:
  std::vector<double> points_;
};

struct IndexedInterval {
  std::size_t lo;
  std::size_t hi;
  double mass;
  double eta_mass;
};

inline std::vector<IndexedInterval> index_family(const IntervalFamily& family, const EndpointIndex& ends,
                                                 const SyntheticDistribution& dist) {
  std::vector<IndexedInterval> out;
  for (const auto& i : family.members())
    out.push_back({ends.index_of(i.lo), ends.index_of(i.hi), dist.interval_mass(i.lo, i.hi),
                   dist.interval_eta_mass(i.lo, i.hi)});
  return out;
}

inline EndpointIndex endpoints_of(const IntervalFamily& a, const IntervalFamily* b = nullptr) {
  std::vector<double> pts;
  for (const auto* f : {&a, b}) {
    if (!f) continue;
    for (const auto& i : f->members()) {
      pts.push_back(i.lo);
      pts.push_back(i.hi);
    }
  }
  return EndpointIndex(std::move(pts));
}

// Cumulative counts of a sample at each endpoint: number of points < e and
// <= e, plus the same for points labeled "+1".
struct EndpointCounts {
  std::vector<std::size_t> lt, le, pos_lt, pos_le;

  EndpointCounts(const EndpointIndex& ends, const LabeledDataset& sample) {
    std::vector<std::pair<double, bool>> pts;
    pts.reserve(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) pts.emplace_back(sample.row(i)[0], sample.label(i) == 0);
    std::sort(pts.begin(), pts.end());
    std::vector<std::size_t> pos_prefix(pts.size() + 1, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) pos_prefix[i + 1] = pos_prefix[i] + (pts[i].second ? 1 : 0);
    for (double e : ends.points()) {
      auto a = std::lower_bound(pts.begin(), pts.end(), e, [](const auto& p, double v) { return p.first < v; });
      auto b = std::upper_bound(pts.begin(), pts.end(), e, [](double v, const auto& p) { return v < p.first; });
      lt.push_back(static_cast<std::size_t>(a - pts.begin()));
      le.push_back(static_cast<std::size_t>(b - pts.begin()));
      pos_lt.push_back(pos_prefix[lt.back()]);
      pos_le.push_back(pos_prefix[le.back()]);
    }
  }

  std::size_t count(std::size_t lo, std::size_t hi) const { return lo > hi ? 0 : le[hi] - lt[lo]; }
  std::size_t positives(std::size_t lo, std::size_t hi) const { return lo > hi ? 0 : pos_le[hi] - pos_lt[lo]; }
};

inline void check_common(std::size_t n, std::size_t trials, double delta) {
  if (n < 10) throw std::invalid_argument("validator: n must be >= 10");
  if (trials < 50) throw std::invalid_argument("validator: trials must be >= 50");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("validator: delta must lie in (0,1)");
}

template <typename TrialFn>
ValidationReport run_trials(std::string name, std::size_t trials, std::size_t workers, TrialFn&& trial) {
  std::vector<double> gaps(trials);
  parallel_for(trials, workers, [&](std::size_t t) { gaps[t] = trial(t); });
  ValidationReport r;
  r.validator = std::move(name);
  r.trials = trials;
  for (double g : gaps) {
    if (g > 0.0) ++r.violations;
    r.worst_gap = std::max(r.worst_gap, g);
  }
  return r;
}

}  // namespace detail

struct ValidatorOptions {
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  unsigned d0 = 2;
};

enum class ConditionalBound {
  // sqrt(k_o / #_n(B)), k_o = 1000 (d0 ln(8n) + ln(4/delta))
  ucecm,
  // sqrt(2 ln(1/delta) / #_n(B)); valid for a single fixed pair only
  chernoff,
};

inline double ucecm_k_o(std::size_t n, double delta, unsigned d0 = 2) {
  return 1000.0 * (d0 * std::log(8.0 * static_cast<double>(n)) + std::log(4.0 / delta));
}

// Checks |P(A|B) - P_n(A|B)| <= sqrt(K / #_n(B)) for every A in `family_a`
// and B in `family_b` with P(B) > 0. Pairs with #_n(B) = 0 have an infinite
// allowance and never fail.
inline ValidationReport validate_ucecm(const SyntheticDistribution& dist, std::size_t n, std::size_t trials,
                                       double delta, const IntervalFamily& family_a, const IntervalFamily& family_b,
                                       ConditionalBound bound = ConditionalBound::ucecm,
                                       const ValidatorOptions& opts = {}) {
  detail::check_common(n, trials, delta);
  const auto ends = detail::endpoints_of(family_a, &family_b);
  const auto as = detail::index_family(family_a, ends, dist);
  const auto bs = detail::index_family(family_b, ends, dist);
  const double k_bound = bound == ConditionalBound::ucecm ? ucecm_k_o(n, delta, opts.d0) : 2.0 * std::log(1.0 / delta);

  auto report = detail::run_trials("ucecm", trials, opts.workers, [&](std::size_t t) {
    const auto s = sample(dist, n, derive_seed(opts.seed, {0xCEC3u, t}));
    const detail::EndpointCounts counts(ends, s);
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& b : bs) {
      if (!(b.mass > 0.0)) continue;
      const std::size_t nb = counts.count(b.lo, b.hi);
      if (nb == 0) continue;
      const double allowed = std::sqrt(k_bound / static_cast<double>(nb));
      for (const auto& a : as) {
        const std::size_t lo = std::max(a.lo, b.lo);
        const std::size_t hi = std::min(a.hi, b.hi);
        const double p_ab = lo > hi ? 0.0 : dist.interval_mass(ends.points()[lo], ends.points()[hi]);
        const double truth = p_ab / b.mass;
        const double empirical = static_cast<double>(counts.count(lo, hi)) / static_cast<double>(nb);
        worst = std::max(worst, std::abs(truth - empirical) - allowed);
      }
    }
    return worst;
  });
  report.bound_delta = delta;
  report.config = {{"n", n},
                   {"trials", trials},
                   {"delta", delta},
                   {"d0", opts.d0},
                   {"seed", opts.seed},
                   {"family_a_size", family_a.size()},
                   {"family_b_size", family_b.size()},
                   {"bound", bound == ConditionalBound::ucecm ? "ucecm" : "chernoff"},
                   {"k_o", k_bound},
                   {"distribution", dist.to_text()}};
  return report;
}

inline ValidationReport validate_ucecm(const SyntheticDistribution& dist, std::size_t n, std::size_t trials,
                                       double delta, std::size_t m, const ValidatorOptions& opts = {}) {
  const auto family = IntervalFamily::grid(m);
  auto r = validate_ucecm(dist, n, trials, delta, family, family, ConditionalBound::ucecm, opts);
  r.config["m"] = m;
  return r;
}

struct BiasLemmaOptions : ValidatorOptions {
  // false drops the d0 ln n term from the confidence radius.
  bool include_log_n = true;
};

// Checks |eta_n(C) - eta(C)| <= c1 sqrt((d0 ln n + ln(1/delta)) / #_n(C)) for
// every C with #_n(C) > 0. The promised failure probability is delta^2 / 2.
inline ValidationReport validate_bias_lemma(const SyntheticDistribution& dist, std::size_t n, std::size_t trials,
                                            double delta, double c1, const IntervalFamily& family,
                                            const BiasLemmaOptions& opts = {}) {
  detail::check_common(n, trials, delta);
  if (!(c1 > 0.0)) throw std::invalid_argument("validate_bias_lemma: c1 must be positive");
  const auto ends = detail::endpoints_of(family);
  const auto cs = detail::index_family(family, ends, dist);
  const double log_term = (opts.include_log_n ? opts.d0 * std::log(static_cast<double>(n)) : 0.0) + std::log(1.0 / delta);

  auto report = detail::run_trials("bias_lemma", trials, opts.workers, [&](std::size_t t) {
    const auto s = sample(dist, n, derive_seed(opts.seed, {0xB1A5u, t}));
    const detail::EndpointCounts counts(ends, s);
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& c : cs) {
      const std::size_t k = counts.count(c.lo, c.hi);
      if (k == 0 || !(c.mass > 0.0)) continue;
      const double kd = static_cast<double>(k);
      const double empirical = (2.0 * static_cast<double>(counts.positives(c.lo, c.hi)) - kd) / kd;
      const double truth = c.eta_mass / c.mass;
      worst = std::max(worst, std::abs(empirical - truth) - c1 * std::sqrt(log_term / kd));
    }
    return worst;
  });
  report.bound_delta = 0.5 * delta * delta;
  report.config = {{"n", n},
                   {"trials", trials},
                   {"delta", delta},
                   {"c1", c1},
                   {"d0", opts.d0},
                   {"include_log_n", opts.include_log_n},
                   {"seed", opts.seed},
                   {"family_size", family.size()},
                   {"distribution", dist.to_text()}};
  return report;
}

inline ValidationReport validate_bias_lemma(const SyntheticDistribution& dist, std::size_t n, std::size_t trials,
                                            double delta, double c1, std::size_t m,
                                            const BiasLemmaOptions& opts = {}) {
  auto r = validate_bias_lemma(dist, n, trials, delta, c1, IntervalFamily::grid(m), opts);
  r.config["m"] = m;
  return r;
}

// Largest k in [1, n] with mu(B) >= k/n + (c_o/n) max(k, d0 ln(n/delta)); 0 if
// none. The right-hand side increases in k, so the set of such k is a prefix.
inline std::size_t mass_lemma_k_max(double mass, std::size_t n, double delta, double c_o, unsigned d0 = 2) {
  const double nd = static_cast<double>(n);
  const double floor_term = d0 * std::log(nd / delta);
  auto holds = [&](std::size_t k) {
    const double kd = static_cast<double>(k);
    return mass >= kd / nd + (c_o / nd) * std::max(kd, floor_term);
  };
  if (!holds(1)) return 0;
  std::size_t lo = 1, hi = n;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo + 1) / 2;
    if (holds(mid))
      lo = mid;
    else
      hi = mid - 1;
  }
  return lo;
}

// Checks the implication
//   mu(B) >= k/n + (c_o/n) max(k, d0 ln(n/delta))  ==>  mu_n(B) >= k/n
// for every B in the family and every k in [1, n].
inline ValidationReport validate_mass_lemma(const SyntheticDistribution& dist, std::size_t n, std::size_t trials,
                                            double delta, double c_o, const IntervalFamily& family,
                                            const ValidatorOptions& opts = {}) {
  detail::check_common(n, trials, delta);
  if (!(c_o >= 0.0)) throw std::invalid_argument("validate_mass_lemma: c_o must be >= 0");
  const auto ends = detail::endpoints_of(family);
  const auto bs = detail::index_family(family, ends, dist);
  std::vector<std::size_t> k_max;
  for (const auto& b : bs) k_max.push_back(mass_lemma_k_max(b.mass, n, delta, c_o, opts.d0));

  auto report = detail::run_trials("mass_lemma", trials, opts.workers, [&](std::size_t t) {
    const auto s = sample(dist, n, derive_seed(opts.seed, {0x3A55u, t}));
    const detail::EndpointCounts counts(ends, s);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < bs.size(); ++i) {
      if (k_max[i] == 0) continue;
      const double shortfall = (static_cast<double>(k_max[i]) - static_cast<double>(counts.count(bs[i].lo, bs[i].hi))) /
                               static_cast<double>(n);
      worst = std::max(worst, shortfall);
    }
    return worst;
  });
  report.bound_delta = 0.5 * delta * delta;
  report.config = {{"n", n},       {"trials", trials},        {"delta", delta},
                   {"c_o", c_o},   {"d0", opts.d0},           {"seed", opts.seed},
                   {"family_size", family.size()}, {"distribution", dist.to_text()}};
  return report;
}

inline ValidationReport validate_mass_lemma(const SyntheticDistribution& dist, std::size_t n, std::size_t trials,
                                            double delta, double c_o, std::size_t m,
                                            const ValidatorOptions& opts = {}) {
  auto r = validate_mass_lemma(dist, n, trials, delta, c_o, IntervalFamily::grid(m), opts);
  r.config["m"] = m;
  return r;
}

// Draw n atoms uniformly from {0..n-1}, each with an independent fair color.
// T = max over atoms j that were hit and always showed the same color of
// sqrt(#_n(j)) * |P_n(+|j) - 1/2| = sqrt(#_n(j)) / 2; 0 if no such atom.
inline std::vector<double> counterexample_statistic(std::size_t n, std::size_t trials, std::uint64_t seed,
                                                    std::size_t workers = 1) {
  if (n == 0 || trials == 0) throw std::invalid_argument("counterexample_statistic: n and trials must be positive");
  std::vector<double> out(trials);
  parallel_for(trials, workers, [&](std::size_t t) {
    Rng rng(derive_seed(seed, {0xC0DE7u, n, t}));
    std::vector<std::uint32_t> hits(n, 0), plus(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = rng.below(n);
      ++hits[j];
      if (rng.bernoulli(0.5)) ++plus[j];
    }
    std::uint32_t best = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (hits[j] > 0 && (plus[j] == 0 || plus[j] == hits[j])) best = std::max(best, hits[j]);
    out[t] = 0.5 * std::sqrt(static_cast<double>(best));
  });
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace aknn
