#pragma once

// Piecewise-constant distributions on [0,1] with closed-form oracles.
//
// A distribution is a partition of [0,1] into pieces [b_i, b_{i+1}) (the last
// piece is closed) carrying a constant density and a constant bias
// eta = E[Y | X = x] in [-1, 1]. Ball masses, ball biases, the Bayes risk and
// inverse-CDF sampling are all exact piecewise sums. Balls are intervals
// under |x - z|.

#include <aknn/dataset.hpp>
#include <aknn/errors.hpp>
#include <aknn/random.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace aknn {

struct Piece {
  double start;
  double density;
  double eta;
};

class SyntheticDistribution {
 public:
  explicit SyntheticDistribution(std::vector<Piece> pieces) {
    if (pieces.empty()) throw DataError("distribution: no pieces");
    if (pieces.front().start != 0.0) throw DataError("distribution: first piece must start at 0");
    double total = 0.0;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      const Piece& p = pieces[i];
      const double end = i + 1 < pieces.size() ? pieces[i + 1].start : 1.0;
      if (!(end > p.start)) throw DataError("distribution: breakpoints must be strictly increasing inside [0,1)");
      if (!(p.density >= 0.0) || !std::isfinite(p.density)) throw DataError("distribution: negative density");
      if (!(std::abs(p.eta) <= 1.0)) throw DataError("distribution: |eta| must be <= 1");
      breaks_.push_back(p.start);
      density_.push_back(p.density);
      eta_.push_back(p.eta);
      mass_before_.push_back(total);
      eta_mass_before_.push_back(total_eta_);
      total += p.density * (end - p.start);
      total_eta_ += p.eta * p.density * (end - p.start);
    }
    breaks_.push_back(1.0);
    mass_before_.push_back(total);
    eta_mass_before_.push_back(total_eta_);
    if (std::abs(total - 1.0) > 1e-9) throw DataError("distribution: density integrates to " + std::to_string(total));
  }

  // eta = +(1-2p) on [0, 1/2), -(1-2p) on [1/2, 1], uniform density.
  static SyntheticDistribution step(double flip = 0.0) {
    const double e = 1.0 - 2.0 * flip;
    return SyntheticDistribution({{0.0, 1.0, e}, {0.5, 1.0, -e}});
  }

  static SyntheticDistribution constant(double eta) { return SyntheticDistribution({{0.0, 1.0, eta}}); }

  std::size_t pieces() const noexcept { return density_.size(); }
  // Piece starts followed by 1.
  const std::vector<double>& breakpoints() const noexcept { return breaks_; }
  Piece piece(std::size_t i) const { return {breaks_[i], density_[i], eta_[i]}; }

  double eta_at(double x) const { return eta_[piece_of(x)]; }
  double density_at(double x) const { return density_[piece_of(x)]; }

  // mu([0, x]).
  double cdf(double x) const {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return mass_before_.back();
    const std::size_t i = piece_of(x);
    return mass_before_[i] + density_[i] * (x - breaks_[i]);
  }

  // Integral of eta over [0, x] against mu.
  double eta_cdf(double x) const {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return eta_mass_before_.back();
    const std::size_t i = piece_of(x);
    return eta_mass_before_[i] + eta_[i] * density_[i] * (x - breaks_[i]);
  }

  double interval_mass(double a, double b) const { return b < a ? 0.0 : std::max(0.0, cdf(b) - cdf(a)); }
  double interval_eta_mass(double a, double b) const { return b < a ? 0.0 : eta_cdf(b) - eta_cdf(a); }

  // Smallest x with cdf(x) >= u, for u in [0, 1).
  double quantile(double u) const {
    for (std::size_t i = 0; i < density_.size(); ++i) {
      const double end_mass = mass_before_[i + 1];
      if (density_[i] > 0.0 && u < end_mass) {
        const double x = breaks_[i] + (u - mass_before_[i]) / density_[i];
        return std::clamp(x, breaks_[i], breaks_[i + 1]);
      }
    }
    for (std::size_t i = density_.size(); i-- > 0;)
      if (density_[i] > 0.0) return breaks_[i + 1];
    return 1.0;
  }

  // One "start density eta" triple per line; '#' starts a comment.
  static SyntheticDistribution parse(std::string_view text) {
    std::vector<Piece> pieces;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream fields(line);
      Piece p{};
      if (!(fields >> p.start)) continue;
      std::string extra;
      if (!(fields >> p.density >> p.eta) || (fields >> extra))
        throw DataError("distribution: line " + std::to_string(lineno) + " is not a 'start density eta' triple");
      pieces.push_back(p);
    }
    return SyntheticDistribution(std::move(pieces));
  }

  std::string to_text() const {
    std::string out = "# start density eta\n";
    for (std::size_t i = 0; i < density_.size(); ++i)
      out += detail::format_double(breaks_[i]) + " " + detail::format_double(density_[i]) + " " +
             detail::format_double(eta_[i]) + "\n";
    return out;
  }

 private:
  std::size_t piece_of(double x) const {
    if (x < 0.0 || x > 1.0) throw std::invalid_argument("distribution: point outside [0,1]");
    auto it = std::upper_bound(breaks_.begin(), breaks_.end() - 1, x);
    return static_cast<std::size_t>(it - breaks_.begin()) - 1;
  }

  std::vector<double> breaks_;
  std::vector<double> density_;
  std::vector<double> eta_;
  std::vector<double> mass_before_;
  std::vector<double> eta_mass_before_;
  double total_eta_ = 0.0;
};

// Accepts "step", "noisy_step:<p>", "constant:<eta>", or "file:<path>".
inline SyntheticDistribution parse_distribution_spec(const std::string& spec) {
  auto arg = [&](std::size_t prefix) {
    try {
      std::size_t used = 0;
      double v = std::stod(spec.substr(prefix), &used);
      if (used != spec.size() - prefix) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw DataError("distribution: bad parameter in '" + spec + "'");
    }
  };
  if (spec == "step") return SyntheticDistribution::step();
  if (spec.rfind("noisy_step:", 0) == 0) return SyntheticDistribution::step(arg(11));
  if (spec.rfind("constant:", 0) == 0) return SyntheticDistribution::constant(arg(9));
  if (spec.rfind("file:", 0) == 0) return SyntheticDistribution::parse(detail::read_file(spec.substr(5)));
  throw DataError("distribution: unknown spec '" + spec + "'");
}

inline const std::vector<std::string>& signed_alphabet() {
  static const std::vector<std::string> a{"+1", "-1"};
  return a;
}

// Label index of the Bayes classifier: "+1" (index 0) when eta >= 0.
inline LabelId bayes_label(const SyntheticDistribution& dist, double x) { return dist.eta_at(x) >= 0.0 ? 0 : 1; }

// n i.i.d. draws; labels "+1" with probability (1 + eta(x)) / 2.
inline LabeledDataset sample(const SyntheticDistribution& dist, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample: n must be positive");
  Rng rng(derive_seed(seed, {0x5A3B1Eu}));
  std::vector<double> xs(n);
  std::vector<LabelId> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = dist.quantile(rng.uniform());
    ys[i] = rng.bernoulli(0.5 * (1.0 + dist.eta_at(xs[i]))) ? 0 : 1;
  }
  return LabeledDataset(std::move(xs), 1, std::move(ys), signed_alphabet());
}

// Product-density sample in `dim` dimensions; each coordinate is drawn from
// `dist` and the label depends on the first coordinate only.
inline LabeledDataset sample_product(const SyntheticDistribution& dist, std::size_t n, std::size_t dim,
                                     std::uint64_t seed) {
  if (n == 0 || dim == 0) throw std::invalid_argument("sample_product: n and dim must be positive");
  Rng rng(derive_seed(seed, {0x9D0C7u, dim}));
  std::vector<double> xs(n * dim);
  std::vector<LabelId> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) xs[i * dim + j] = dist.quantile(rng.uniform());
    ys[i] = rng.bernoulli(0.5 * (1.0 + dist.eta_at(xs[i * dim]))) ? 0 : 1;
  }
  return LabeledDataset(std::move(xs), dim, std::move(ys), signed_alphabet());
}

inline double ball_mass(const SyntheticDistribution& dist, double x, double r) {
  if (!(r >= 0.0)) throw std::invalid_argument("ball_mass: radius must be >= 0");
  return dist.interval_mass(std::max(0.0, x - r), std::min(1.0, x + r));
}

inline double ball_bias(const SyntheticDistribution& dist, double x, double r) {
  const double mass = ball_mass(dist, x, r);
  if (!(mass > 0.0)) throw std::domain_error("ball_bias: ball has zero mass");
  return dist.interval_eta_mass(std::max(0.0, x - r), std::min(1.0, x + r)) / mass;
}

// inf { r >= 0 : mu(B(x, r)) >= p }, by bisection to 1e-12. The returned
// radius always satisfies mu(B(x, r)) >= p (up to the mass rounding of the
// full interval when p = 1).
inline double probability_radius(const SyntheticDistribution& dist, double x, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("probability_radius: p must lie in (0,1]");
  double lo = 0.0;
  double hi = std::max(x, 1.0 - x);
  if (ball_mass(dist, x, hi) < p) return hi;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (ball_mass(dist, x, mid) >= p)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

inline double bayes_risk(const SyntheticDistribution& dist) {
  double risk = 0.0;
  for (std::size_t i = 0; i < dist.pieces(); ++i) {
    const auto p = dist.piece(i);
    const double len = dist.breakpoints()[i + 1] - p.start;
    risk += 0.5 * (1.0 - std::abs(p.eta)) * p.density * len;
  }
  return risk;
}

struct AdvantageEstimate {
  double value = 0.0;
  double witness_p = 0.0;
  double witness_gamma = 0.0;
  double witness_radius = 0.0;
};

// Ball statistics around a fixed point on the radius grid
// {R i / grid_size : i = 1..grid_size}, R = max(x, 1-x), merged with every
// radius at which the ball edge crosses a breakpoint. Between consecutive
// merged radii the ball bias is a ratio of linear functions of r (hence
// monotone) and mass * bias^2 is convex, so sign checks and maxima taken at
// these radii are exact for piecewise-constant distributions.
class RadiusScan {
 public:
  RadiusScan(const SyntheticDistribution& dist, double x, std::size_t grid_size) : dist_(&dist), x_(x) {
    if (grid_size < 100) throw std::invalid_argument("radius grid needs at least 100 points");
    eta_x_ = dist.eta_at(x);
    sign_ = eta_x_ > 0 ? 1 : (eta_x_ < 0 ? -1 : 0);
    const double far = std::max(x, 1.0 - x);
    radii_.reserve(grid_size + dist.breakpoints().size());
    for (std::size_t i = 1; i <= grid_size; ++i) radii_.push_back(far * static_cast<double>(i) / grid_size);
    for (double b : dist.breakpoints()) {
      const double r = std::abs(x - b);
      if (r > 0.0 && r <= far) radii_.push_back(r);
    }
    std::sort(radii_.begin(), radii_.end());
    radii_.erase(std::unique(radii_.begin(), radii_.end()), radii_.end());
    mass_.reserve(radii_.size());
    signed_bias_.reserve(radii_.size());
    running_min_.reserve(radii_.size());
    double run = sign_ * eta_x_;
    for (double r : radii_) {
      const double m = ball_mass(dist, x, r);
      const double b = m > 0.0 ? sign_ * ball_bias(dist, x, r) : std::numeric_limits<double>::infinity();
      mass_.push_back(m);
      signed_bias_.push_back(b);
      run = std::min(run, b);
      running_min_.push_back(run);
    }
  }

  int sign() const noexcept { return sign_; }
  const std::vector<double>& radii() const noexcept { return radii_; }
  const std::vector<double>& signed_bias() const noexcept { return signed_bias_; }

  AdvantageEstimate advantage() const {
    AdvantageEstimate best;
    if (sign_ == 0) return best;
    for (std::size_t i = 0; i < radii_.size(); ++i) {
      if (mass_[i] == 0.0) continue;
      if (!(signed_bias_[i] > 0.0)) break;
      const double v = mass_[i] * signed_bias_[i] * signed_bias_[i];
      if (v > best.value) best = {v, mass_[i], signed_bias_[i], radii_[i]};
    }
    return best;
  }

  // Whether s * eta(B(x, r)) >= threshold for every r in [0, radius]
  // (with r = 0 read as eta(x)).
  bool bias_at_least_up_to(double threshold, double radius) const {
    if (sign_ == 0) return false;
    auto it = std::upper_bound(radii_.begin(), radii_.end(), radius);
    double lowest = sign_ * eta_x_;
    if (it != radii_.begin()) lowest = running_min_[static_cast<std::size_t>(it - radii_.begin()) - 1];
    if (!(lowest >= threshold)) return false;
    const double m = ball_mass(*dist_, x_, radius);
    return m == 0.0 || sign_ * ball_bias(*dist_, x_, radius) >= threshold;
  }

 private:
  const SyntheticDistribution* dist_;
  double x_;
  double eta_x_ = 0.0;
  int sign_ = 0;
  std::vector<double> radii_;
  std::vector<double> mass_;
  std::vector<double> signed_bias_;
  std::vector<double> running_min_;
};

// Largest p * gamma^2 over (p, gamma)-salient pairs at x: every ball up to
// the candidate radius keeps the Bayes sign, gamma is the signed bias there.
inline AdvantageEstimate advantage(const SyntheticDistribution& dist, double x, std::size_t grid_size = 10000) {
  if (grid_size < 100) throw std::invalid_argument("advantage: grid_size must be >= 100");
  if (dist.eta_at(x) == 0.0) return {};
  return RadiusScan(dist, x, grid_size).advantage();
}

// Whether x lies in the set the fixed-k rule provably classifies: eta(x) has
// a sign s and s * eta(B(x, r)) >= 1/sqrt(k) for all r <= r_{k/n}(x).
inline bool knn_likely_set_member(const SyntheticDistribution& dist, double x, std::size_t n, std::size_t k,
                                  std::size_t grid_size = 10000) {
  if (k == 0 || k > n) throw std::invalid_argument("knn_likely_set_member: need 1 <= k <= n");
  if (dist.eta_at(x) == 0.0) return false;
  RadiusScan scan(dist, x, grid_size);
  const double rp = probability_radius(dist, x, static_cast<double>(k) / static_cast<double>(n));
  return scan.bias_at_least_up_to(1.0 / std::sqrt(static_cast<double>(k)), rp);
}

// Smallest k in [1, n] with x in the k-NN likely-correct set, if any.
inline std::optional<std::size_t> knn_likely_set_first_k(const SyntheticDistribution& dist, double x, std::size_t n,
                                                         std::size_t grid_size = 10000) {
  if (n == 0) throw std::invalid_argument("knn_likely_set_first_k: n must be positive");
  if (dist.eta_at(x) == 0.0) return std::nullopt;
  RadiusScan scan(dist, x, grid_size);
  for (std::size_t k = 1; k <= n; ++k) {
    const double rp = probability_radius(dist, x, static_cast<double>(k) / static_cast<double>(n));
    if (scan.bias_at_least_up_to(1.0 / std::sqrt(static_cast<double>(k)), rp)) return k;
  }
  return std::nullopt;
}

}  // namespace aknn
