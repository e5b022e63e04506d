#include <aknn/experiment.hpp>
#include <aknn/ucecm.hpp>

#include <gtest/gtest.h>

#include <cmath>

namespace {

using aknn::IntervalFamily;
using aknn::SyntheticDistribution;

const SyntheticDistribution kNoisy = SyntheticDistribution::step(0.2);

double slack(double rate, std::size_t trials) { return 3.0 * std::sqrt(rate / static_cast<double>(trials)); }

TEST(Family, GridSizeAndBounds) {
  for (std::size_t m = 5; m <= 50; ++m) EXPECT_EQ(IntervalFamily::grid(m).size(), m * (m + 1) / 2);
  EXPECT_THROW(IntervalFamily::grid(4), std::invalid_argument);
  EXPECT_THROW(IntervalFamily::grid(51), std::invalid_argument);
  EXPECT_THROW(IntervalFamily({{0.5, 0.2}}), std::invalid_argument);
  EXPECT_THROW(IntervalFamily({}), std::invalid_argument);
}

TEST(Family, EndpointCountsMatchDirectCounting) {
  const auto fam = IntervalFamily::grid(7);
  const auto ends = aknn::detail::endpoints_of(fam);
  const auto idx = aknn::detail::index_family(fam, ends, kNoisy);
  // Sample points placed exactly on some endpoints exercise closed-interval counting.
  std::vector<double> xs{0.0, 1.0 / 7, 2.0 / 7, 0.5, 0.5, 0.99, 1.0, 0.3};
  const aknn::LabeledDataset s(xs, 1, {0, 1, 0, 0, 1, 1, 0, 0}, aknn::signed_alphabet());
  const aknn::detail::EndpointCounts counts(ends, s);
  for (std::size_t i = 0; i < fam.size(); ++i) {
    std::size_t direct = 0, pos = 0;
    for (std::size_t j = 0; j < xs.size(); ++j)
      if (xs[j] >= fam.members()[i].lo && xs[j] <= fam.members()[i].hi) {
        ++direct;
        pos += s.label(j) == 0;
      }
    EXPECT_EQ(counts.count(idx[i].lo, idx[i].hi), direct);
    EXPECT_EQ(counts.positives(idx[i].lo, idx[i].hi), pos);
  }
}

TEST(Ucecm, KoConstant) {
  EXPECT_NEAR(aknn::ucecm_k_o(2000, 0.1), 1000.0 * (2 * std::log(16000.0) + std::log(40.0)), 1e-9);
}

TEST(Ucecm, DefaultConfigurationHolds) {
  const auto r = aknn::validate_ucecm(kNoisy, 2000, 200, 0.1, 20);
  EXPECT_LE(r.empirical_failure_rate(), 0.1 + slack(0.1, 200));
  EXPECT_LE(r.violations, r.trials);
  EXPECT_EQ(r.bound_delta, 0.1);
  EXPECT_EQ(r.config["m"], 20);
}

TEST(Ucecm, VacuousWhenKoExceedsN) {
  const auto r = aknn::validate_ucecm(SyntheticDistribution::constant(0.0), 10, 100, 0.5, 10);
  EXPECT_GE(aknn::ucecm_k_o(10, 0.5), 10.0);
  EXPECT_EQ(r.violations, 0u);
}

TEST(Ucecm, SinglePairChernoffCase) {
  const IntervalFamily a({{0.1, 0.4}}), b({{0.0, 0.6}});
  const auto r =
      aknn::validate_ucecm(kNoisy, 10000, 400, 0.05, a, b, aknn::ConditionalBound::chernoff, {7, 2, 2});
  EXPECT_LE(r.empirical_failure_rate(), 0.05 + slack(0.05, 400));
  // And the loose uniform bound never fails on a single pair.
  EXPECT_EQ(aknn::validate_ucecm(kNoisy, 10000, 100, 0.05, a, b).violations, 0u);
}

TEST(Ucecm, ParallelEqualsSerialAndSeedMatters) {
  const IntervalFamily a({{0.1, 0.4}}), b({{0.0, 0.6}});
  const auto s = aknn::validate_ucecm(kNoisy, 300, 60, 0.1, a, b, aknn::ConditionalBound::chernoff, {3, 1, 2});
  const auto p = aknn::validate_ucecm(kNoisy, 300, 60, 0.1, a, b, aknn::ConditionalBound::chernoff, {3, 4, 2});
  EXPECT_EQ(s.violations, p.violations);
  EXPECT_EQ(s.worst_gap, p.worst_gap);
  EXPECT_EQ(s.to_json().dump(), p.to_json().dump());
}

TEST(Ucecm, Preconditions) {
  EXPECT_THROW(aknn::validate_ucecm(kNoisy, 9, 100, 0.1, 20), std::invalid_argument);
  EXPECT_THROW(aknn::validate_ucecm(kNoisy, 100, 49, 0.1, 20), std::invalid_argument);
  EXPECT_THROW(aknn::validate_ucecm(kNoisy, 100, 100, 1.0, 20), std::invalid_argument);
  EXPECT_THROW(aknn::validate_ucecm(kNoisy, 100, 100, 0.1, 4), std::invalid_argument);
}

TEST(BiasLemma, CalibratedAndGenerousConstantsHold) {
  const double bound = 0.005 + slack(0.01, 200);
  EXPECT_LE(aknn::validate_bias_lemma(kNoisy, 5000, 200, 0.1, aknn::kCalibratedC1, 20).empirical_failure_rate(), bound);
  EXPECT_EQ(aknn::validate_bias_lemma(kNoisy, 5000, 200, 0.1, 5.0, 20).violations, 0u);
}

TEST(BiasLemma, DeterministicLabelsNeverFail) {
  const auto r = aknn::validate_bias_lemma(SyntheticDistribution::constant(1.0), 1000, 50, 0.1, 0.01, 20);
  EXPECT_EQ(r.violations, 0u);
}

TEST(BiasLemma, TinyConstantHasPower) {
  EXPECT_GT(aknn::validate_bias_lemma(kNoisy, 5000, 200, 0.1, 0.01, 20).empirical_failure_rate(), 0.5);
}

TEST(BiasLemma, LogNTermIsNecessary) {
  aknn::BiasLemmaOptions no_log;
  no_log.include_log_n = false;
  const auto coins = SyntheticDistribution::constant(0.0);
  const auto r = aknn::validate_bias_lemma(coins, 5000, 200, 0.1, aknn::kCalibratedC1, 20, no_log);
  EXPECT_GT(r.empirical_failure_rate(), 0.005);
  EXPECT_DOUBLE_EQ(r.bound_delta, 0.005);
}

TEST(MassLemma, KMaxMatchesLinearScan) {
  aknn::Rng rng(3);
  for (int t = 0; t < 300; ++t) {
    const double mass = rng.uniform();
    const std::size_t n = 10 + rng.below(3000);
    const double delta = 0.01 + 0.9 * rng.uniform(), c_o = 3.0 * rng.uniform();
    std::size_t expect = 0;
    for (std::size_t k = 1; k <= n; ++k)
      if (mass >= k / static_cast<double>(n) + c_o / n * std::max<double>(k, 2 * std::log(n / delta))) expect = k;
    ASSERT_EQ(aknn::mass_lemma_k_max(mass, n, delta, c_o), expect);
  }
  EXPECT_EQ(aknn::mass_lemma_k_max(0.0, 100, 0.1, 1.0), 0u);
}

TEST(MassLemma, CalibratedAndGenerousConstantsHold) {
  const double bound = 0.005 + slack(0.01, 200);
  EXPECT_LE(aknn::validate_mass_lemma(kNoisy, 5000, 200, 0.1, aknn::kCalibratedCo, 20).empirical_failure_rate(), bound);
  EXPECT_EQ(aknn::validate_mass_lemma(kNoisy, 5000, 200, 0.1, 4.0, 20).violations, 0u);
}

TEST(MassLemma, ZeroMassIntervalsAreVacuous) {
  const SyntheticDistribution holes({{0.0, 2.0, 0.0}, {0.5, 0.0, 0.0}});
  const IntervalFamily empty_part({{0.6, 0.9}, {0.5, 1.0}});
  EXPECT_EQ(aknn::validate_mass_lemma(holes, 1000, 50, 0.1, 0.0, empty_part).violations, 0u);
}

TEST(MassLemma, ZeroConstantFailsOften) {
  EXPECT_GT(aknn::validate_mass_lemma(kNoisy, 5000, 200, 0.1, 0.0, 20).empirical_failure_rate(), 0.5);
}

TEST(Counterexample, MediansGrowWithN) {
  double prev = -1.0;
  for (std::size_t n : {10u, 100u, 1000u, 10000u}) {
    const auto ts = aknn::counterexample_statistic(n, 200, 1);
    const double med = aknn::median(ts);
    EXPECT_GT(med, prev) << "n=" << n;
    prev = med;
    if (n >= 100) {
      for (double t : ts) EXPECT_GE(t, 0.5);
    }
  }
}

TEST(Counterexample, SingleAtomAndDeterminism) {
  for (double t : aknn::counterexample_statistic(1, 20, 5)) EXPECT_EQ(t, 0.5);
  EXPECT_EQ(aknn::counterexample_statistic(500, 60, 9), aknn::counterexample_statistic(500, 60, 9, 4));
  for (double t : aknn::counterexample_statistic(50, 100, 2)) {
    // T is half the square root of an integer count.
    const double c = 4 * t * t;
    EXPECT_NEAR(c, std::round(c), 1e-9);
  }
}

TEST(Median, EvenAndOdd) {
  EXPECT_EQ(aknn::median({3, 1, 2}), 2.0);
  EXPECT_EQ(aknn::median({4, 1, 2, 3}), 2.5);
  EXPECT_THROW(aknn::median({}), std::invalid_argument);
}

}  // namespace
