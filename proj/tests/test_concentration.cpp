#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "quelab/concentration.hpp"

using namespace quelab;

namespace {

std::vector<std::size_t> consecutive_from(const Spectrum& s, double lambda, std::size_t n) {
  std::size_t first = 0;
  while (s[first].lambda < lambda) ++first;
  std::vector<std::size_t> m(n);
  std::iota(m.begin(), m.end(), first);
  return m;
}

std::size_t index_of(const Spectrum& s, Mode mode) {
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i].mode == mode) return i;
  throw std::runtime_error("mode not found");
}

}  // namespace

TEST(RotationTail, ConstantObservableNeverDeviates) {
  const Spectrum s = rectangle_spectrum(1, 1, 40);
  const auto m = consecutive_from(s, 20, 10);
  const auto rep = rotation_tail(s, m, observables::constant(), 1e-9, 500, SeedKey{1, 0, 0});
  EXPECT_EQ(rep.empirical_tail, 0.0);
  EXPECT_EQ(rep.replicas, 500u);
  EXPECT_THROW(rotation_tail(s, m, observables::constant(), 0.1, 99, SeedKey{}), DomainError);
}

TEST(RotationTail, TwoDimensionalAngleOracle) {
  const Spectrum s = rectangle_spectrum(1, 1, 20);
  const std::vector<std::size_t> m{index_of(s, {1, 5}), index_of(s, {2, 4})};
  const Eigen::MatrixXd h = ElementEngine(s, observables::cos_x(1)).block(m);
  ASSERT_NEAR(h(0, 0), -0.5, 1e-12);
  ASSERT_NEAR(h(1, 1), 0.0, 1e-12);
  ASSERT_NEAR(h(0, 1), 0.0, 1e-12);
  const std::size_t n = 10000;
  const auto dev = rotation_deviations(h, n, SeedKey{77, 0, 0});
  EXPECT_LT(ks_one_sample(dev, oracle::angle_cdf), ks_critical_1pct(n));
}

TEST(RotationTail, VarianceMatchesSphereIdentity) {
  // For v uniform on the sphere, Var(v^T H v) = 2/(n+2) (tr H^2 / n - (tr H / n)^2).
  const Spectrum s = rectangle_spectrum(1, 1, 120);
  for (std::size_t n : {8u, 32u, 128u}) {
    const Eigen::MatrixXd h = ElementEngine(s, observables::cos_x(1)).block(consecutive_from(s, 60, n));
    const double dn = static_cast<double>(n), b = h.trace() / dn;
    const double expect = 2.0 / (dn + 2) * ((h * h).trace() / dn - b * b);
    MeanAccumulator acc;
    for (double d : rotation_deviations(h, 20000, SeedKey{5, n, 0})) acc.add(d * d);
    EXPECT_LE(std::abs(acc.mean() - expect), 4 * acc.stderr_of_mean() + 1e-15) << n;
  }
}

TEST(RotationTail, TailsShrinkWithBlockSizeAtFixedSpread) {
  // Modes (m, 1), m = 1..n: the cos(2 pi x) element matrix keeps an O(1) eigenvalue spread
  // as n grows, so only the dimension drives concentration.
  const Spectrum s = rectangle_spectrum(1, 1, 420);
  std::vector<TailReport> reps;
  for (std::size_t n : {8u, 32u, 128u}) {
    std::vector<std::size_t> m;
    for (int k = 1; k <= static_cast<int>(n); ++k) m.push_back(index_of(s, {k, 1}));
    reps.push_back(rotation_tail(s, m, observables::cos_x(1), 0.05, 10000, SeedKey{5, n, 0}));
  }
  for (std::size_t k = 1; k < reps.size(); ++k) {
    const double noise = 2 * std::hypot(reps[k].tail_stderr, reps[k - 1].tail_stderr);
    EXPECT_LE(reps[k].empirical_tail, reps[k - 1].empirical_tail + noise) << reps[k].n;
  }
  EXPECT_LT(reps.back().empirical_tail, reps.front().empirical_tail);
  std::ostringstream os;
  write_tail_csv(os, reps);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "n,t,replicas,tail,fitted_c,bound");
}

TEST(RotationTail, MeanIdentityAndBound) {
  const Spectrum s = rectangle_spectrum(1, 1, 60);
  const auto m = consecutive_from(s, 40, 16);
  const Eigen::MatrixXd h = ElementEngine(s, observables::random_step(2)).block(m);
  const auto dev = rotation_deviations(h, 10000, SeedKey{3, 1, 0});
  MeanAccumulator acc;
  const double b = h.trace() / 16;
  for (double d : dev) {
    acc.add(d);
    EXPECT_LE(std::abs(d + b), 1.0 + 1e-12);
  }
  EXPECT_LE(std::abs(acc.mean()), 3 * acc.stderr_of_mean());
}

TEST(RotationTail, WorkerCountDoesNotChangeSamples) {
  const Spectrum s = rectangle_spectrum(1, 1, 60);
  const Eigen::MatrixXd h = ElementEngine(s, observables::cos_x(1)).block(consecutive_from(s, 30, 12));
  EXPECT_EQ(rotation_deviations(h, 3000, SeedKey{9, 0, 0}, 1), rotation_deviations(h, 3000, SeedKey{9, 0, 0}, 4));
}

TEST(HansonWright, ZeroMatrix) {
  const auto r = hanson_wright_tail(Eigen::MatrixXd::Zero(5, 5), Distribution::gaussian, 0.1, 1000, SeedKey{1, 0, 0});
  EXPECT_EQ(r.empirical_tail, 0.0);
}

TEST(HansonWright, IdentityMatchesChiSquared) {
  const int n = 100;
  const std::size_t reps = 20000;
  const double ts[] = {0.5 * std::sqrt(2.0 * n), std::sqrt(2.0 * n), 2 * std::sqrt(2.0 * n), 3 * std::sqrt(2.0 * n)};
  const auto fit = hanson_wright_sweep(Eigen::MatrixXd::Identity(n, n), Distribution::gaussian, ts, reps, SeedKey{4, 0, 0});
  EXPECT_TRUE(std::isfinite(fit.c));
  EXPECT_GT(fit.c, 0.0);
  EXPECT_TRUE(fit.bound_holds);
  EXPECT_NEAR(fit.hs_norm, 10.0, 1e-12);
  EXPECT_NEAR(fit.op_norm, 1.0, 1e-9);
  for (const auto& r : fit.reports) {
    const double exact = oracle::chi2_two_sided_tail(n, r.t);
    EXPECT_LE(std::abs(r.empirical_tail - exact), 3 * binomial_stderr(exact, reps) + 1.0 / reps) << r.t;
    EXPECT_LE(r.empirical_tail, r.bound_value * (1 + 1e-12));
  }
}

TEST(HansonWright, RankOneScalarOracle) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(4, 4);
  m(0, 0) = 1;
  const std::size_t reps = 20000;
  for (double t : {0.5, 1.5, 3.0}) {
    const auto r = hanson_wright_tail(m, Distribution::gaussian, t, reps, SeedKey{6, 0, 0});
    const double exact = oracle::chi1_deviation_tail(t);
    EXPECT_LE(std::abs(r.empirical_tail - exact), 3 * binomial_stderr(exact, reps) + 1.0 / reps) << t;
  }
  // Rademacher X_1^2 = 1 exactly.
  EXPECT_EQ(hanson_wright_tail(m, Distribution::rademacher, 1e-9, 1000, SeedKey{6, 0, 0}).empirical_tail, 0.0);
}

TEST(HansonWright, OffDiagonalFitsForBothDistributions) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(30, 30);
  for (int i = 0; i + 1 < 30; ++i) m(i, i + 1) = m(i + 1, i) = 0.5;
  const double ts[] = {2.0, 4.0, 8.0};
  const auto g = hanson_wright_sweep(m, Distribution::gaussian, ts, 20000, SeedKey{8, 0, 0});
  const auto r = hanson_wright_sweep(m, Distribution::rademacher, ts, 20000, SeedKey{8, 1, 0});
  EXPECT_GT(g.c, 0.0);
  EXPECT_GT(r.c, 0.0);
  for (const auto& rep : r.reports) EXPECT_LE(rep.empirical_tail, rep.bound_value * (1 + 1e-12));
}

TEST(NormIdentities, ConstantGivesIdentity) {
  const Spectrum s = rectangle_spectrum(1, 1, 40);
  const auto r = norm_identities_check(s, consecutive_from(s, 20, 9), observables::constant());
  EXPECT_NEAR(r.op_norm, 1.0, 1e-9);
  EXPECT_NEAR(r.hs_norm, 3.0, 1e-9);
  EXPECT_TRUE(r.op_ok);
  EXPECT_TRUE(r.hs_ok);
}

TEST(NormIdentities, CosineAndRandomSteps) {
  const Spectrum s = rectangle_spectrum(1, 1, 80);
  const auto m = consecutive_from(s, 50, 40);
  const auto c = norm_identities_check(s, m, observables::cos_x(1));
  EXPECT_TRUE(c.op_ok);
  EXPECT_LE(c.op_norm, 1.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = norm_identities_check(s, m, observables::random_step(seed));
    EXPECT_TRUE(r.op_ok) << seed;
    EXPECT_TRUE(r.hs_ok) << seed;
  }
}

TEST(RadialMoment, ExpectationIsDimension) {
  for (std::size_t n : {3u, 20u}) {
    const auto acc = radial_second_moment(n, 10000, SeedKey{12, n, 0});
    EXPECT_LE(std::abs(acc.mean() - static_cast<double>(n)), 3 * acc.stderr_of_mean()) << n;
  }
}
