#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "quelab/haar.hpp"
#include "quelab/stats.hpp"

using namespace quelab;

TEST(Haar, OneByOneSignIsFair) {
  std::size_t plus = 0;
  const std::size_t n = 10000;
  for (std::size_t k = 0; k < n; ++k) {
    const auto q = sample_haar(1, SeedKey{7, 0, k});
    ASSERT_EQ(std::abs(q.q(0, 0)), 1.0);
    plus += q.q(0, 0) > 0;
  }
  EXPECT_NEAR(static_cast<double>(plus) / n, 0.5, 3 * binomial_stderr(0.5, n));
}

TEST(Haar, OrthogonalWithUnitDeterminant) {
  for (std::size_t n : {2u, 3u, 17u, 64u, 200u}) {
    const auto s = sample_haar(n, SeedKey{11, n, 0});
    const Eigen::MatrixXd e = s.q.transpose() * s.q - Eigen::MatrixXd::Identity(s.q.rows(), s.q.cols());
    EXPECT_LE(e.cwiseAbs().maxCoeff(), 1e-12) << n;
    EXPECT_NEAR(std::abs(s.q.determinant()), 1.0, 1e-10) << n;
    for (Eigen::Index i = 0; i < s.q.rows(); ++i) EXPECT_NEAR(s.q.row(i).squaredNorm(), 1.0, 1e-12);
  }
}

TEST(Haar, DeterministicPerSeed) {
  const auto a = sample_haar(9, SeedKey{5, 3, 2}), b = sample_haar(9, SeedKey{5, 3, 2});
  EXPECT_EQ((a.q - b.q).cwiseAbs().maxCoeff(), 0.0);
  const auto c = sample_haar(9, SeedKey{5, 3, 3});
  EXPECT_GT((a.q - c.q).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(sample_haar(0, SeedKey{}), DomainError);
}

TEST(Haar, SecondMomentsOfFirstRow) {
  const int n = 50, samples = 2000;
  const std::pair<int, int> pairs[] = {{0, 0}, {1, 1}, {49, 49}, {0, 1}, {3, 17}, {20, 48}};
  std::vector<MeanAccumulator> acc(std::size(pairs));
  for (int k = 0; k < samples; ++k) {
    const auto q = sample_haar(n, SeedKey{2024, 0, static_cast<std::uint64_t>(k)}).q;
    for (std::size_t p = 0; p < std::size(pairs); ++p) acc[p].add(q(0, pairs[p].first) * q(0, pairs[p].second));
  }
  for (std::size_t p = 0; p < std::size(pairs); ++p) {
    const double expect = pairs[p].first == pairs[p].second ? 1.0 / n : 0.0;
    EXPECT_LE(std::abs(acc[p].mean() - expect), 3 * acc[p].stderr_of_mean()) << pairs[p].first << ',' << pairs[p].second;
  }
}

TEST(Haar, LeftInvarianceKolmogorovSmirnov) {
  const std::size_t n = 5, samples = 10000;
  const Eigen::MatrixXd m = sample_haar(n, SeedKey{99, 1, 0}).q;
  std::vector<double> a, b;
  for (std::size_t k = 0; k < samples; ++k) {
    a.push_back(sample_haar(n, SeedKey{1, 0, k}).q(0, 0));
    b.push_back((m * sample_haar(n, SeedKey{2, 0, k}).q)(0, 0));
  }
  EXPECT_LT(ks_two_sample(a, b), ks_critical_1pct(samples, samples));
}

TEST(RotateBlock, IdentityAndQuarterTurn) {
  const Spectrum s = rectangle_spectrum(1, 1, 12);
  const RotatedBlock id = rotate_block(s, {1, 2}, identity_sample(2));
  for (Point p : {Point{0.3, 0.7}, Point{0.61, 0.2}}) {
    EXPECT_EQ(id.eval(s, 0, p), s.eval(1, p));
    EXPECT_EQ(id.eval(s, 1, p), s.eval(2, p));
  }
  OrthogonalSample rot;
  rot.q = Eigen::Matrix2d{{0.0, -1.0}, {1.0, 0.0}};
  const RotatedBlock r = rotate_block(s, {1, 2}, rot);
  // v_0 = -u_2, so <v_0, u_1> vanishes.
  auto v0 = [&](Point p) { return r.eval(s, 0, p); };
  EXPECT_NEAR(inner_product(s, v0, eigenfunction(s, 1)), 0.0, 1e-12);
  EXPECT_NEAR(inner_product(s, v0, eigenfunction(s, 2)), -1.0, 1e-12);
}

TEST(RotateBlock, GramIsIdentity) {
  const Spectrum s = rectangle_spectrum(1, 1, 60);
  const auto p = build_partition(s, 0.2, 0.0);
  const auto blocks = rotate_partition(s, p, s.size(), 31);
  ASSERT_FALSE(blocks.empty());
  for (const auto& b : blocks) {
    const Eigen::MatrixXd g = rotated_gram(s, b);
    EXPECT_LE((g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(), 1e-8) << b.label;
  }
  // Independent check on one block by direct 2-D quadrature.
  const auto& b = blocks[blocks.size() / 2];
  auto vi = [&](std::size_t i) { return [&, i](Point x) { return b.eval(s, i, x); }; };
  EXPECT_NEAR(inner_product(s, vi(0), vi(0)), 1.0, 1e-8);
  if (b.size() > 1) EXPECT_NEAR(inner_product(s, vi(0), vi(1)), 0.0, 1e-8);
}

TEST(RotateBlock, SizeMismatch) {
  const Spectrum s = rectangle_spectrum(1, 1, 12);
  EXPECT_THROW(rotate_block(s, {0, 1, 2}, identity_sample(2)), ShapeError);
  EXPECT_THROW(rotate_block(s, {0, 100}, identity_sample(2)), ShapeError);
}

TEST(RotateBlock, DiagonalMeanAndNormBound) {
  const Spectrum s = rectangle_spectrum(1, 1, 60);
  std::vector<std::size_t> members;
  for (std::size_t i = 100; i < 112; ++i) members.push_back(i);
  const Eigen::MatrixXd h = ElementEngine(s, observables::cos_x(1, 1.0)).block(members);
  const double b = h.trace() / static_cast<double>(members.size());
  MeanAccumulator acc;
  for (std::size_t k = 0; k < 10000; ++k) {
    const Eigen::MatrixXd q = sample_haar(members.size(), SeedKey{8, 0, k}).q;
    const double d = (q.row(0) * h * q.row(0).transpose())(0, 0);
    EXPECT_LE(std::abs(d), 1.0 + 1e-12);
    acc.add(d);
  }
  EXPECT_LE(std::abs(acc.mean() - b), 3 * acc.stderr_of_mean());
}

TEST(RotateBlock, RotationDumpIsReadable) {
  const Spectrum s = rectangle_spectrum(1, 1, 12);
  const auto b = rotate_block(s, {1, 2}, sample_haar(2, SeedKey{3, 4, 5}), 4);
  std::ostringstream os;
  write_rotation(os, b);
  EXPECT_EQ(os.str().rfind("block 4 n 2 seed 3 4 5 retries 0\n", 0), 0u);
}
