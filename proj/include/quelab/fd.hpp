#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "quelab/errors.hpp"
#include "quelab/geometry.hpp"
#include "quelab/rng.hpp"
#include "quelab/spectrum.hpp"

namespace quelab {

struct FdOptions {
  /// Relative residual target ||A u - mu u|| / mu.
  double tolerance = 1e-10;
  /// Eigenvalues closer than this (relative, in mu) are treated as one cluster.
  double cluster_gap = 1e-6;
  std::uint64_t start_seed = 0x5eed;
};

/// 5-point Dirichlet Laplacian -Delta_h on the interior nodes of `grid`, scaled by 1/h^2.
inline Eigen::SparseMatrix<double> fd_laplacian(const GridInfo& grid) {
  const double inv_h2 = 1.0 / (grid.h * grid.h);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(grid.size() * 5);
  for (int j = 0; j <= grid.ny; ++j) {
    for (int i = 0; i <= grid.nx; ++i) {
      const int row = grid.index_of(i, j);
      if (row < 0) continue;
      trips.emplace_back(row, row, 4.0 * inv_h2);
      const int nb[4] = {grid.index_of(i - 1, j), grid.index_of(i + 1, j), grid.index_of(i, j - 1),
                         grid.index_of(i, j + 1)};
      for (int c : nb)
        if (c >= 0) trips.emplace_back(row, c, -inv_h2);
    }
  }
  const auto n = static_cast<Eigen::Index>(grid.size());
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

namespace detail {

inline void orthonormalize(Eigen::MatrixXd& x) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  x = qr.householderQ() * Eigen::MatrixXd::Identity(x.rows(), x.cols());
}

// Modified Gram-Schmidt within each cluster of nearly equal eigenvalues.
inline void cluster_gram_schmidt(Eigen::MatrixXd& vecs, const Eigen::VectorXd& mu, double gap) {
  Eigen::Index start = 0;
  while (start < mu.size()) {
    Eigen::Index end = start + 1;
    while (end < mu.size() && mu[end] - mu[end - 1] < gap * mu[end]) ++end;
    for (Eigen::Index a = start; a < end; ++a) {
      for (Eigen::Index b = start; b < a; ++b) vecs.col(a) -= vecs.col(b).dot(vecs.col(a)) * vecs.col(b);
      vecs.col(a).normalize();
    }
    start = end;
  }
}

}  // namespace detail

/// The k smallest eigenpairs of the 5-point Dirichlet Laplacian on a uniform grid of spacing h.
///
/// Block inverse iteration on the sparse LDL^T factorization with a Rayleigh-Ritz step
/// each sweep; the block carries guard vectors so degenerate eigenvalues converge as a
/// subspace. Eigenvalues are reported as frequencies lambda = sqrt(mu_h).
inline Spectrum fd_spectrum(const Domain& domain, double h, std::size_t k, const FdOptions& opt = {}) {
  if (!(h > 0)) throw DomainError("grid spacing must be positive");
  if (k == 0) throw EmptySpectrumError("requested zero eigenpairs");
  const BoundingBox box = domain.bounds();
  const int nx = static_cast<int>(std::ceil((box.hi.x - box.lo.x) / h - 1e-9));
  const int ny = static_cast<int>(std::ceil((box.hi.y - box.lo.y) / h - 1e-9));
  auto grid = make_grid(domain, h, box.lo, nx, ny);
  const auto n = static_cast<Eigen::Index>(grid->size());
  if (static_cast<std::size_t>(n) < k) throw DomainError("grid too coarse: fewer interior nodes than requested pairs");

  const Eigen::SparseMatrix<double> a = fd_laplacian(*grid);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
  if (solver.info() != Eigen::Success) throw ConvergenceError("sparse factorization failed", 0.0);

  const auto kk = static_cast<Eigen::Index>(k);
  const Eigen::Index block = std::min<Eigen::Index>(n, kk + std::max<Eigen::Index>(8, kk / 2));
  Eigen::MatrixXd x(n, block);
  {
    NormalSampler normal(SeedKey{opt.start_seed, 0, 0});
    for (Eigen::Index c = 0; c < block; ++c)
      for (Eigen::Index r = 0; r < n; ++r) x(r, c) = normal();
  }
  detail::orthonormalize(x);

  const auto cap = static_cast<std::size_t>(std::ceil(10.0 * static_cast<double>(k) * std::sqrt(static_cast<double>(n))));
  Eigen::VectorXd mu;
  Eigen::MatrixXd ritz;
  double worst = INFINITY;
  for (std::size_t it = 0; it < cap; ++it) {
    Eigen::MatrixXd y = solver.solve(x);
    detail::orthonormalize(y);
    const Eigen::MatrixXd ay = a * y;
    Eigen::MatrixXd small = y.transpose() * ay;
    small = 0.5 * (small + small.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(small);
    mu = es.eigenvalues();
    x = y * es.eigenvectors();
    const Eigen::MatrixXd ax = ay * es.eigenvectors();
    worst = 0.0;
    for (Eigen::Index c = 0; c < kk; ++c)
      worst = std::max(worst, (ax.col(c) - mu[c] * x.col(c)).norm() / mu[c]);
    if (worst <= opt.tolerance) {
      ritz = x.leftCols(kk);
      break;
    }
  }
  if (ritz.size() == 0) throw ConvergenceError("fd_spectrum: block inverse iteration hit the iteration cap", worst);

  Eigen::VectorXd mu_k = mu.head(kk);
  detail::cluster_gram_schmidt(ritz, mu_k, opt.cluster_gap);

  std::vector<EigenPair> pairs(k);
  const double scale = 1.0 / h;  // h^2 sum u^2 = 1
  for (std::size_t i = 0; i < k; ++i) {
    auto col = ritz.col(static_cast<Eigen::Index>(i));
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    const double sign = col[arg] < 0 ? -1.0 : 1.0;
    pairs[i].index = i;
    pairs[i].lambda = std::sqrt(mu_k[static_cast<Eigen::Index>(i)]);
    pairs[i].values = sign * scale * col;
  }
  const double lambda_max = pairs.back().lambda;
  return Spectrum(domain, Backend::grid, std::move(pairs), lambda_max, std::move(grid));
}

/// Largest relative residual ||(-Delta_h) u - lambda^2 u|| / lambda^2 over a grid spectrum.
inline double fd_max_residual(const Spectrum& s) {
  const Eigen::SparseMatrix<double> a = fd_laplacian(*s.grid());
  double worst = 0.0;
  for (const auto& p : s.pairs()) {
    const double mu = p.lambda * p.lambda;
    worst = std::max(worst, (a * p.values - mu * p.values).norm() / (mu * p.values.norm()));
  }
  return worst;
}

}  // namespace quelab
