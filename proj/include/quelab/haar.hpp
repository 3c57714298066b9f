#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "quelab/errors.hpp"
#include "quelab/observables.hpp"
#include "quelab/partition.hpp"
#include "quelab/rng.hpp"
#include "quelab/spectrum.hpp"

namespace quelab {

struct OrthogonalSample {
  Eigen::MatrixXd q;
  SeedKey seed;
  int retries = 0;  // degenerate factorizations redrawn with a derived seed

  std::size_t n() const { return static_cast<std::size_t>(q.rows()); }
};

/// Haar-distributed orthogonal n x n matrix: QR of a standard Gaussian matrix with the
/// columns of Q multiplied by sign(diag R).
inline OrthogonalSample sample_haar(std::size_t n, SeedKey seed) {
  if (n == 0) throw DomainError("sample_haar: dimension must be positive");
  const auto nn = static_cast<Eigen::Index>(n);
  OrthogonalSample out;
  out.seed = seed;
  for (int attempt = 0;; ++attempt) {
    // Retries move to a fresh replica slot well away from any caller's replica range.
    const SeedKey key = attempt == 0 ? seed : seed.with_replica(seed.replica ^ (0x9e37ull << 40) ^ static_cast<std::uint64_t>(attempt));
    NormalSampler normal(key);
    Eigen::MatrixXd g(nn, nn);
    for (Eigen::Index c = 0; c < nn; ++c)
      for (Eigen::Index r = 0; r < nn; ++r) g(r, c) = normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    const double scale = r.diagonal().cwiseAbs().maxCoeff();
    if (!(r.diagonal().cwiseAbs().minCoeff() > 1e-12 * scale) && attempt < 16) {
      ++out.retries;
      continue;
    }
    out.q = qr.householderQ() * Eigen::MatrixXd::Identity(nn, nn);
    for (Eigen::Index c = 0; c < nn; ++c)
      if (r(c, c) < 0) out.q.col(c) = -out.q.col(c);
    return out;
  }
}

inline OrthogonalSample identity_sample(std::size_t n) {
  OrthogonalSample out;
  out.q = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  return out;
}

/// Functions v_i = sum_j q_ij u_{members[j]}; row i of Q is the coefficient vector of v_i.
struct RotatedBlock {
  std::size_t label = 0;
  std::vector<std::size_t> members;
  OrthogonalSample rotation;

  std::size_t size() const { return members.size(); }
  const Eigen::MatrixXd& q() const { return rotation.q; }

  double eval(const Spectrum& s, std::size_t i, Point p) const {
    double v = 0.0;
    for (std::size_t j = 0; j < members.size(); ++j)
      v += rotation.q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * s.eval(members[j], p);
    return v;
  }

  BlockView view() const { return BlockView{label, members, &rotation.q}; }
};

inline RotatedBlock rotate_block(const Spectrum& s, std::vector<std::size_t> members, OrthogonalSample q,
                                 std::size_t label = 0) {
  if (members.size() != q.n()) throw ShapeError("rotate_block: member count does not match Q");
  for (auto m : members)
    if (m >= s.size()) throw ShapeError("rotate_block: member index outside the spectrum");
  return RotatedBlock{label, std::move(members), std::move(q)};
}

/// Gram matrix <v_i, v_k> computed by quadrature on the spectrum's own rule.
inline Eigen::MatrixXd rotated_gram(const Spectrum& s, const RotatedBlock& b) {
  const ElementEngine eng(s, observables::constant(1.0));
  const Eigen::MatrixXd h = eng.block(b.members);
  return b.q() * h * b.q().transpose();
}

/// One Haar rotation per partition block whose members lie below n_trunc. Block b gets
/// the stream (master, b, 0); the low block stays unrotated.
inline std::vector<RotatedBlock> rotate_partition(const Spectrum& s, const BlockPartition& p, std::size_t n_trunc,
                                                  std::uint64_t master_seed) {
  std::vector<RotatedBlock> out;
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const Block& blk = p.blocks[b];
    if (blk.first() >= n_trunc) break;
    out.push_back(rotate_block(s, blk.members, sample_haar(blk.size(), SeedKey{master_seed, b, 0}), b));
  }
  return out;
}

inline void write_rotation(std::ostream& os, const RotatedBlock& b) {
  const auto old = os.precision(17);
  os << "block " << b.label << " n " << b.size() << " seed " << b.rotation.seed.master << ' ' << b.rotation.seed.label
     << ' ' << b.rotation.seed.replica << " retries " << b.rotation.retries << '\n';
  for (Eigen::Index i = 0; i < b.q().rows(); ++i) {
    for (Eigen::Index j = 0; j < b.q().cols(); ++j) os << (j ? " " : "") << b.q()(i, j);
    os << '\n';
  }
  os.precision(old);
}

}  // namespace quelab
