#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "quelab/errors.hpp"
#include "quelab/haar.hpp"
#include "quelab/linalg.hpp"
#include "quelab/partition.hpp"
#include "quelab/spectrum.hpp"

namespace quelab {

/// Contiguous diagonal block [offset, offset + size) of the assembled operator.
struct BlockSlot {
  std::size_t offset = 0;
  std::size_t size = 0;
  std::ptrdiff_t block = -1;  // partition block, -1 for the low block
};

/// Truncated operators on span{u_0 .. u_{N-1}}:
///   T = diag(mu), G = diag(1/mu), Tpp = U^T diag(lambda''^2) U, S = (Tpp - T) G,
/// with U block-diagonal holding the Haar rotations (rows = coefficient vectors).
struct PerturbedOperator {
  std::size_t n = 0;
  double epsilon = 0.0;
  double gamma = 0.0;
  Eigen::VectorXd mu;
  Eigen::VectorXd mu_dprime;
  Eigen::MatrixXd u;
  Eigen::MatrixXd t, tpp, g, s;
  std::vector<BlockSlot> slots;
};

/// Smallest N' >= N that does not split a block.
inline std::size_t snap_truncation(std::span<const std::ptrdiff_t> block_of, std::size_t n) {
  while (n > 0 && n < block_of.size() && block_of[n - 1] >= 0 && block_of[n] == block_of[n - 1]) ++n;
  return n;
}

/// Builds the truncated operators. lambda'' comes from `r.lambda_dprime` when present,
/// otherwise from lambda'. Every partition block meeting [0, N) needs a rotation whose
/// label is its block position; the low block is left unrotated.
inline PerturbedOperator assemble(const Spectrum& s, const ReassignedSpectrum& r,
                                  std::span<const RotatedBlock> rotations, std::size_t n, double epsilon,
                                  double gamma, bool snap = true) {
  if (r.block_of.size() != s.size()) throw ShapeError("assemble: reassigned spectrum does not match");
  if (n == 0 || n > s.size()) throw ShapeError("assemble: truncation outside the spectrum");
  if (snap) n = snap_truncation(r.block_of, n);
  const auto nn = static_cast<Eigen::Index>(n);
  const std::vector<double>& target = r.has_dprime() ? r.lambda_dprime : r.lambda_prime;

  std::map<std::size_t, const RotatedBlock*> by_label;
  for (const auto& rb : rotations) by_label[rb.label] = &rb;

  PerturbedOperator op;
  op.n = n;
  op.epsilon = epsilon;
  op.gamma = gamma;
  op.mu.resize(nn);
  op.mu_dprime.resize(nn);
  op.u = Eigen::MatrixXd::Zero(nn, nn);
  for (std::size_t i = 0; i < n; ++i) {
    op.mu[static_cast<Eigen::Index>(i)] = s[i].lambda * s[i].lambda;
    op.mu_dprime[static_cast<Eigen::Index>(i)] = target[i] * target[i];
  }

  std::size_t i = 0;
  while (i < n) {
    const std::ptrdiff_t b = r.block_of[i];
    std::size_t e = i + 1;
    while (e < n && r.block_of[e] == b) ++e;
    const auto off = static_cast<Eigen::Index>(i), len = static_cast<Eigen::Index>(e - i);
    if (b < 0) {
      op.u.block(off, off, len, len).setIdentity();
    } else {
      const auto it = by_label.find(static_cast<std::size_t>(b));
      if (it == by_label.end()) throw AssemblyError("assemble: no rotation for block " + std::to_string(b));
      const RotatedBlock& rb = *it->second;
      if (rb.size() != e - i || rb.members.front() != i)
        throw AssemblyError("assemble: rotation for block " + std::to_string(b) + " does not match its members");
      op.u.block(off, off, len, len) = rb.q();
    }
    op.slots.push_back(BlockSlot{i, e - i, b});
    i = e;
  }

  op.t = op.mu.asDiagonal();
  op.g = op.mu.cwiseInverse().asDiagonal();
  op.tpp = Eigen::MatrixXd::Zero(nn, nn);
  for (const auto& sl : op.slots) {
    const auto off = static_cast<Eigen::Index>(sl.offset), len = static_cast<Eigen::Index>(sl.size);
    const Eigen::MatrixXd q = op.u.block(off, off, len, len);
    Eigen::MatrixXd blk = q.transpose() * op.mu_dprime.segment(off, len).asDiagonal() * q;
    op.tpp.block(off, off, len, len) = 0.5 * (blk + blk.transpose());
  }
  op.s = (op.tpp - op.t) * op.g;
  return op;
}

/// ||S||_{L^2 -> F^w} realized as ||diag(<mu>)^w S||_2.
inline double weighted_operator_norm(const PerturbedOperator& op, double w, const NormOptions& opt = {}) {
  return weighted_norm(op.s, op.mu, w, 0.0, opt);
}

struct TppEigenpair {
  double value = 0.0;
  Eigen::VectorXd vector;  // length N, in the u-basis
};

/// Eigenpairs of Tpp from Jacobi rotations on each diagonal block, ascending within blocks.
inline std::vector<TppEigenpair> eigendecompose_Tpp(const PerturbedOperator& op) {
  std::vector<TppEigenpair> out;
  out.reserve(op.n);
  for (const auto& sl : op.slots) {
    const auto off = static_cast<Eigen::Index>(sl.offset), len = static_cast<Eigen::Index>(sl.size);
    std::vector<double> targets(op.mu_dprime.data() + off, op.mu_dprime.data() + off + len);
    std::sort(targets.begin(), targets.end());
    for (std::size_t k = 1; k < targets.size(); ++k)
      if (targets[k] - targets[k - 1] <= 1e-12 * targets[k])
        throw InvariantViolation("eigendecompose_Tpp: repeated lambda'' inside block at offset " + std::to_string(sl.offset));
    const SymmetricEigen es = jacobi_eigen(op.tpp.block(off, off, len, len));
    for (Eigen::Index k = 0; k < len; ++k) {
      TppEigenpair p;
      p.value = es.values[k];
      p.vector = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(op.n));
      p.vector.segment(off, len) = es.vectors.col(k);
      out.push_back(std::move(p));
    }
  }
  return out;
}

struct EigenCheck {
  double max_value_rel_error = 0.0;   // max |eig - lambda''^2| / lambda''^2
  double max_vector_error = 0.0;      // max min(|e - row|, |e + row|)
};

/// Compares the Jacobi eigenpairs with the construction: eigenvalues lambda''^2 and
/// eigenvectors equal to the rows of U, up to sign.
inline EigenCheck check_eigenstructure(const PerturbedOperator& op) {
  const auto pairs = eigendecompose_Tpp(op);
  EigenCheck c;
  std::size_t k = 0;
  for (const auto& sl : op.slots) {
    const auto off = static_cast<Eigen::Index>(sl.offset);
    std::vector<Eigen::Index> order(sl.size);
    for (std::size_t t = 0; t < sl.size; ++t) order[t] = off + static_cast<Eigen::Index>(t);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return op.mu_dprime[a] < op.mu_dprime[b]; });
    for (std::size_t t = 0; t < sl.size; ++t, ++k) {
      const Eigen::Index row = order[t];
      const double target = op.mu_dprime[row];
      c.max_value_rel_error = std::max(c.max_value_rel_error, std::abs(pairs[k].value - target) / target);
      const Eigen::VectorXd expect = op.u.row(row).transpose();
      const double err = std::min((pairs[k].vector - expect).norm(), (pairs[k].vector + expect).norm());
      c.max_vector_error = std::max(c.max_vector_error, err);
    }
  }
  return c;
}

struct QuasimodeDefect {
  std::size_t index = 0;
  double lambda_dprime = 0.0;
  double defect = 0.0;      // ||(T - lambda''^2) f|| / lambda''^2
  double c_measured = 0.0;  // defect <lambda''>^gamma / epsilon
};

/// Defect of the i-th Tpp eigenvector (row i of U) as a quasimode of T.
inline QuasimodeDefect quasimode_defect(const PerturbedOperator& op, std::size_t i) {
  if (i >= op.n) throw ShapeError("quasimode_defect: index outside the truncation");
  const auto ii = static_cast<Eigen::Index>(i);
  const double m2 = op.mu_dprime[ii];
  const Eigen::VectorXd f = op.u.row(ii).transpose();
  const double num = ((op.mu.array() - m2) * f.array()).matrix().norm();
  QuasimodeDefect d;
  d.index = i;
  d.lambda_dprime = std::sqrt(m2);
  d.defect = num / m2;
  const double jb = std::sqrt(1.0 + m2);
  d.c_measured = op.epsilon > 0 ? d.defect * std::pow(jb, op.gamma) / op.epsilon : 0.0;
  return d;
}

struct NeumannCheck {
  double norm_s = 0.0;
  std::size_t terms = 0;
  double error = 0.0;  // ||(I + S)^-1 - sum_{k<=K} (-S)^k||_2
  double bound = 0.0;  // ||S||^(K+1) / (1 - ||S||)
  bool applicable = false;
};

inline NeumannCheck neumann_check(const Eigen::MatrixXd& s, std::size_t k_max = 20) {
  NeumannCheck c;
  c.terms = k_max;
  c.norm_s = operator_norm(s);
  if (c.norm_s >= 1.0) return c;
  c.applicable = true;
  const auto n = s.rows();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd inv = (id + s).partialPivLu().inverse();
  Eigen::MatrixXd term = id, sum = id;
  for (std::size_t k = 1; k <= k_max; ++k) {
    term = -(term * s);
    sum += term;
  }
  // The residual is rounding-level with clustered singular values; power iteration stalls there.
  c.error = Eigen::BDCSVD<Eigen::MatrixXd>(inv - sum).singularValues()[0];
  c.bound = std::pow(c.norm_s, static_cast<double>(k_max + 1)) / (1.0 - c.norm_s);
  return c;
}

inline void write_defect_csv(std::ostream& os, const PerturbedOperator& op, std::span<const double> lambdas) {
  const auto old = os.precision(17);
  os << "index,lambda,lambda_dprime,defect,c_measured\n";
  for (std::size_t i = 0; i < op.n; ++i) {
    const auto d = quasimode_defect(op, i);
    os << i << ',' << lambdas[i] << ',' << d.lambda_dprime << ',' << d.defect << ',' << d.c_measured << '\n';
  }
  os.precision(old);
}

}  // namespace quelab
