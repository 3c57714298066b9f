#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "quelab/errors.hpp"

namespace quelab {

struct NormOptions {
  double tolerance = 1e-10;
  std::size_t max_iterations = 10000;
};

/// Carries the last Rayleigh quotient when power iteration does not settle.
class NormConvergenceError : public ConvergenceError {
 public:
  NormConvergenceError(double last_estimate, double change)
      : ConvergenceError("operator_norm: power iteration did not converge", change), last_(last_estimate) {}
  double last_estimate() const noexcept { return last_; }

 private:
  double last_;
};

/// Spectral norm ||M||_2 by power iteration on M^T M.
inline double operator_norm(const Eigen::MatrixXd& m, const NormOptions& opt = {}) {
  if (m.rows() == 0 || m.cols() == 0) return 0.0;
  // Deterministic start with full support.
  Eigen::VectorXd v(m.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3);
  v.normalize();
  double est = 0.0;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    const Eigen::VectorXd mv = m * v;
    const Eigen::VectorXd w = m.transpose() * mv;
    const double rq = mv.squaredNorm();  // v^T M^T M v with |v| = 1
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
    if (it > 0 && std::abs(rq - est) <= opt.tolerance * rq) return std::sqrt(rq);
    est = rq;
  }
  throw NormConvergenceError(std::sqrt(est), opt.tolerance);
}

/// ||diag(<mu>^w) M diag(<mu>^-v)||_2 with <mu> = (1 + mu^2)^(1/2): the norm of M
/// from F^v to F^w on the diagonal scale defined by mu.
inline double weighted_norm(const Eigen::MatrixXd& m, const Eigen::VectorXd& mu, double w, double v,
                            const NormOptions& opt = {}) {
  if (mu.size() != m.rows() || m.rows() != m.cols()) throw ShapeError("weighted_norm: weights do not match matrix");
  Eigen::VectorXd jb = (1.0 + mu.array().square()).sqrt();
  const Eigen::VectorXd left = jb.array().pow(w);
  const Eigen::VectorXd right = jb.array().pow(-v);
  const Eigen::MatrixXd scaled = left.asDiagonal() * m * right.asDiagonal();
  return operator_norm(scaled, opt);
}

inline double hilbert_schmidt_norm(const Eigen::MatrixXd& m) { return m.norm(); }

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns
  std::size_t sweeps = 0;
};

/// Cyclic Jacobi eigensolver for a small symmetric matrix.
inline SymmetricEigen jacobi_eigen(Eigen::MatrixXd a, double tol = 1e-15, std::size_t max_sweeps = 100) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw ShapeError("jacobi_eigen: matrix not square");
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double scale = std::max(a.norm(), 1e-300);
  std::size_t sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= tol * scale) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  out.sweeps = sweep;
  return out;
}

}  // namespace quelab
