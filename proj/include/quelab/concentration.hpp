#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "quelab/errors.hpp"
#include "quelab/linalg.hpp"
#include "quelab/observables.hpp"
#include "quelab/parallel.hpp"
#include "quelab/rng.hpp"
#include "quelab/spectrum.hpp"
#include "quelab/stats.hpp"

namespace quelab {

struct TailReport {
  std::size_t n = 0;
  double t = 0.0;
  std::size_t replicas = 0;
  double empirical_tail = 0.0;
  double tail_stderr = 0.0;
  double bound_value = NAN;  // 2 exp(-c min(t^2/||M||_HS^2, t/||M||)) with fitted c
  double fitted_c = NAN;
  SeedKey seed;
};

namespace detail {

inline void check_replicas(std::size_t replicas) {
  if (replicas < 100) throw DomainError("tail estimates need at least 100 replicas");
}

inline double tail_fraction(std::span<const double> dev, double t) {
  std::size_t hits = 0;
  for (double d : dev) hits += std::abs(d) >= t ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(dev.size());
}

// Replica r of a sweep draws from the stream (master, label, r).
template <class Draw>
std::vector<double> replicate(std::size_t replicas, unsigned workers, Draw draw) {
  return chunked_reduce<std::vector<double>>(
      replicas, 256, workers,
      [&](std::size_t b, std::size_t e) {
        std::vector<double> out;
        out.reserve(e - b);
        for (std::size_t r = b; r < e; ++r) out.push_back(draw(r));
        return out;
      },
      std::vector<double>{}, [](std::vector<double>& acc, std::vector<double>& part) {
        acc.insert(acc.end(), part.begin(), part.end());
      });
}

}  // namespace detail

/// Samples of <A v_1, v_1> - B for fresh Haar rotations of a block with element matrix H,
/// B = tr(H)/n. Row 1 of a Haar matrix is uniform on the sphere, drawn here as g/|g|.
inline std::vector<double> rotation_deviations(const Eigen::MatrixXd& h, std::size_t replicas, SeedKey seed,
                                               unsigned workers = default_workers()) {
  const auto n = h.rows();
  if (n < 2 || h.cols() != n) throw DomainError("rotation deviations need a square block with n >= 2");
  const double b = h.trace() / static_cast<double>(n);
  return detail::replicate(replicas, workers, [&](std::size_t r) {
    NormalSampler normal(seed.with_replica(r));
    Eigen::VectorXd v(n);
    for (Eigen::Index k = 0; k < n; ++k) v[k] = normal();
    v.normalize();
    return v.dot(h * v) - b;
  });
}

inline TailReport rotation_tail(const Spectrum& s, std::span<const std::size_t> members, const Observable& a, double t,
                                std::size_t replicas, SeedKey seed, unsigned workers = default_workers()) {
  detail::check_replicas(replicas);
  const Eigen::MatrixXd h = ElementEngine(s, a).block(members);
  const auto dev = rotation_deviations(h, replicas, seed, workers);
  TailReport rep;
  rep.n = members.size();
  rep.t = t;
  rep.replicas = replicas;
  rep.empirical_tail = detail::tail_fraction(dev, t);
  rep.tail_stderr = binomial_stderr(rep.empirical_tail, replicas);
  rep.seed = seed;
  return rep;
}

enum class Distribution { gaussian, rademacher };

/// Samples of R - E R with R = sum m_ij X_i X_j, X i.i.d. with unit variance.
inline std::vector<double> hanson_wright_samples(const Eigen::MatrixXd& m, Distribution dist, std::size_t replicas,
                                                 SeedKey seed, unsigned workers = default_workers()) {
  if (m.rows() != m.cols()) throw ShapeError("hanson_wright: matrix not square");
  const auto n = m.rows();
  const double mean = m.trace();
  return detail::replicate(replicas, workers, [&](std::size_t r) {
    NormalSampler normal(seed.with_replica(r));
    Eigen::VectorXd x(n);
    for (Eigen::Index k = 0; k < n; ++k)
      x[k] = dist == Distribution::gaussian ? normal() : ((normal.engine()() >> 63) ? 1.0 : -1.0);
    return x.dot(m * x) - mean;
  });
}

/// min(t^2 / ||M||_HS^2, t / ||M||_2), the exponent shape in the Hanson-Wright bound.
inline double hanson_wright_exponent(double t, double hs, double op) {
  if (hs == 0.0 || op == 0.0) return std::numeric_limits<double>::infinity();
  return std::min(t * t / (hs * hs), t / op);
}

struct HansonWrightFit {
  std::vector<TailReport> reports;
  double c = NAN;
  double hs_norm = 0.0;
  double op_norm = 0.0;
  bool bound_holds = true;  // empirical tail <= fitted bound at every t
};

/// Tails at several thresholds from one sample set, with the largest c such that
/// tail(t) <= 2 exp(-c min(t^2/||M||_HS^2, t/||M||)) at every tested t.
inline HansonWrightFit hanson_wright_sweep(const Eigen::MatrixXd& m, Distribution dist, std::span<const double> ts,
                                           std::size_t replicas, SeedKey seed, unsigned workers = default_workers()) {
  detail::check_replicas(replicas);
  HansonWrightFit fit;
  fit.hs_norm = hilbert_schmidt_norm(m);
  fit.op_norm = operator_norm(m);
  const auto dev = hanson_wright_samples(m, dist, replicas, seed, workers);
  double c = std::numeric_limits<double>::infinity();
  for (double t : ts) {
    TailReport rep;
    rep.n = static_cast<std::size_t>(m.rows());
    rep.t = t;
    rep.replicas = replicas;
    rep.empirical_tail = detail::tail_fraction(dev, t);
    rep.tail_stderr = binomial_stderr(rep.empirical_tail, replicas);
    rep.seed = seed;
    const double e = hanson_wright_exponent(t, fit.hs_norm, fit.op_norm);
    if (rep.empirical_tail > 0 && std::isfinite(e)) c = std::min(c, -std::log(rep.empirical_tail / 2.0) / e);
    fit.reports.push_back(rep);
  }
  fit.c = c;
  for (auto& rep : fit.reports) {
    rep.fitted_c = c;
    const double e = hanson_wright_exponent(rep.t, fit.hs_norm, fit.op_norm);
    rep.bound_value = std::isfinite(c) ? 2.0 * std::exp(-c * e) : 0.0;
    if (std::isfinite(c)) fit.bound_holds = fit.bound_holds && rep.empirical_tail <= rep.bound_value * (1 + 1e-12);
  }
  return fit;
}

inline TailReport hanson_wright_tail(const Eigen::MatrixXd& m, Distribution dist, double t, std::size_t replicas,
                                     SeedKey seed, unsigned workers = default_workers()) {
  const double ts[1] = {t};
  return hanson_wright_sweep(m, dist, ts, replicas, seed, workers).reports.front();
}

struct NormIdentities {
  std::size_t n = 0;
  double sup = 0.0;
  double op_norm = 0.0;  // ||H||_2
  double hs_norm = 0.0;  // ||H||_HS
  bool op_ok = false;    // ||H||_2 <= sup|f| sup|a|
  bool hs_ok = false;    // ||H||_HS <= sup|f| sup|a| sqrt(n)
};

/// Checks ||H|| <= ||A|| and ||H||_HS <= ||A|| sqrt(n) for h_jk = <A u_j, u_k>.
inline NormIdentities norm_identities_check(const Spectrum& s, std::span<const std::size_t> members,
                                            const Observable& a) {
  const Eigen::MatrixXd h = ElementEngine(s, a).block(members);
  NormIdentities r;
  r.n = members.size();
  r.sup = a.sup_bound();
  // H is symmetric with clustered eigenvalues (e.g. +-1/2 pairs), where power iteration
  // crawls; the dense symmetric solver gives ||H||_2 = max |eigenvalue| directly.
  r.op_norm = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().maxCoeff();
  r.hs_norm = hilbert_schmidt_norm(h);
  // Quadrature leaves ~1e-12 slack on exact equalities such as f = 1.
  const double slack = 1e-9;
  r.op_ok = r.op_norm <= r.sup * (1 + slack);
  r.hs_ok = r.hs_norm <= r.sup * std::sqrt(static_cast<double>(r.n)) * (1 + slack);
  return r;
}

/// E r^2 for w = r q with q uniform on the sphere and r = |g|, g standard Gaussian in R^n.
inline MeanAccumulator radial_second_moment(std::size_t n, std::size_t replicas, SeedKey seed,
                                            unsigned workers = default_workers()) {
  const auto vals = detail::replicate(replicas, workers, [&](std::size_t r) {
    NormalSampler normal(seed.with_replica(r));
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double g = normal();
      s += g * g;
    }
    return s;
  });
  MeanAccumulator acc;
  for (double v : vals) acc.add(v);
  return acc;
}

inline void write_tail_csv(std::ostream& os, std::span<const TailReport> rows) {
  const auto old = os.precision(17);
  os << "n,t,replicas,tail,fitted_c,bound\n";
  for (const auto& r : rows)
    os << r.n << ',' << r.t << ',' << r.replicas << ',' << r.empirical_tail << ',' << r.fitted_c << ',' << r.bound_value
       << '\n';
  os.precision(old);
}

}  // namespace quelab
