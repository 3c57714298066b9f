#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "quelab/errors.hpp"
#include "quelab/geometry.hpp"
#include "quelab/parallel.hpp"
#include "quelab/rng.hpp"
#include "quelab/spectrum.hpp"
#include "quelab/stats.hpp"

namespace quelab {

/// half_generator: Brownian motion generated by (1/2) Laplace, kernels exp(-|x-y|^2 / 2t).
/// full_generator: the semigroup exp(t Laplace), kernels exp(-|x-y|^2 / 4t).
enum class Convention { half_generator, full_generator };

inline const char* to_string(Convention c) {
  return c == Convention::half_generator ? "half" : "full";
}

/// The same physical kernel at half-generator time t_half is reached at full-generator
/// time t_half / 2.
inline double to_full_time(double t_half) { return 0.5 * t_half; }
inline double to_half_time(double t_full) { return 2.0 * t_full; }

/// Free-space Gaussian kernel in dimension d.
inline double free_kernel(double t, Point x, Point y, Convention c = Convention::half_generator, int d = 2) {
  if (!(t > 0)) throw DomainError("free_kernel needs t > 0");
  const double r2 = dot(x - y, x - y);
  const double s = c == Convention::half_generator ? t : 2.0 * t;
  return std::pow(2.0 * std::numbers::pi * s, -0.5 * d) * std::exp(-r2 / (2.0 * s));
}

struct ExitSample {
  Point start;
  double tau = 0.0;
  Point exit_point;
  double dt = 0.0;
  bool bridge_corrected = false;
  bool exited = true;  // false when the horizon was reached first; tau is then the horizon
  std::size_t steps = 0;
  SeedKey seed;
};

namespace detail {

// Last parameter s in [0, 1] with a + s (b - a) inside the domain, by bisection.
inline double exit_fraction(const Domain& d, Point a, Point b) {
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (d.contains(a + mid * (b - a)))
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

}  // namespace detail

/// Euler walk with increments sqrt(dt) N(0, I) started at x until it leaves the domain.
///
/// With `bridge`, each interior-to-interior step is also killed with the half-plane
/// Brownian-bridge crossing probability exp(-2 d1 d2 / dt) against the nearest faces of
/// its endpoints; such exits are placed on the face at the step midpoint. `horizon`
/// stops the walk early when only tau <= horizon matters.
inline ExitSample sample_exit(const Domain& d, Point x, double dt, SeedKey seed, bool bridge,
                              std::optional<double> horizon = std::nullopt) {
  if (!d.contains(x)) throw DomainError("sample_exit: start point outside domain");
  if (!(dt > 0)) throw DomainError("sample_exit: dt must be positive");
  const double cap = 100.0 * d.diameter() * d.diameter();
  const double sd = std::sqrt(dt);
  NormalSampler normal(seed);
  ExitSample e;
  e.start = x;
  e.dt = dt;
  e.bridge_corrected = bridge;
  e.seed = seed;
  Point p = x;
  double t = 0.0;
  for (;;) {
    if (horizon && t >= *horizon) {
      e.exited = false;
      e.tau = t;
      e.exit_point = p;
      return e;
    }
    if (t > cap) throw RunawayPathError("sample_exit: path exceeded the time cap 100 diam^2");
    const double gx = normal(), gy = normal();
    const Point q{p.x + sd * gx, p.y + sd * gy};
    ++e.steps;
    if (!d.contains(q)) {
      const double s = detail::exit_fraction(d, p, q);
      e.tau = t + s * dt;
      e.exit_point = p + s * (q - p);
      return e;
    }
    if (bridge) {
      const HalfPlane fp = d.nearest_face(p);
      const HalfPlane fq = d.nearest_face(q);
      double survive = 1.0 - std::exp(-2.0 * std::max(0.0, fp.depth(p)) * std::max(0.0, fp.depth(q)) / dt);
      HalfPlane hit = fp;
      if (!(fq.anchor == fp.anchor && fq.outward_normal == fp.outward_normal)) {
        const double pq = std::exp(-2.0 * std::max(0.0, fq.depth(p)) * std::max(0.0, fq.depth(q)) / dt);
        if (pq > 1.0 - survive) hit = fq;
        survive *= 1.0 - pq;
      }
      if (uniform01(normal.engine()) >= survive) {
        e.tau = t + 0.5 * dt;
        e.exit_point = hit.project(p + 0.5 * (q - p));
        return e;
      }
    }
    p = q;
    t += dt;
  }
}

struct KernelEstimate {
  double t = 0.0;
  Point x, y;
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
  Convention convention = Convention::half_generator;
};

struct McOptions {
  double dt = 1e-4;
  bool bridge = true;
  unsigned workers = 0;  // 0: default_workers()
};

/// E^x[rho(t - tau, B_tau, y); tau <= t], the gap between the free kernel rho and the
/// Dirichlet kernel p at (t, x, y), in the half-generator convention. Path k uses the
/// stream seed.with_replica(k).
inline KernelEstimate defect_estimate(const Domain& d, double t, Point x, Point y, std::size_t n_paths, SeedKey seed,
                                      const McOptions& opt = {}) {
  if (n_paths == 0) throw DomainError("defect_estimate: n_paths must be positive");
  if (!(t > 0)) throw DomainError("defect_estimate: t must be positive");
  if (!d.contains(x) || !d.contains(y)) throw DomainError("defect_estimate: x and y must lie inside the domain");
  const unsigned workers = opt.workers ? opt.workers : default_workers();
  const MeanAccumulator acc = chunked_reduce<MeanAccumulator>(
      n_paths, 512, workers,
      [&](std::size_t b, std::size_t e) {
        MeanAccumulator part;
        for (std::size_t k = b; k < e; ++k) {
          const ExitSample ex = sample_exit(d, x, opt.dt, seed.with_replica(k), opt.bridge, t);
          double v = 0.0;
          if (ex.exited && ex.tau < t) v = free_kernel(t - ex.tau, ex.exit_point, y);
          part.add(v);
        }
        return part;
      },
      MeanAccumulator{}, [](MeanAccumulator& a, const MeanAccumulator& p) { a.merge(p); });
  KernelEstimate k;
  k.t = t;
  k.x = x;
  k.y = y;
  k.value = acc.mean();
  k.std_error = acc.stderr_of_mean();
  k.n_paths = n_paths;
  return k;
}

/// Dirichlet heat kernel p(t, x, y) = rho(t, x, y) - defect. `t` is read in the given
/// convention; the walk always runs in half-generator time.
inline KernelEstimate dirichlet_kernel_mc(const Domain& d, double t, Point x, Point y, std::size_t n_paths,
                                          SeedKey seed, const McOptions& opt = {},
                                          Convention c = Convention::half_generator) {
  const double th = c == Convention::half_generator ? t : to_half_time(t);
  KernelEstimate k = defect_estimate(d, th, x, y, n_paths, seed, opt);
  k.value = free_kernel(th, x, y) - k.value;
  k.t = t;
  k.convention = c;
  return k;
}

namespace detail {

inline double time_factor(Convention c) { return c == Convention::half_generator ? 0.5 : 1.0; }

// sup |u_i| over the spectrum: exact on rectangles, largest nodal value on a grid.
inline double eigenfunction_sup(const Spectrum& s) {
  if (s.backend() == Backend::analytic) return 2.0 / std::sqrt(s.domain().volume());
  double m = 0.0;
  for (const auto& p : s.pairs()) m = std::max(m, p.values.cwiseAbs().maxCoeff());
  return m;
}

// Bound on sum_{lambda > L} exp(-c lambda^2 t) using N(lambda) ~ |Omega| lambda^2 / 4 pi.
inline double weyl_tail(double volume, double c, double t, double cutoff) {
  return volume / (4.0 * std::numbers::pi) * std::exp(-c * t * cutoff * cutoff) / (c * t);
}

}  // namespace detail

struct SpectralValue {
  double value = 0.0;
  double truncation_bound = 0.0;
};

/// sum_i exp(-c lambda_i^2 t) u_i(x) u_i(y), c = 1/2 (half) or 1 (full).
inline SpectralValue eigen_kernel(const Spectrum& s, double t, Point x, Point y,
                                  Convention conv = Convention::half_generator) {
  if (!(t > 0)) throw DomainError("eigen_kernel needs t > 0");
  const double c = detail::time_factor(conv);
  KahanSum acc;
  for (std::size_t i = 0; i < s.size(); ++i) acc.add(std::exp(-c * s[i].lambda * s[i].lambda * t) * s.eval(i, x) * s.eval(i, y));
  const double sup = detail::eigenfunction_sup(s);
  return {acc.value(), sup * sup * detail::weyl_tail(s.domain().volume(), c, t, s.lambda_max())};
}

/// Integral of u_i over the domain.
inline double eigenfunction_integral(const Spectrum& s, std::size_t i) {
  if (s.backend() == Backend::analytic) {
    const auto& r = std::get<Rectangle>(s.domain().shape());
    const int m = s[i].mode.m, n = s[i].mode.n;
    if (m % 2 == 0 || n % 2 == 0) return 0.0;
    return 2.0 / std::sqrt(r.lx * r.ly) * (2.0 * r.lx / (m * std::numbers::pi)) * (2.0 * r.ly / (n * std::numbers::pi));
  }
  return s.grid()->weight() * s[i].values.sum();
}

/// P^x(tau > t) = sum_i exp(-lambda_i^2 t / 2) u_i(x) int u_i, half-generator time.
inline SpectralValue survival(const Spectrum& s, Point x, double t) {
  if (!(t > 0)) throw DomainError("survival needs t > 0");
  KahanSum acc;
  for (std::size_t i = 0; i < s.size(); ++i)
    acc.add(std::exp(-0.5 * s[i].lambda * s[i].lambda * t) * s.eval(i, x) * eigenfunction_integral(s, i));
  const double sup = detail::eigenfunction_sup(s);
  const double vol = s.domain().volume();
  return {acc.value(), sup * std::sqrt(vol) * detail::weyl_tail(vol, 0.5, t, s.lambda_max())};
}

constexpr double kTraceRelTail = 1e-10;

/// Cutoff at which exp(-t lambda^2) < 1e-12 and the Weyl tail bound is below
/// 1e-10 of the trace (full-generator time).
inline double required_cutoff(double t, double volume) {
  const double approx_trace = std::max(volume / (4.0 * std::numbers::pi * t), 1e-300);
  double l = std::sqrt(std::log(1e12) / t);
  while (std::exp(-t * l * l) >= 1e-12 || detail::weyl_tail(volume, 1.0, t, l) >= kTraceRelTail * approx_trace * 0.5)
    l *= 1.01;
  return l;
}

/// Tr exp(t Laplace_D) = sum exp(-t lambda_i^2), full-generator time.
inline double heat_trace(const Spectrum& s, double t) {
  if (!(t > 0)) throw DomainError("heat_trace needs t > 0");
  const double lmax = s.lambda_max();
  KahanSum acc;
  for (const auto& p : s.pairs()) acc.add(std::exp(-t * p.lambda * p.lambda));
  const double sum = acc.value();
  const double tail = detail::weyl_tail(s.domain().volume(), 1.0, t, lmax);
  if (std::exp(-t * lmax * lmax) >= 1e-12 || tail >= kTraceRelTail * sum)
    throw TruncationError("heat_trace: spectrum cutoff too low for this t", required_cutoff(t, s.domain().volume()));
  return sum;
}

/// N(lambda) = #{i : lambda_i <= lambda}.
inline std::size_t weyl_count(const Spectrum& s, double lam) {
  if (lam > s.lambda_max()) throw TruncationError("weyl_count beyond the spectrum cutoff", lam);
  const auto& p = s.pairs();
  return static_cast<std::size_t>(
      std::upper_bound(p.begin(), p.end(), lam, [](double v, const EigenPair& e) { return v < e.lambda; }) - p.begin());
}

/// |J_{eps,lambda}| = #{i : lambda <= lambda_i < (1 + eps) lambda}.
inline std::size_t window_count(const Spectrum& s, double lam, double eps) {
  if (lam * (1 + eps) > s.lambda_max()) throw TruncationError("window_count beyond the spectrum cutoff", lam * (1 + eps));
  const auto& p = s.pairs();
  auto lower = [&](double v) {
    return std::lower_bound(p.begin(), p.end(), v, [](const EigenPair& e, double x) { return e.lambda < x; });
  };
  return static_cast<std::size_t>(lower(lam * (1 + eps)) - lower(lam));
}

struct TauberianReport {
  double exponent = 0.0;  // slope of log N against log lambda^2
  double exponent_stderr = 0.0;
  double heat_coefficient = 0.0;  // A in Tr ~ A t^(-d/2)
  double constant_ratio = 0.0;    // A tau^(d/2) / N(tau) at the largest tested tau
  double expected_ratio = 1.0;    // Gamma(d/2 + 1)
  bool exponent_ok = false;
  bool ratio_ok = false;
};

/// Regresses log N(lambda) on log lambda^2 over [lambda_max / 4, lambda_max] and compares
/// the constant with the heat-trace coefficient |Omega| / (4 pi)^(d/2).
inline TauberianReport tauberian_check(const Spectrum& s, double min_lambda_max = 200.0, double exponent_tol = 0.05,
                                       double ratio_tol = 0.05) {
  if (s.lambda_max() < min_lambda_max) throw DomainError("tauberian_check: spectrum cutoff too low");
  const int d = 2;
  const double hi = s.lambda_max(), lo = 0.25 * hi;
  std::vector<double> lx, ly;
  const int samples = 40;
  for (int k = 0; k < samples; ++k) {
    const double lam = lo * std::pow(hi / lo, static_cast<double>(k) / (samples - 1));
    const auto n = weyl_count(s, lam);
    if (n == 0) continue;
    lx.push_back(std::log(lam * lam));
    ly.push_back(std::log(static_cast<double>(n)));
  }
  if (lx.size() < 3) throw EmptySpectrumError("tauberian_check: too few nonzero counts");
  const LinearFit fit = fit_line(lx, ly);
  TauberianReport r;
  r.exponent = fit.slope;
  r.exponent_stderr = fit.slope_stderr;
  r.heat_coefficient = s.domain().volume() / std::pow(4.0 * std::numbers::pi, 0.5 * d);
  r.expected_ratio = boost::math::tgamma(0.5 * d + 1.0);
  r.constant_ratio = r.heat_coefficient * std::pow(hi * hi, 0.5 * d) / static_cast<double>(weyl_count(s, hi));
  r.exponent_ok = std::abs(r.exponent - 0.5 * d) <= exponent_tol;
  r.ratio_ok = std::abs(r.constant_ratio / r.expected_ratio - 1.0) <= ratio_tol;
  return r;
}

inline void write_kernel_csv(std::ostream& os, std::span<const KernelEstimate> rows, std::uint64_t seed) {
  const auto old = os.precision(17);
  os << "t,x1,x2,y1,y2,value,stderr,n_paths,convention,seed\n";
  for (const auto& k : rows)
    os << k.t << ',' << k.x.x << ',' << k.x.y << ',' << k.y.x << ',' << k.y.y << ',' << k.value << ',' << k.std_error << ','
       << k.n_paths << ',' << to_string(k.convention) << ',' << seed << '\n';
  os.precision(old);
}

}  // namespace quelab
