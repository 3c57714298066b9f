#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "quelab/errors.hpp"
#include "quelab/geometry.hpp"
#include "quelab/quadrature.hpp"
#include "quelab/rng.hpp"
#include "quelab/spectrum.hpp"

namespace quelab {

enum class ObservableKind { position, momentum, tensor };

inline const char* to_string(ObservableKind k) {
  switch (k) {
    case ObservableKind::position: return "position";
    case ObservableKind::momentum: return "momentum";
    case ObservableKind::tensor: return "tensor";
  }
  return "?";
}

/// Multiplication observable f(x), direction multiplier a(xi/|xi|), or their product.
///
/// `a` is called with a unit vector (c, s). When `fx` and `fy` are both set, f is the
/// product fx(x) fy(y) and rectangle matrix elements reduce to 1-D integrals.
struct Observable {
  ObservableKind kind = ObservableKind::position;
  std::string label;
  std::function<double(Point)> f;
  std::function<double(double)> fx, fy;
  std::function<double(double, double)> a;
  double f_sup = 1.0;
  double a_sup = 1.0;
  /// Extra 1-D quadrature panels needed to resolve f (roughly its frequency content).
  std::size_t bandwidth = 8;
  /// Panel counts are rounded up to a multiple of this, so step breakpoints land on panel edges.
  std::size_t align = 1;

  bool separable() const { return static_cast<bool>(fx) && static_cast<bool>(fy); }
  bool has_position() const { return kind != ObservableKind::momentum; }
  bool has_momentum() const { return kind != ObservableKind::position; }
  double sup_bound() const { return (has_position() ? f_sup : 1.0) * (has_momentum() ? a_sup : 1.0); }
  double eval_f(Point p) const { return has_position() ? f(p) : 1.0; }
  double eval_a(double c, double s) const { return has_momentum() ? a(c, s) : 1.0; }
};

namespace observables {

inline Observable position(std::string label, std::function<double(Point)> f, double sup) {
  Observable o;
  o.kind = ObservableKind::position;
  o.label = std::move(label);
  o.f = std::move(f);
  o.f_sup = sup;
  return o;
}

inline Observable separable(std::string label, std::function<double(double)> fx, std::function<double(double)> fy,
                            double sup) {
  Observable o;
  o.kind = ObservableKind::position;
  o.label = std::move(label);
  o.f = [fx, fy](Point p) { return fx(p.x) * fy(p.y); };
  o.fx = std::move(fx);
  o.fy = std::move(fy);
  o.f_sup = sup;
  return o;
}

inline Observable momentum(std::string label, std::function<double(double, double)> a, double sup) {
  Observable o;
  o.kind = ObservableKind::momentum;
  o.label = std::move(label);
  o.a = std::move(a);
  o.a_sup = sup;
  return o;
}

inline Observable tensor(const Observable& pos, const Observable& mom) {
  if (pos.kind != ObservableKind::position || mom.kind != ObservableKind::momentum)
    throw DomainError("tensor observable needs a position and a momentum factor");
  Observable o = pos;
  o.kind = ObservableKind::tensor;
  o.label = pos.label + "*" + mom.label;
  o.a = mom.a;
  o.a_sup = mom.a_sup;
  return o;
}

inline Observable constant(double c = 1.0) {
  return separable(
      "const", [c](double) { return c; }, [](double) { return 1.0; }, std::abs(c));
}

/// cos(2 pi k x / period).
inline Observable cos_x(int k = 1, double period = 1.0) {
  Observable o = separable(
      "cos_x" + std::to_string(k), [k, period](double x) { return std::cos(2 * std::numbers::pi * k * x / period); },
      [](double) { return 1.0; }, 1.0);
  o.bandwidth = static_cast<std::size_t>(2 * std::abs(k)) + 8;
  return o;
}

inline Observable cos_y(int k = 1, double period = 1.0) {
  Observable o = separable(
      "cos_y" + std::to_string(k), [](double) { return 1.0; },
      [k, period](double y) { return std::cos(2 * std::numbers::pi * k * y / period); }, 1.0);
  o.bandwidth = static_cast<std::size_t>(2 * std::abs(k)) + 8;
  return o;
}

/// Smooth bump b(x) b(y), b supported on (lo, hi): exp(1 - 1/(1 - r^2)) with r the
/// scaled distance from the midpoint. Peak value 1.
inline Observable bump(double lo = 0.25, double hi = 0.75) {
  auto b = [lo, hi](double x) {
    const double r = (2 * x - lo - hi) / (hi - lo);
    return std::abs(r) < 1 ? std::exp(1.0 - 1.0 / (1.0 - r * r)) : 0.0;
  };
  Observable o = separable("bump", b, b, 1.0);
  o.bandwidth = 32;
  return o;
}

/// +-1 step function sx(x) sy(y) on a cells x cells partition of [0, lx] x [0, ly],
/// with random signs per row and column.
inline Observable random_step(std::uint64_t seed, std::size_t cells = 4, double lx = 1.0, double ly = 1.0) {
  CounterRng rng(SeedKey{seed, 0x57e9, 0});
  std::vector<double> sx(cells), sy(cells);
  for (auto& v : sx) v = uniform01(rng) < 0.5 ? -1.0 : 1.0;
  for (auto& v : sy) v = uniform01(rng) < 0.5 ? -1.0 : 1.0;
  auto pick = [cells](const std::vector<double>& s, double t, double len) {
    const auto k = static_cast<std::ptrdiff_t>(std::floor(t / len * static_cast<double>(cells)));
    return s[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(cells) - 1))];
  };
  Observable o = separable(
      "step" + std::to_string(seed), [=](double x) { return pick(sx, x, lx); },
      [=](double y) { return pick(sy, y, ly); }, 1.0);
  o.align = cells;
  return o;
}

/// a(xi) = xi_1^2 / |xi|^2.
inline Observable xi1_squared() {
  return momentum("xi1sq", [](double c, double) { return c * c; }, 1.0);
}

}  // namespace observables

namespace detail {

inline std::size_t round_up(std::size_t v, std::size_t align) {
  return align <= 1 ? v : (v + align - 1) / align * align;
}

// Quadrature nodes and the sine table sin(m pi x / len), m = 0..mmax.
struct SineTable {
  quad::NodeSet nodes;
  Eigen::MatrixXd s;  // nodes x (mmax + 1)

  SineTable(double len, int mmax, std::size_t extra, std::size_t align) {
    const std::size_t panels = round_up(static_cast<std::size_t>(mmax) + 4 + extra, align);
    nodes = quad::nodes(0.0, len, panels);
    s.resize(static_cast<Eigen::Index>(nodes.x.size()), mmax + 1);
    for (std::size_t k = 0; k < nodes.x.size(); ++k)
      for (int m = 0; m <= mmax; ++m)
        s(static_cast<Eigen::Index>(k), m) = std::sin(m * std::numbers::pi * nodes.x[k] / len);
  }
};

// (2/len) int g sin(m pi x/len) sin(m' pi x/len) dx for all m, m'.
inline Eigen::MatrixXd sine_moments(const SineTable& t, const std::function<double(double)>& g, double len) {
  Eigen::VectorXd wg(static_cast<Eigen::Index>(t.nodes.x.size()));
  for (std::size_t k = 0; k < t.nodes.x.size(); ++k) wg[static_cast<Eigen::Index>(k)] = t.nodes.w[k] * g(t.nodes.x[k]);
  return (2.0 / len) * (t.s.transpose() * wg.asDiagonal() * t.s);
}

}  // namespace detail

/// Matrix elements <A u_i, u_j> of one observable against one spectrum.
///
/// Analytic spectra: separable position factors use precomputed 1-D moment tables,
/// others a tensor Gauss-Legendre rule. Momentum factors use the four plane waves
/// (+-m pi/lx, +-n pi/ly) of each mode: the diagonal symbol value is their average and
/// off-diagonal momentum elements vanish; the part of a that is not even under both
/// reflections is dropped and bounded by `dropped_bound`. Grid spectra support only
/// position observables.
class ElementEngine {
 public:
  ElementEngine(const Spectrum& s, const Observable& a) : s_(&s), a_(a) {
    if (s.empty()) throw EmptySpectrumError("matrix elements of an empty spectrum");
    if (s.backend() == Backend::grid) {
      if (a.has_momentum())
        throw UnsupportedBackendError("momentum observables need the analytic rectangle spectrum");
      const GridInfo& g = *s.grid();
      wf_.resize(static_cast<Eigen::Index>(g.size()));
      for (std::size_t k = 0; k < g.size(); ++k) wf_[static_cast<Eigen::Index>(k)] = g.weight() * a.f(g.nodes[k]);
      return;
    }
    const auto& r = std::get<Rectangle>(s.domain().shape());
    lx_ = r.lx;
    ly_ = r.ly;
    int mmax = 1, nmax = 1;
    for (const auto& p : s.pairs()) {
      mmax = std::max(mmax, p.mode.m);
      nmax = std::max(nmax, p.mode.n);
    }
    if (a.has_momentum()) {
      abar_.resize(s.size());
      dropped_.resize(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double kx = s[i].mode.m / lx_, ky = s[i].mode.n / ly_;
        const double len = std::hypot(kx, ky);
        const double c = kx / len, sn = ky / len;
        const double v[4] = {a.a(c, sn), a.a(-c, sn), a.a(c, -sn), a.a(-c, -sn)};
        const double mean = 0.25 * (v[0] + v[1] + v[2] + v[3]);
        double dev = 0.0;
        for (double x : v) dev = std::max(dev, std::abs(x - mean));
        abar_[i] = mean;
        dropped_[i] = dev;
      }
    }
    if (!a.has_position()) return;
    if (a.separable()) {
      const detail::SineTable tx(lx_, mmax, a.bandwidth, a.align);
      ix_ = detail::sine_moments(tx, a.fx, lx_);
      const detail::SineTable ty(ly_, nmax, a.bandwidth, a.align);
      iy_ = detail::sine_moments(ty, a.fy, ly_);
    } else {
      tx_.emplace(lx_, mmax, a.bandwidth, a.align);
      ty_.emplace(ly_, nmax, a.bandwidth, a.align);
      const auto px = static_cast<Eigen::Index>(tx_->nodes.x.size());
      const auto py = static_cast<Eigen::Index>(ty_->nodes.x.size());
      wfw_.resize(px, py);
      for (Eigen::Index u = 0; u < px; ++u)
        for (Eigen::Index v = 0; v < py; ++v)
          wfw_(u, v) = tx_->nodes.w[static_cast<std::size_t>(u)] * ty_->nodes.w[static_cast<std::size_t>(v)] *
                       a.f(Point{tx_->nodes.x[static_cast<std::size_t>(u)], ty_->nodes.x[static_cast<std::size_t>(v)]});
    }
  }

  const Spectrum& spectrum() const { return *s_; }
  const Observable& observable() const { return a_; }

  double position_element(std::size_t i, std::size_t j) const {
    if (!a_.has_position()) return i == j ? 1.0 : 0.0;
    const Spectrum& s = *s_;
    if (s.backend() == Backend::grid) return (wf_.array() * s[i].values.array() * s[j].values.array()).sum();
    const Mode mi = s[i].mode, mj = s[j].mode;
    if (a_.separable()) return ix_(mi.m, mj.m) * iy_(mi.n, mj.n);
    const Eigen::VectorXd gx = tx_->s.col(mi.m).cwiseProduct(tx_->s.col(mj.m));
    const Eigen::VectorXd gy = ty_->s.col(mi.n).cwiseProduct(ty_->s.col(mj.n));
    return 4.0 / (lx_ * ly_) * gx.dot(wfw_ * gy);
  }

  /// Plane-wave average of the direction factor for mode i (1 without a momentum factor).
  double symbol_average(std::size_t i) const { return a_.has_momentum() ? abar_.at(i) : 1.0; }

  /// Bound on the dropped reflection-odd part of the symbol for mode i.
  double dropped_bound(std::size_t i) const { return a_.has_momentum() ? dropped_.at(i) * a_.f_sup : 0.0; }

  double operator()(std::size_t i, std::size_t j) const {
    switch (a_.kind) {
      case ObservableKind::position: return position_element(i, j);
      case ObservableKind::momentum: return i == j ? abar_.at(i) : 0.0;
      case ObservableKind::tensor:
        // Symmetrized product f Op(a); exact on the diagonal.
        return 0.5 * (abar_.at(i) + abar_.at(j)) * position_element(i, j);
    }
    return 0.0;
  }

  /// H with h_jk = <A u_{members[j]}, u_{members[k]}>.
  Eigen::MatrixXd block(std::span<const std::size_t> members) const {
    const auto n = static_cast<Eigen::Index>(members.size());
    Eigen::MatrixXd h(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = j; k < n; ++k)
        h(j, k) = h(k, j) = (*this)(members[static_cast<std::size_t>(j)], members[static_cast<std::size_t>(k)]);
    return h;
  }

 private:
  const Spectrum* s_;
  Observable a_;
  double lx_ = 1.0, ly_ = 1.0;
  Eigen::VectorXd wf_;  // grid: h^2 f(node)
  Eigen::MatrixXd ix_, iy_;
  std::optional<detail::SineTable> tx_, ty_;
  Eigen::MatrixXd wfw_;
  std::vector<double> abar_, dropped_;
};

inline double matrix_element(const Spectrum& s, const Observable& a, std::size_t i, std::size_t j) {
  if (i >= s.size() || j >= s.size()) throw ShapeError("matrix_element: index out of range");
  return ElementEngine(s, a)(i, j);
}

/// int_Omega f dx times the normalized circle average of a. Requires |Omega| = 1.
inline double phase_space_average(const Observable& a, const Domain& d) {
  if (std::abs(d.volume() - 1.0) > 1e-12) throw DomainError("phase_space_average needs a unit-volume domain");
  double fpart = 1.0;
  if (a.has_position()) {
    if (a.separable() && d.kind() == DomainKind::rectangle) {
      const auto b = d.bounds();
      const std::size_t panels = detail::round_up(a.bandwidth + 8, a.align);
      fpart = quad::integrate(a.fx, b.lo.x, b.hi.x, panels) * quad::integrate(a.fy, b.lo.y, b.hi.y, panels);
    } else {
      fpart = quad::integrate_domain(a.f, d, detail::round_up(a.bandwidth + 16, a.align));
    }
  }
  const double apart = a.has_momentum() ? quad::circle_average(a.a, 32) : 1.0;
  return fpart * apart;
}

/// Diagonal elements <A u_i, u_i> (or <A v_i, v_i> for a rotated basis) with their frequencies.
struct MatrixElementTable {
  std::string label;
  std::vector<std::size_t> indices;
  std::vector<double> lambdas;
  std::vector<double> values;
  double phase_space_average = 0.0;
  double max_dropped_bound = 0.0;
};

inline MatrixElementTable build_table(const Spectrum& s, const Observable& a) {
  const ElementEngine eng(s, a);
  MatrixElementTable t;
  t.label = a.label;
  t.indices.resize(s.size());
  t.lambdas.resize(s.size());
  t.values.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    t.indices[i] = i;
    t.lambdas[i] = s[i].lambda;
    t.values[i] = eng(i, i);
    t.max_dropped_bound = std::max(t.max_dropped_bound, eng.dropped_bound(i));
  }
  t.phase_space_average = std::abs(s.domain().volume() - 1.0) <= 1e-12 ? phase_space_average(a, s.domain()) : NAN;
  return t;
}

struct WindowSum {
  double lambda = 0.0;
  double alpha = 0.0;
  double sum = 0.0;
  std::size_t count = 0;
  double mean = 0.0;
  double phase_space_average = 0.0;
  double residual = 0.0;  // |mean - phase_space_average|
  bool empty = true;
};

/// Sum of table values over lambda_j in [lam, lam (1 + alpha)). Empty windows are flagged.
inline WindowSum window_sum(const MatrixElementTable& tbl, const Spectrum& s, double lam, double alpha) {
  if (!(lam > 0) || !(alpha > 0)) throw DomainError("window_sum needs lambda > 0 and alpha > 0");
  if (lam * (1 + alpha) > s.lambda_max()) throw TruncationError("window extends beyond the spectrum cutoff", lam * (1 + alpha));
  WindowSum w;
  w.lambda = lam;
  w.alpha = alpha;
  w.phase_space_average = tbl.phase_space_average;
  KahanSum acc;
  const double hi = lam * (1 + alpha);
  for (std::size_t k = 0; k < tbl.values.size(); ++k) {
    const double l = tbl.lambdas[k];
    if (l >= lam && l < hi) {
      acc.add(tbl.values[k]);
      ++w.count;
    }
  }
  w.sum = acc.value();
  w.empty = w.count == 0;
  w.mean = w.empty ? 0.0 : w.sum / static_cast<double>(w.count);
  w.residual = w.empty ? NAN : std::abs(w.mean - w.phase_space_average);
  return w;
}

inline void write_window_csv(std::ostream& os, std::span<const WindowSum> rows) {
  const auto old = os.precision(17);
  os << "lambda,window,count,sum,mean,phase_space_average,residual\n";
  for (const auto& w : rows)
    os << w.lambda << ',' << w.lambda * (1 + w.alpha) << ',' << w.count << ',' << w.sum << ',' << w.mean << ','
       << w.phase_space_average << ',' << w.residual << '\n';
  os.precision(old);
}

/// One rotated block in the QUE diagnostic.
struct QueRow {
  std::size_t label = 0;
  double lambda_lo = 0.0;
  double lambda_hi = 0.0;
  std::size_t size = 0;
  double unrotated_mean = 0.0;  // B = (1/n) sum <A u_j, u_j>
  double phase_space_average = 0.0;
  double unrotated_max_dev = 0.0;   // max |<A u_i,u_i> - B|
  double rotated_max_dev = 0.0;     // max |<A v_i,v_i> - B|
  double rotated_max_dev_psa = 0.0;  // max |<A v_i,v_i> - phase_space_average|
  double dropped_bound = 0.0;
};

struct QueReport {
  std::string label;
  std::vector<QueRow> rows;
};

/// Rotated diagonal values diag(Q H Q^T) for coefficient rows Q.
inline Eigen::VectorXd rotated_diagonal(const Eigen::MatrixXd& q, const Eigen::MatrixXd& h) {
  return (q * h).cwiseProduct(q).rowwise().sum();
}

/// Per-block deviations of <A v_i, v_i> for blocks given as (label, members, Q). A block is
/// kept when `windows` is empty or its frequency range meets one of the [lo, hi) windows.
struct BlockView {
  std::size_t label = 0;
  std::span<const std::size_t> members;
  const Eigen::MatrixXd* q = nullptr;
};

inline QueReport que_diagnostic(const Spectrum& s, std::span<const BlockView> blocks, const Observable& a,
                                std::span<const std::pair<double, double>> windows = {}) {
  const ElementEngine eng(s, a);
  QueReport rep;
  rep.label = a.label;
  const double psa = std::abs(s.domain().volume() - 1.0) <= 1e-12 ? phase_space_average(a, s.domain()) : NAN;
  for (const auto& b : blocks) {
    if (b.members.empty()) continue;
    const double lo = s[b.members.front()].lambda, hi = s[b.members.back()].lambda;
    if (!windows.empty()) {
      bool hit = false;
      for (const auto& [wlo, whi] : windows) hit = hit || (hi >= wlo && lo < whi);
      if (!hit) continue;
    }
    const Eigen::MatrixXd h = eng.block(b.members);
    QueRow row;
    row.label = b.label;
    row.lambda_lo = lo;
    row.lambda_hi = hi;
    row.size = b.members.size();
    row.unrotated_mean = h.trace() / static_cast<double>(row.size);
    row.phase_space_average = psa;
    for (std::size_t k = 0; k < row.size; ++k) {
      row.unrotated_max_dev =
          std::max(row.unrotated_max_dev, std::abs(h(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) - row.unrotated_mean));
      row.dropped_bound = std::max(row.dropped_bound, eng.dropped_bound(b.members[k]));
    }
    const Eigen::VectorXd rv = b.q ? rotated_diagonal(*b.q, h) : Eigen::VectorXd(h.diagonal());
    row.rotated_max_dev = (rv.array() - row.unrotated_mean).abs().maxCoeff();
    row.rotated_max_dev_psa = (rv.array() - psa).abs().maxCoeff();
    rep.rows.push_back(row);
  }
  return rep;
}

inline void write_que_csv(std::ostream& os, const QueReport& r) {
  const auto old = os.precision(17);
  os << "observable,block,lambda_lo,lambda_hi,size,unrotated_mean,phase_space_average,unrotated_max_dev,"
        "rotated_max_dev,rotated_max_dev_psa,dropped_bound\n";
  for (const auto& q : r.rows)
    os << r.label << ',' << q.label << ',' << q.lambda_lo << ',' << q.lambda_hi << ',' << q.size << ','
       << q.unrotated_mean << ',' << q.phase_space_average << ',' << q.unrotated_max_dev << ',' << q.rotated_max_dev
       << ',' << q.rotated_max_dev_psa << ',' << q.dropped_bound << '\n';
  os.precision(old);
}

}  // namespace quelab
