#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "quelab/geometry.hpp"
#include "quelab/stats.hpp"

namespace quelab::quad {

using Rule = boost::math::quadrature::gauss<double, 20>;

/// Composite 20-point Gauss-Legendre over [a, b] split into `panels` equal pieces.
template <class F>
double integrate(F&& f, double a, double b, std::size_t panels = 8) {
  KahanSum acc;
  const double w = (b - a) / static_cast<double>(panels);
  for (std::size_t k = 0; k < panels; ++k) {
    const double lo = a + w * static_cast<double>(k);
    acc.add(Rule::integrate(f, lo, lo + w));
  }
  return acc.value();
}

/// Nodes and weights of the composite rule, for callers that reuse them.
struct NodeSet {
  std::vector<double> x;
  std::vector<double> w;
};

inline NodeSet nodes(double a, double b, std::size_t panels) {
  NodeSet out;
  const auto& abscissa = Rule::abscissa();
  const auto& weights = Rule::weights();
  const double width = (b - a) / static_cast<double>(panels);
  for (std::size_t k = 0; k < panels; ++k) {
    const double mid = a + width * (static_cast<double>(k) + 0.5);
    const double half = 0.5 * width;
    // boost stores the non-negative half of a symmetric rule (20 points -> 10 abscissae).
    for (std::size_t i = 0; i < abscissa.size(); ++i) {
      out.x.push_back(mid - half * abscissa[i]);
      out.w.push_back(half * weights[i]);
      out.x.push_back(mid + half * abscissa[i]);
      out.w.push_back(half * weights[i]);
    }
  }
  return out;
}

/// Tensor Gauss-Legendre over [x0, x1] x [y0, y1].
template <class F>
double integrate_box(F&& f, Point lo, Point hi, std::size_t panels) {
  const NodeSet nx = nodes(lo.x, hi.x, panels);
  const NodeSet ny = nodes(lo.y, hi.y, panels);
  KahanSum acc;
  for (std::size_t i = 0; i < nx.x.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < ny.x.size(); ++j) row += ny.w[j] * f(Point{nx.x[i], ny.x[j]});
    acc.add(nx.w[i] * row);
  }
  return acc.value();
}

namespace detail {

inline std::vector<std::array<Point, 3>> ear_clip(std::vector<Point> v) {
  if (quelab::detail::signed_area(v) < 0) std::reverse(v.begin(), v.end());
  std::vector<std::array<Point, 3>> tris;
  auto inside_tri = [](Point p, Point a, Point b, Point c) {
    return cross(b - a, p - a) >= 0 && cross(c - b, p - b) >= 0 && cross(a - c, p - c) >= 0;
  };
  while (v.size() > 3) {
    bool clipped = false;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Point a = v[(i + v.size() - 1) % v.size()], b = v[i], c = v[(i + 1) % v.size()];
      if (cross(b - a, c - b) <= 0) continue;  // reflex
      bool ear = true;
      for (std::size_t k = 0; k < v.size() && ear; ++k) {
        const Point p = v[k];
        if (p == a || p == b || p == c) continue;
        if (inside_tri(p, a, b, c)) ear = false;
      }
      if (!ear) continue;
      tris.push_back({a, b, c});
      v.erase(v.begin() + static_cast<std::ptrdiff_t>(i));
      clipped = true;
      break;
    }
    if (!clipped) throw DomainError("ear clipping failed; polygon not simple?");
  }
  tris.push_back({v[0], v[1], v[2]});
  return tris;
}

}  // namespace detail

/// Integral of f over a domain. Rectangles use tensor rules, disks polar rules and
/// polygons a Duffy-collapsed rule on an ear-clipped triangulation.
template <class F>
double integrate_domain(F&& f, const Domain& d, std::size_t panels = 8) {
  switch (d.kind()) {
    case DomainKind::rectangle: {
      const auto b = d.bounds();
      return integrate_box(f, b.lo, b.hi, panels);
    }
    case DomainKind::disk: {
      const double r = std::get<Disk>(d.shape()).radius;
      return integrate_box(
          [&](Point q) {
            const double rho = q.x, th = q.y;
            return rho * f(Point{rho * std::cos(th), rho * std::sin(th)});
          },
          Point{0, 0}, Point{r, 2 * std::numbers::pi}, panels);
    }
    case DomainKind::polygon: {
      KahanSum acc;
      for (const auto& t : detail::ear_clip(std::get<Polygon>(d.shape()).vertices)) {
        const Point a = t[0], e1 = t[1] - t[0], e2 = t[2] - t[0];
        const double jac = std::abs(cross(e1, e2));
        // (u, v) in [0,1]^2 -> barycentric (u(1-v), uv), Jacobian u.
        acc.add(jac * integrate_box(
                          [&](Point q) {
                            const double s = q.x * (1 - q.y), w = q.x * q.y;
                            return q.x * f(a + s * e1 + w * e2);
                          },
                          Point{0, 0}, Point{1, 1}, panels));
      }
      return acc.value();
    }
  }
  return 0.0;
}

/// Mean of a(cos th, sin th) over the unit circle with normalized arc measure.
template <class A>
double circle_average(A&& a, std::size_t panels = 16) {
  return integrate([&](double th) { return a(std::cos(th), std::sin(th)); }, 0.0, 2 * std::numbers::pi, panels) /
         (2 * std::numbers::pi);
}

}  // namespace quelab::quad
