#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "quelab/errors.hpp"

namespace quelab {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
  bool operator==(const Point&) const = default;
};

inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point a) { return std::hypot(a.x, a.y); }
inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }

/// Axis-aligned rectangle [0, lx] x [0, ly].
struct Rectangle {
  double lx = 1.0;
  double ly = 1.0;
};

/// Disk of the given radius centred at the origin.
struct Disk {
  double radius = 1.0;
};

/// Simple polygon, vertices in either orientation.
struct Polygon {
  std::vector<Point> vertices;
};

enum class DomainKind { rectangle, disk, polygon };

/// Half-plane {p : dot(normal, p - anchor) < 0} approximating the boundary near a point.
struct HalfPlane {
  Point anchor;
  Point outward_normal;  // unit length

  /// Distance from p to the boundary line, positive on the interior side.
  double depth(Point p) const { return -dot(outward_normal, p - anchor); }
  Point project(Point p) const { return p + depth(p) * outward_normal; }
};

struct BoundingBox {
  Point lo;
  Point hi;
};

namespace detail {

inline double segment_distance(Point p, Point a, Point b) {
  const Point ab = b - a;
  const double len2 = dot(ab, ab);
  const double s = len2 > 0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return norm(p - (a + s * ab));
}

inline double signed_area(const std::vector<Point>& v) {
  double a = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) a += cross(v[i], v[(i + 1) % v.size()]);
  return 0.5 * a;
}

inline bool segments_intersect(Point p1, Point p2, Point q1, Point q2) {
  auto orient = [](Point a, Point b, Point c) {
    const double v = cross(b - a, c - a);
    return (v > 0) - (v < 0);
  };
  auto on_segment = [](Point a, Point b, Point c) {
    return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= c.y &&
           c.y <= std::max(a.y, b.y);
  };
  const int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
  const int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

}  // namespace detail

/// A bounded planar domain: rectangle, disk or simple polygon. Immutable value type.
class Domain {
 public:
  /// Points closer than this to a polygon edge count as boundary points.
  static constexpr double kEdgeTolerance = 1e-12;

  static Domain rectangle(double lx, double ly) {
    if (!(lx > 0) || !(ly > 0) || !std::isfinite(lx) || !std::isfinite(ly))
      throw DomainError("rectangle sides must be positive and finite");
    return Domain(Rectangle{lx, ly});
  }

  static Domain disk(double radius) {
    if (!(radius > 0) || !std::isfinite(radius)) throw DomainError("disk radius must be positive and finite");
    return Domain(Disk{radius});
  }

  static Domain polygon(std::vector<Point> vertices) {
    if (vertices.size() < 3) throw DomainError("polygon needs at least 3 vertices");
    for (const auto& p : vertices)
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw DomainError("polygon vertex not finite");
    const std::size_t n = vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
        if (adjacent) continue;
        if (detail::segments_intersect(vertices[i], vertices[(i + 1) % n], vertices[j], vertices[(j + 1) % n]))
          throw DomainError("polygon is not simple");
      }
    }
    if (std::abs(detail::signed_area(vertices)) <= 0) throw DomainError("polygon has zero area");
    return Domain(Polygon{std::move(vertices)});
  }

  /// Unit square with the top-right quarter removed, scaled by `scale`.
  static Domain l_shape(double scale = 1.0) {
    return polygon({{0, 0}, {scale, 0}, {scale, 0.5 * scale}, {0.5 * scale, 0.5 * scale},
                    {0.5 * scale, scale}, {0, scale}});
  }

  DomainKind kind() const { return static_cast<DomainKind>(shape_.index()); }
  const std::variant<Rectangle, Disk, Polygon>& shape() const { return shape_; }

  double volume() const { return volume_; }

  bool contains(Point p) const {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
    return std::visit(
        [&](const auto& s) -> bool {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Rectangle>) {
            return p.x > 0 && p.x < s.lx && p.y > 0 && p.y < s.ly;
          } else if constexpr (std::is_same_v<S, Disk>) {
            return p.x * p.x + p.y * p.y < s.radius * s.radius;
          } else {
            const auto& v = s.vertices;
            const std::size_t n = v.size();
            bool inside = false;
            for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
              if (detail::segment_distance(p, v[j], v[i]) <= kEdgeTolerance) return false;
              if ((v[i].y > p.y) != (v[j].y > p.y)) {
                const double xc = v[j].x + (p.y - v[j].y) * (v[i].x - v[j].x) / (v[i].y - v[j].y);
                if (p.x < xc) inside = !inside;
              }
            }
            return inside;
          }
        },
        shape_);
  }

  /// Euclidean distance from an interior point to the boundary.
  double boundary_distance(Point p) const {
    if (!contains(p)) throw DomainError("boundary_distance: point outside domain");
    return raw_boundary_distance(p);
  }

  /// Boundary face nearest to p, as a half-plane whose interior side contains p.
  HalfPlane nearest_face(Point p) const {
    return std::visit(
        [&](const auto& s) -> HalfPlane {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Rectangle>) {
            const double d[4] = {p.x, s.lx - p.x, p.y, s.ly - p.y};
            const int k = static_cast<int>(std::min_element(d, d + 4) - d);
            switch (k) {
              case 0: return {{0, 0}, {-1, 0}};
              case 1: return {{s.lx, 0}, {1, 0}};
              case 2: return {{0, 0}, {0, -1}};
              default: return {{0, s.ly}, {0, 1}};
            }
          } else if constexpr (std::is_same_v<S, Disk>) {
            const double r = norm(p);
            const Point u = r > 0 ? (1.0 / r) * p : Point{1, 0};
            return {s.radius * u, u};
          } else {
            const auto& v = s.vertices;
            const std::size_t n = v.size();
            const double orientation = detail::signed_area(v) > 0 ? 1.0 : -1.0;
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) {
              const double d = detail::segment_distance(p, v[i], v[(i + 1) % n]);
              if (d < best_d) {
                best_d = d;
                best = i;
              }
            }
            const Point a = v[best], b = v[(best + 1) % n];
            const Point e = b - a;
            const double len = norm(e);
            // Counter-clockwise polygons have the interior on the left of each edge.
            const Point outward = (orientation / len) * Point{e.y, -e.x};
            return {a, outward};
          }
        },
        shape_);
  }

  BoundingBox bounds() const {
    return std::visit(
        [](const auto& s) -> BoundingBox {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Rectangle>) {
            return {{0, 0}, {s.lx, s.ly}};
          } else if constexpr (std::is_same_v<S, Disk>) {
            return {{-s.radius, -s.radius}, {s.radius, s.radius}};
          } else {
            BoundingBox b{s.vertices[0], s.vertices[0]};
            for (const auto& p : s.vertices) {
              b.lo = {std::min(b.lo.x, p.x), std::min(b.lo.y, p.y)};
              b.hi = {std::max(b.hi.x, p.x), std::max(b.hi.y, p.y)};
            }
            return b;
          }
        },
        shape_);
  }

  double diameter() const {
    return std::visit(
        [](const auto& s) -> double {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Rectangle>) {
            return std::hypot(s.lx, s.ly);
          } else if constexpr (std::is_same_v<S, Disk>) {
            return 2 * s.radius;
          } else {
            double d = 0;
            for (const auto& a : s.vertices)
              for (const auto& b : s.vertices) d = std::max(d, norm(a - b));
            return d;
          }
        },
        shape_);
  }

  /// Domain scaled by `factor` about the origin.
  Domain scaled(double factor) const {
    return std::visit(
        [&](const auto& s) -> Domain {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Rectangle>) {
            return rectangle(factor * s.lx, factor * s.ly);
          } else if constexpr (std::is_same_v<S, Disk>) {
            return disk(factor * s.radius);
          } else {
            std::vector<Point> v;
            v.reserve(s.vertices.size());
            for (const auto& p : s.vertices) v.push_back(factor * p);
            return polygon(std::move(v));
          }
        },
        shape_);
  }

  /// Rescales lengths so the volume is 1. Returns the domain and the length factor s.
  /// Dirichlet eigenvalues transform as lambda^2 -> lambda^2 / s^2.
  std::pair<Domain, double> rescale_to_unit_volume() const {
    const double s = 1.0 / std::sqrt(volume_);
    if (s == 1.0) return {*this, 1.0};
    return {scaled(s), s};
  }

  /// One-line text form, e.g. "rectangle 1 1", "disk 0.5", "polygon 0 0 1 0 1 1".
  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    std::visit(
        [&](const auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Rectangle>) {
            os << "rectangle " << s.lx << ' ' << s.ly;
          } else if constexpr (std::is_same_v<S, Disk>) {
            os << "disk " << s.radius;
          } else {
            os << "polygon";
            for (const auto& p : s.vertices) os << ' ' << p.x << ' ' << p.y;
          }
        },
        shape_);
    return os.str();
  }

  static Domain parse(const std::string& text) {
    std::istringstream is(text);
    std::string kind;
    is >> kind;
    if (kind == "rectangle") {
      double lx = 0, ly = 0;
      if (!(is >> lx >> ly)) throw DomainError("malformed rectangle: " + text);
      return rectangle(lx, ly);
    }
    if (kind == "disk") {
      double r = 0;
      if (!(is >> r)) throw DomainError("malformed disk: " + text);
      return disk(r);
    }
    if (kind == "polygon") {
      std::vector<Point> v;
      double x = 0, y = 0;
      while (is >> x >> y) v.push_back({x, y});
      return polygon(std::move(v));
    }
    throw DomainError("unknown domain kind: " + kind);
  }

 private:
  explicit Domain(std::variant<Rectangle, Disk, Polygon> s) : shape_(std::move(s)) {
    volume_ = std::visit(
        [](const auto& v) -> double {
          using S = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<S, Rectangle>) {
            return v.lx * v.ly;
          } else if constexpr (std::is_same_v<S, Disk>) {
            return std::numbers::pi * v.radius * v.radius;
          } else {
            return std::abs(detail::signed_area(v.vertices));
          }
        },
        shape_);
  }

  double raw_boundary_distance(Point p) const {
    return std::visit(
        [&](const auto& s) -> double {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Rectangle>) {
            return std::min({p.x, s.lx - p.x, p.y, s.ly - p.y});
          } else if constexpr (std::is_same_v<S, Disk>) {
            return s.radius - norm(p);
          } else {
            double d = std::numeric_limits<double>::infinity();
            const auto& v = s.vertices;
            for (std::size_t i = 0; i < v.size(); ++i)
              d = std::min(d, detail::segment_distance(p, v[i], v[(i + 1) % v.size()]));
            return d;
          }
        },
        shape_);
  }

  std::variant<Rectangle, Disk, Polygon> shape_;
  double volume_ = 0.0;
};

}  // namespace quelab
