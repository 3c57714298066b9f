#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "quelab/errors.hpp"
#include "quelab/geometry.hpp"
#include "quelab/quadrature.hpp"

namespace quelab {

enum class Backend { analytic, grid };

/// Separable rectangle mode sin(m pi x / lx) sin(n pi y / ly).
struct Mode {
  int m = 0;
  int n = 0;
  bool operator==(const Mode&) const = default;
};

/// Uniform grid used by the finite-difference backend. Node (i, j) sits at
/// origin + (i h, j h); `node_index` maps it to a row of the eigenvector block or -1.
struct GridInfo {
  double h = 0.0;
  Point origin;
  int nx = 0;  // nodes are i = 0..nx
  int ny = 0;
  std::vector<int> node_index;  // (nx + 1) * (ny + 1)
  std::vector<Point> nodes;     // interior node positions, row order

  int index_of(int i, int j) const {
    if (i < 0 || j < 0 || i > nx || j > ny) return -1;
    return node_index[static_cast<std::size_t>(j) * static_cast<std::size_t>(nx + 1) + static_cast<std::size_t>(i)];
  }
  std::size_t size() const { return nodes.size(); }
  /// Trapezoidal weight of an interior node (boundary nodes carry the zero Dirichlet values).
  double weight() const { return h * h; }
};

/// One Dirichlet eigenpair. `lambda` is the frequency: -Laplace u = lambda^2 u.
struct EigenPair {
  std::size_t index = 0;
  double lambda = 0.0;
  Mode mode;               // analytic backend
  Eigen::VectorXd values;  // grid backend: values on interior nodes, sum h^2 u^2 = 1
};

/// Ordered Dirichlet eigenpairs of a planar domain, immutable after construction.
class Spectrum {
 public:
  Spectrum(Domain domain, Backend backend, std::vector<EigenPair> pairs, double lambda_max,
           std::shared_ptr<const GridInfo> grid = nullptr)
      : domain_(std::move(domain)),
        backend_(backend),
        pairs_(std::move(pairs)),
        lambda_max_(lambda_max),
        grid_(std::move(grid)) {
    if (backend_ == Backend::grid && !grid_) throw ShapeError("grid spectrum needs grid metadata");
    if (backend_ == Backend::analytic && domain_.kind() != DomainKind::rectangle)
      throw UnsupportedBackendError("analytic spectrum is only available on rectangles");
  }

  const Domain& domain() const { return domain_; }
  Backend backend() const { return backend_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const EigenPair& operator[](std::size_t i) const { return pairs_[i]; }
  const std::vector<EigenPair>& pairs() const { return pairs_; }
  double lambda_max() const { return lambda_max_; }
  const GridInfo* grid() const { return grid_.get(); }

  std::vector<double> lambdas() const {
    std::vector<double> out;
    out.reserve(pairs_.size());
    for (const auto& p : pairs_) out.push_back(p.lambda);
    return out;
  }

  /// Value of u_i at p; zero outside the open domain.
  double eval(std::size_t i, Point p) const {
    if (!domain_.contains(p)) return 0.0;
    const auto& e = pairs_.at(i);
    if (backend_ == Backend::analytic) {
      const auto& r = std::get<Rectangle>(domain_.shape());
      return 2.0 / std::sqrt(r.lx * r.ly) * std::sin(e.mode.m * std::numbers::pi * p.x / r.lx) *
             std::sin(e.mode.n * std::numbers::pi * p.y / r.ly);
    }
    const GridInfo& g = *grid_;
    const double fx = (p.x - g.origin.x) / g.h, fy = (p.y - g.origin.y) / g.h;
    const int i0 = static_cast<int>(std::floor(fx)), j0 = static_cast<int>(std::floor(fy));
    const double tx = fx - i0, ty = fy - j0;
    auto node = [&](int i, int j) {
      const int k = g.index_of(i, j);
      return k < 0 ? 0.0 : e.values[k];
    };
    return (1 - tx) * (1 - ty) * node(i0, j0) + tx * (1 - ty) * node(i0 + 1, j0) +
           (1 - tx) * ty * node(i0, j0 + 1) + tx * ty * node(i0 + 1, j0 + 1);
  }

  /// Quadrature panels per axis that resolve products of two modes of this spectrum.
  std::size_t quadrature_panels() const {
    int mmax = 1;
    for (const auto& p : pairs_) mmax = std::max({mmax, p.mode.m, p.mode.n});
    return static_cast<std::size_t>(mmax) + 4;
  }

 private:
  Domain domain_;
  Backend backend_;
  std::vector<EigenPair> pairs_;
  double lambda_max_;
  std::shared_ptr<const GridInfo> grid_;
};

/// Frequency of the (m, n) mode of an lx x ly rectangle.
inline double rectangle_mode_lambda(double lx, double ly, int m, int n) {
  return std::numbers::pi * std::sqrt(static_cast<double>(m) * m / (lx * lx) + static_cast<double>(n) * n / (ly * ly));
}

/// Every closed-form Dirichlet mode of [0,lx]x[0,ly] with lambda <= lambda_max, sorted by
/// lambda and then (m, n) lexicographically.
inline Spectrum rectangle_spectrum(double lx, double ly, double lambda_max) {
  const Domain domain = Domain::rectangle(lx, ly);
  if (!(lambda_max >= rectangle_mode_lambda(lx, ly, 1, 1)))
    throw EmptySpectrumError("cutoff below the ground state");
  struct Key {
    double q;  // m^2/lx^2 + n^2/ly^2
    int m, n;
  };
  std::vector<Key> keys;
  const double qmax = (lambda_max / std::numbers::pi) * (lambda_max / std::numbers::pi);
  const int mmax = static_cast<int>(std::floor(lx * lambda_max / std::numbers::pi)) + 1;
  for (int m = 1; m <= mmax; ++m) {
    const double qm = static_cast<double>(m) * m / (lx * lx);
    if (qm > qmax) break;
    for (int n = 1;; ++n) {
      const double q = qm + static_cast<double>(n) * n / (ly * ly);
      if (q > qmax) break;
      keys.push_back({q, m, n});
    }
  }
  std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    if (a.q != b.q) return a.q < b.q;
    if (a.m != b.m) return a.m < b.m;
    return a.n < b.n;
  });
  std::vector<EigenPair> pairs;
  pairs.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    EigenPair p;
    p.index = i;
    p.lambda = std::numbers::pi * std::sqrt(keys[i].q);
    p.mode = {keys[i].m, keys[i].n};
    pairs.push_back(std::move(p));
  }
  return Spectrum(domain, Backend::analytic, std::move(pairs), lambda_max);
}

inline std::vector<double> eigenfunction_eval(const Spectrum& s, std::size_t i, std::span<const Point> pts) {
  std::vector<double> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(s.eval(i, p));
  return out;
}

/// Values of u_i on the grid nodes (grid backend) as a span.
inline std::span<const double> nodal_values(const Spectrum& s, std::size_t i) {
  if (s.backend() != Backend::grid) throw UnsupportedBackendError("nodal values need the grid backend");
  const auto& v = s[i].values;
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Trapezoidal inner product of two nodal functions on the spectrum's grid.
inline double inner_product(const Spectrum& s, std::span<const double> f, std::span<const double> g) {
  if (s.backend() != Backend::grid) throw ShapeError("nodal inner product needs a grid spectrum");
  if (f.size() != s.grid()->size() || g.size() != s.grid()->size())
    throw ShapeError("nodal vectors do not match the grid");
  KahanSum acc;
  for (std::size_t k = 0; k < f.size(); ++k) acc.add(f[k] * g[k]);
  return s.grid()->weight() * acc.value();
}

/// Inner product of two callables under the spectrum's quadrature: nodal sums on the
/// grid backend, composite Gauss-Legendre over the rectangle on the analytic backend.
template <class F, class G>
  requires std::is_invocable_r_v<double, F, Point> && std::is_invocable_r_v<double, G, Point>
double inner_product(const Spectrum& s, F&& f, G&& g) {
  if (s.backend() == Backend::grid) {
    const GridInfo& grid = *s.grid();
    KahanSum acc;
    for (const auto& p : grid.nodes) acc.add(f(p) * g(p));
    return grid.weight() * acc.value();
  }
  return quad::integrate_domain([&](Point p) { return f(p) * g(p); }, s.domain(), s.quadrature_panels());
}

/// Callable view of u_i.
inline auto eigenfunction(const Spectrum& s, std::size_t i) {
  return [&s, i](Point p) { return s.eval(i, p); };
}

// ---------------------------------------------------------------------------
// Text serialization.
//
//   quelab-spectrum 1
//   domain <describe()>
//   backend analytic|grid
//   h <spacing>|analytic
//   lambda_max <value>
//   count <n>
//   then one row per pair: "index, lambda, m, n" (analytic) or
//   "index, lambda" followed by a line of node values (grid).
// ---------------------------------------------------------------------------

inline void write_spectrum(std::ostream& os, const Spectrum& s) {
  const auto old = os.precision(17);
  os << "quelab-spectrum 1\n";
  os << "domain " << s.domain().describe() << '\n';
  os << "backend " << (s.backend() == Backend::analytic ? "analytic" : "grid") << '\n';
  if (s.backend() == Backend::analytic) {
    os << "h analytic\n";
  } else {
    const GridInfo& g = *s.grid();
    os << "h " << g.h << '\n';
    os << "grid " << g.origin.x << ' ' << g.origin.y << ' ' << g.nx << ' ' << g.ny << '\n';
  }
  os << "lambda_max " << s.lambda_max() << '\n';
  os << "count " << s.size() << '\n';
  for (const auto& p : s.pairs()) {
    if (s.backend() == Backend::analytic) {
      os << p.index << ", " << p.lambda << ", " << p.mode.m << ", " << p.mode.n << '\n';
    } else {
      os << p.index << ", " << p.lambda << '\n';
      for (Eigen::Index k = 0; k < p.values.size(); ++k) os << (k ? " " : "") << p.values[k];
      os << '\n';
    }
  }
  os.precision(old);
}

/// Rebuilds the grid layout (interior node set) of a domain sampled at spacing h.
inline std::shared_ptr<GridInfo> make_grid(const Domain& d, double h, Point origin, int nx, int ny) {
  auto g = std::make_shared<GridInfo>();
  g->h = h;
  g->origin = origin;
  g->nx = nx;
  g->ny = ny;
  g->node_index.assign(static_cast<std::size_t>(nx + 1) * static_cast<std::size_t>(ny + 1), -1);
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      const Point p{origin.x + i * h, origin.y + j * h};
      if (d.contains(p)) {
        g->node_index[static_cast<std::size_t>(j) * static_cast<std::size_t>(nx + 1) + static_cast<std::size_t>(i)] =
            static_cast<int>(g->nodes.size());
        g->nodes.push_back(p);
      }
    }
  }
  return g;
}

inline Spectrum read_spectrum(std::istream& is) {
  auto expect = [&](const std::string& key) {
    std::string k;
    if (!(is >> k) || k != key) throw ShapeError("spectrum file: expected '" + key + "'");
  };
  expect("quelab-spectrum");
  int version = 0;
  is >> version;
  if (version != 1) throw ShapeError("spectrum file: unsupported version");
  expect("domain");
  std::string line;
  std::getline(is, line);
  const Domain domain = Domain::parse(line);
  expect("backend");
  std::string backend;
  is >> backend;
  expect("h");
  std::string h_text;
  is >> h_text;
  std::shared_ptr<GridInfo> grid;
  if (backend == "grid") {
    expect("grid");
    Point origin;
    int nx = 0, ny = 0;
    is >> origin.x >> origin.y >> nx >> ny;
    grid = make_grid(domain, std::stod(h_text), origin, nx, ny);
  }
  expect("lambda_max");
  double lambda_max = 0;
  is >> lambda_max;
  expect("count");
  std::size_t count = 0;
  is >> count;
  std::vector<EigenPair> pairs(count);
  for (auto& p : pairs) {
    char comma = 0;
    is >> p.index >> comma >> p.lambda;
    if (backend == "analytic") {
      is >> comma >> p.mode.m >> comma >> p.mode.n;
    } else {
      p.values.resize(static_cast<Eigen::Index>(grid->size()));
      for (Eigen::Index k = 0; k < p.values.size(); ++k) is >> p.values[k];
    }
    if (!is) throw ShapeError("spectrum file: truncated pair table");
  }
  return Spectrum(domain, backend == "analytic" ? Backend::analytic : Backend::grid, std::move(pairs), lambda_max,
                  std::move(grid));
}

}  // namespace quelab
