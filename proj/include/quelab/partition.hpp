#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "quelab/errors.hpp"
#include "quelab/rng.hpp"
#include "quelab/spectrum.hpp"

namespace quelab {

/// Number of subintervals of shell n: ceil((1+eps)^(n gamma)).
inline int shell_intervals(int n, double eps, double gamma) {
  return static_cast<int>(std::ceil(std::pow(1.0 + eps, static_cast<double>(n) * gamma)));
}

/// Left endpoint of interval j of shell n: (1+eps)^n (1 + j eps / N_n).
inline double interval_left(int n, int j, double eps, double gamma) {
  const int count = shell_intervals(n, eps, gamma);
  return std::pow(1.0 + eps, n) * (1.0 + static_cast<double>(j) * eps / count);
}

/// One interval [lambda_minus, lambda_plus) of shell n, with the spectrum indices it holds.
struct Block {
  int shell = 0;
  int j = 0;
  int intervals = 1;  // N_n
  double lambda_minus = 0.0;
  double lambda_plus = 0.0;
  std::vector<std::size_t> members;  // ascending, contiguous in the spectrum

  std::size_t size() const { return members.size(); }
  std::size_t first() const { return members.front(); }
};

/// Two-scale partition of a spectrum: shells [(1+eps)^n, (1+eps)^(n+1)) cut into N_n
/// equal intervals. Indices with lambda < 1 + eps form the low block.
struct BlockPartition {
  double epsilon = 0.0;
  double gamma = 0.0;
  std::vector<Block> blocks;  // non-empty blocks only, ascending
  std::vector<std::size_t> low_block;
  std::vector<std::ptrdiff_t> block_of;  // spectrum index -> position in `blocks`, -1 for the low block

  /// Smallest block boundary at or above index n: every block is either inside [0, n') or outside.
  std::size_t snap_up(std::size_t n) const {
    if (n == 0) return 0;
    const std::ptrdiff_t b = block_of.at(n - 1);
    if (b < 0) return n;
    const Block& blk = blocks[static_cast<std::size_t>(b)];
    return blk.members.back() + 1;
  }
};

namespace detail {

inline void check_partition_params(double eps, double gamma) {
  if (!(eps > 0 && eps < 1)) throw DomainError("epsilon must lie in (0, 1)");
  if (!(gamma >= 0 && gamma <= 1)) throw DomainError("gamma must lie in [0, 1]");
}

// Locates (n, j) with interval_left(n, j) <= lambda < interval_left(n, j + 1) in the
// stored floating-point endpoints.
inline std::pair<int, int> locate(double lambda, double eps, double gamma) {
  int n = static_cast<int>(std::floor(std::log(lambda) / std::log1p(eps)));
  n = std::max(n, 1);
  while (n > 1 && std::pow(1.0 + eps, n) > lambda) --n;
  while (std::pow(1.0 + eps, n + 1) <= lambda) ++n;
  const int count = shell_intervals(n, eps, gamma);
  const double base = std::pow(1.0 + eps, n);
  int j = static_cast<int>(std::floor((lambda / base - 1.0) * count / eps));
  j = std::clamp(j, 0, count - 1);
  while (j > 0 && interval_left(n, j, eps, gamma) > lambda) --j;
  while (j + 1 < count && interval_left(n, j + 1, eps, gamma) <= lambda) ++j;
  return {n, j};
}

}  // namespace detail

inline BlockPartition build_partition(std::span<const double> lambdas, double eps, double gamma) {
  detail::check_partition_params(eps, gamma);
  if (lambdas.empty()) throw EmptySpectrumError("cannot partition an empty spectrum");
  BlockPartition p;
  p.epsilon = eps;
  p.gamma = gamma;
  p.block_of.assign(lambdas.size(), -1);
  std::map<std::pair<int, int>, std::size_t> slot;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const double l = lambdas[i];
    if (i > 0 && l < lambdas[i - 1]) throw DomainError("spectrum must be sorted ascending");
    if (l < 1.0 + eps) {
      p.low_block.push_back(i);
      continue;
    }
    const auto key = detail::locate(l, eps, gamma);
    auto it = slot.find(key);
    if (it == slot.end()) {
      Block b;
      b.shell = key.first;
      b.j = key.second;
      b.intervals = shell_intervals(key.first, eps, gamma);
      b.lambda_minus = std::pow(1.0 + eps, key.first) * (1.0 + key.second * eps / b.intervals);
      b.lambda_plus = std::pow(1.0 + eps, key.first) * (1.0 + (key.second + 1) * eps / b.intervals);
      it = slot.emplace(key, p.blocks.size()).first;
      p.blocks.push_back(std::move(b));
    }
    p.blocks[it->second].members.push_back(i);
    p.block_of[i] = static_cast<std::ptrdiff_t>(it->second);
  }
  return p;
}

inline BlockPartition build_partition(const Spectrum& s, double eps, double gamma) {
  if (s.empty()) throw EmptySpectrumError("cannot partition an empty spectrum");
  const auto l = s.lambdas();
  return build_partition(std::span<const double>(l), eps, gamma);
}

/// Block-constant (lambda') and distinct (lambda'') replacement frequencies.
struct ReassignedSpectrum {
  std::vector<double> lambda_prime;
  std::vector<double> lambda_dprime;  // empty until reassign_distinct
  std::vector<std::ptrdiff_t> block_of;
  /// Smallest lambda from which |l^2 - l'^2| <= 3 eps (l^2)^(1 - gamma/2) holds for all
  /// larger spectrum entries; +inf if the last entry already violates it.
  double threshold_prime = 0.0;
  /// Same for |l'^2 - l''^2| <= 3 eps (l'^2)^(1 - gamma/2).
  double threshold_dprime = 0.0;

  bool has_dprime() const { return !lambda_dprime.empty(); }
};

namespace detail {

// Smallest a[i] such that ok(k) holds for every k >= i.
template <class Ok>
double scan_threshold(std::span<const double> lambdas, Ok ok) {
  std::size_t first_good = lambdas.size();
  for (std::size_t k = lambdas.size(); k-- > 0;) {
    if (!ok(k)) break;
    first_good = k;
  }
  return first_good < lambdas.size() ? lambdas[first_good] : INFINITY;
}

inline double three_eps_bound(double eps, double gamma, double lambda) {
  return 3.0 * eps * std::pow(lambda * lambda, 1.0 - 0.5 * gamma);
}

}  // namespace detail

/// lambda'_i: left endpoint of the block holding i; lambda_i itself in the low block.
inline ReassignedSpectrum reassign_left(const BlockPartition& p, std::span<const double> lambdas) {
  if (p.block_of.size() != lambdas.size()) throw ShapeError("partition does not match spectrum");
  ReassignedSpectrum r;
  r.block_of = p.block_of;
  r.lambda_prime.resize(lambdas.size());
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const auto b = p.block_of[i];
    r.lambda_prime[i] = b < 0 ? lambdas[i] : p.blocks[static_cast<std::size_t>(b)].lambda_minus;
  }
  r.threshold_prime = detail::scan_threshold(lambdas, [&](std::size_t k) {
    const double l = lambdas[k], lp = r.lambda_prime[k];
    return std::abs(l * l - lp * lp) <= detail::three_eps_bound(p.epsilon, p.gamma, l);
  });
  return r;
}

inline ReassignedSpectrum reassign_left(const BlockPartition& p, const Spectrum& s) {
  const auto l = s.lambdas();
  return reassign_left(p, std::span<const double>(l));
}

enum class Placement { equispaced, jittered };

struct DistinctStrategy {
  Placement placement = Placement::equispaced;
  std::uint64_t seed = 0;
};

/// lambda''_i: pairwise distinct values inside each block (and in [(1-eps) l', l') for the
/// low block). Equispaced puts member t of a k-member block at
/// lambda_minus + width t / (k + 1); jittered adds uniform noise below half that spacing.
inline ReassignedSpectrum reassign_distinct(const BlockPartition& p, ReassignedSpectrum r,
                                            DistinctStrategy strategy = {}) {
  const std::size_t n = r.lambda_prime.size();
  r.lambda_dprime.assign(n, 0.0);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const Block& blk = p.blocks[b];
    const double k = static_cast<double>(blk.size());
    const double spacing = (blk.lambda_plus - blk.lambda_minus) / (k + 1.0);
    CounterRng rng(SeedKey{strategy.seed, b, 0});
    for (std::size_t t = 0; t < blk.size(); ++t) {
      double offset = static_cast<double>(t);
      if (strategy.placement == Placement::jittered) offset += 0.5 * uniform01(rng);
      r.lambda_dprime[blk.members[t]] = blk.lambda_minus + spacing * offset;
    }
  }
  // Low block: group equal lambda' values and spread each group below lambda'.
  std::size_t a = 0;
  const auto& low = p.low_block;
  while (a < low.size()) {
    std::size_t e = a + 1;
    while (e < low.size() && r.lambda_prime[low[e]] == r.lambda_prime[low[a]]) ++e;
    const double lp = r.lambda_prime[low[a]];
    const double k = static_cast<double>(e - a);
    for (std::size_t t = a; t < e; ++t)
      r.lambda_dprime[low[t]] = lp * (1.0 - p.epsilon * static_cast<double>(t - a + 1) / (k + 1.0));
    a = e;
  }
  // Groups in the low block occupy overlapping ranges; nudge the rare exact collision.
  std::vector<std::size_t> order(low);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return r.lambda_dprime[x] < r.lambda_dprime[y]; });
  for (std::size_t t = 1; t < order.size(); ++t) {
    double& cur = r.lambda_dprime[order[t]];
    const double prev = r.lambda_dprime[order[t - 1]];
    if (cur <= prev) cur = std::nextafter(prev, INFINITY);
  }

  r.threshold_dprime = detail::scan_threshold(std::span<const double>(r.lambda_prime), [&](std::size_t k) {
    const double lp = r.lambda_prime[k], lpp = r.lambda_dprime[k];
    return std::abs(lp * lp - lpp * lpp) <= detail::three_eps_bound(p.epsilon, p.gamma, lp);
  });
  return r;
}

/// CSV table of the partition: n, j, lambda_minus, lambda_plus, members.
inline void write_partition_csv(std::ostream& os, const BlockPartition& p) {
  const auto old = os.precision(17);
  os << "n,j,intervals,lambda_minus,lambda_plus,members\n";
  for (const auto& b : p.blocks)
    os << b.shell << ',' << b.j << ',' << b.intervals << ',' << b.lambda_minus << ',' << b.lambda_plus << ','
       << b.size() << '\n';
  os.precision(old);
}

}  // namespace quelab
