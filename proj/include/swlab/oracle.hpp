#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "swlab/nets.hpp"
#include "swlab/rng.hpp"
#include "swlab/toydata.hpp"

namespace swlab {

// A perfect matching between two equal-size sample sets, uniform weights.
struct Coupling {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

struct W1Result {
  double distance = 0.0;
  Coupling coupling;
};

// Empirical W1 in one dimension: sort both samples and match rank to rank,
// which is the optimal (monotone) coupling.
inline W1Result w1_sorted_1d(std::span<const double> a,
                             std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("w1_sorted_1d: sample sizes differ");
  if (a.empty()) throw std::invalid_argument("w1_sorted_1d: empty samples");
  std::vector<std::size_t> ia(a.size()), ib(b.size());
  std::iota(ia.begin(), ia.end(), 0);
  std::iota(ib.begin(), ib.end(), 0);
  std::stable_sort(ia.begin(), ia.end(),
                   [&](std::size_t x, std::size_t y) { return a[x] < a[y]; });
  std::stable_sort(ib.begin(), ib.end(),
                   [&](std::size_t x, std::size_t y) { return b[x] < b[y]; });
  W1Result res;
  double acc = 0.0;
  res.coupling.pairs.reserve(a.size());
  for (std::size_t r = 0; r < a.size(); ++r) {
    acc += std::abs(a[ia[r]] - b[ib[r]]);
    res.coupling.pairs.emplace_back(ia[r], ib[r]);
  }
  res.distance = acc / static_cast<double>(a.size());
  return res;
}

// Exact minimum-cost perfect matching via the Hungarian algorithm with
// potentials, O(n^3). cost is row-major n x n.
inline std::vector<int> hungarian_assignment(std::span<const double> cost,
                                             int n) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur =
            cost[std::size_t(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

inline constexpr std::size_t kAssignmentCapacity = 256;

// Exact empirical W1 between equal-size point sets under Euclidean cost.
inline W1Result w1_assignment(const Batch& a, const Batch& b) {
  if (a.n != b.n) throw std::invalid_argument("w1_assignment: sample sizes differ");
  if (a.dim != b.dim)
    throw std::invalid_argument("w1_assignment: dimension mismatch");
  if (a.n == 0) throw std::invalid_argument("w1_assignment: empty samples");
  if (a.n > kAssignmentCapacity)
    throw std::invalid_argument("w1_assignment: n exceeds capacity 256");
  const int n = static_cast<int>(a.n);
  std::vector<double> cost(std::size_t(n) * n);
  for (int i = 0; i < n; ++i) {
    auto pa = a.row(i);
    for (int j = 0; j < n; ++j) {
      auto pb = b.row(j);
      double d2 = 0.0;
      for (int k = 0; k < a.dim; ++k) {
        const double d = pa[k] - pb[k];
        d2 += d * d;
      }
      cost[std::size_t(i) * n + j] = std::sqrt(d2);
    }
  }
  auto match = hungarian_assignment(cost, n);
  W1Result res;
  double acc = 0.0;
  res.coupling.pairs.reserve(a.n);
  for (int i = 0; i < n; ++i) {
    acc += cost[std::size_t(i) * n + match[i]];
    res.coupling.pairs.emplace_back(i, match[i]);
  }
  res.distance = acc / n;
  return res;
}

// Monte-Carlo check of the per-pair ball constraint
// E_{mu^{xi,xj}} ||grad D||^2 <= 1 over every cross pair of the two batches.
// Uses the straight-loop gradient path, independent of the tape.
struct FeasibilityReport {
  bool feasible = true;
  double max_estimate = 0.0;   // max over pairs of the MC estimate
  double max_violation = 0.0;  // max(0, max_estimate - 1)
  std::size_t degenerate_pairs = 0;
};

inline FeasibilityReport feasibility(const MlpParams& critic, const Batch& real,
                                     const Batch& fake, std::size_t m,
                                     double tol, Rng& rng) {
  if (m < 8) throw std::invalid_argument("feasibility: m must be >= 8");
  FeasibilityReport rep;
  std::vector<double> point(real.dim);
  for (std::size_t i = 0; i < real.n; ++i) {
    auto xi = real.row(i);
    for (std::size_t j = 0; j < fake.n; ++j) {
      auto xj = fake.row(j);
      bool equal = true;
      for (int k = 0; k < real.dim; ++k) equal = equal && xi[k] == xj[k];
      if (equal) {
        ++rep.degenerate_pairs;
        continue;
      }
      double acc = 0.0;
      for (std::size_t s = 0; s < m; ++s) {
        const double t = rng.uniform();
        for (int k = 0; k < real.dim; ++k)
          point[k] = t * xi[k] + (1.0 - t) * xj[k];
        auto g = input_gradient_value(critic, point);
        double sq = 0.0;
        for (double gk : g) sq += gk * gk;
        acc += sq;
      }
      rep.max_estimate = std::max(rep.max_estimate, acc / m);
    }
  }
  rep.max_violation = std::max(0.0, rep.max_estimate - 1.0);
  rep.feasible = rep.max_estimate <= 1.0 + tol;
  return rep;
}

// Weak duality: a feasible critic's objective lower-bounds W1, so the gap
// against the transport oracle stays above the Monte-Carlo slack.
inline double weak_duality_gap(const MlpParams& critic, const Batch& real,
                               const Batch& fake, double oracle_distance) {
  double dr = 0.0, df = 0.0;
  for (std::size_t i = 0; i < real.n; ++i) dr += critic_value(critic, real.row(i));
  for (std::size_t j = 0; j < fake.n; ++j) df += critic_value(critic, fake.row(j));
  const double objective = dr / real.n - df / fake.n;
  return oracle_distance - objective;
}

// Closed-form optimal-critic gradient direction (up to positive scale) of the
// coordinate-wise CDF metric for the fixed pair of disjoint uniform squares
// P_r on [-1,0]^2 and P_g on [0,1]^2. Both components are positive on the
// interior of P_g's support, i.e. the field pushes fake mass away from P_r.
inline std::array<double, 2> sobolev_ipm_example_gradient(double a, double b) {
  const double ca = std::clamp(a, 0.0, 1.0);
  const double cb = std::clamp(b, 0.0, 1.0);
  const double d1 = (b >= 0.0 && b <= 1.0) ? ca : 0.0;
  const double d2 = (a >= 0.0 && a <= 1.0) ? cb : 0.0;
  return {d1, d2};
}

}  // namespace swlab
