#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace swlab {

// Prototypical point-mass game: real data at 0, generator delta_theta, linear
// critic D(x) = w x. Everything here is closed form; the module integrates the
// gradient vector field and classifies the resulting trajectories.

struct DiracState {
  double w = 0.0;
  double theta = 0.0;

  double norm() const { return std::sqrt(w * w + theta * theta); }
};

enum class DiracPenalty : std::uint8_t { kGp, kCp };

struct DiracConfig {
  DiracPenalty penalty = DiracPenalty::kGp;
  double lambda = 10.0;
  double g0 = 1.0;           // gradient-norm target of the gp penalty
  double fprime0 = 1.0;      // f'(0); the plain WGAN objective f(t)=t gives 1
  // Optional general objective hook evaluating f'(t); when absent f' is the
  // constant fprime0.
  std::function<double(double)> fprime;

  double fp(double t) const { return fprime ? fprime(t) : fprime0; }

  void validate() const {
    if (lambda <= 0.0) throw std::invalid_argument("dirac: lambda must be > 0");
  }
};

struct DiracField {
  double dtheta = 0.0;
  double dw = 0.0;
};

// Gradient vector field (-grad_theta L, grad_w L):
//   gp: (-f'(tw) w, f'(tw) theta - 4 lambda w (w^2 - g0))
//   cp: (-f'(tw) w, f'(tw) theta - lambda (4 w^3 + 2 w))
inline DiracField vector_field(const DiracState& s, const DiracConfig& cfg) {
  cfg.validate();
  const double fp = cfg.fp(s.theta * s.w);
  DiracField f;
  f.dtheta = -fp * s.w;
  if (cfg.penalty == DiracPenalty::kGp) {
    f.dw = fp * s.theta - 4.0 * cfg.lambda * s.w * (s.w * s.w - cfg.g0);
  } else {
    f.dw = fp * s.theta - cfg.lambda * (4.0 * s.w * s.w * s.w + 2.0 * s.w);
  }
  return f;
}

// Both coordinates move from the same state.
inline DiracState simgd_step(const DiracState& s, const DiracConfig& cfg,
                             double lr) {
  if (lr <= 0.0) throw std::invalid_argument("simgd_step: lr must be > 0");
  const DiracField f = vector_field(s, cfg);
  return {s.w + lr * f.dw, s.theta + lr * f.dtheta};
}

// n_d critic updates, each from the freshest state, then one generator update.
inline DiracState altgd_step(const DiracState& s, const DiracConfig& cfg,
                             double lr, std::size_t n_d) {
  if (lr <= 0.0) throw std::invalid_argument("altgd_step: lr must be > 0");
  if (n_d == 0) throw std::invalid_argument("altgd_step: n_d must be >= 1");
  DiracState cur = s;
  for (std::size_t i = 0; i < n_d; ++i)
    cur.w += lr * vector_field(cur, cfg).dw;
  cur.theta += lr * vector_field(cur, cfg).dtheta;
  return cur;
}

enum class Scheme : std::uint8_t { kSimGd, kAltGd };

struct Trajectory {
  std::vector<DiracState> states;  // states[0] is the initial point
  bool diverged = false;
  std::size_t divergence_step = 0;
};

inline constexpr double kDivergenceBound = 1e6;

inline Trajectory integrate(const DiracState& s0, const DiracConfig& cfg,
                            double lr, std::size_t steps, Scheme scheme,
                            std::size_t n_d = 1) {
  if (steps == 0) throw std::invalid_argument("integrate: steps must be >= 1");
  Trajectory traj;
  traj.states.reserve(steps + 1);
  traj.states.push_back(s0);
  DiracState cur = s0;
  for (std::size_t i = 1; i <= steps; ++i) {
    cur = scheme == Scheme::kSimGd ? simgd_step(cur, cfg, lr)
                                   : altgd_step(cur, cfg, lr, n_d);
    if (std::abs(cur.w) > kDivergenceBound ||
        std::abs(cur.theta) > kDivergenceBound || !std::isfinite(cur.w) ||
        !std::isfinite(cur.theta)) {
      traj.diverged = true;
      traj.divergence_step = i;
      traj.states.push_back(cur);
      return traj;
    }
    traj.states.push_back(cur);
  }
  return traj;
}

// Jacobian of the field in (theta, w) coordinates:
//   [ d(dtheta)/dtheta  d(dtheta)/dw ]
//   [ d(dw)/dtheta      d(dw)/dw     ]
// With the general objective hook, f'' is taken by central differences of f'.
struct Matrix2 {
  // row-major: m[0] m[1] / m[2] m[3]
  std::array<double, 4> m{};
};

inline Matrix2 jacobian_at(const DiracState& s, const DiracConfig& cfg) {
  cfg.validate();
  const double tw = s.theta * s.w;
  const double fp = cfg.fp(tw);
  double fpp = 0.0;
  if (cfg.fprime) {
    const double h = 1e-6;
    fpp = (cfg.fprime(tw + h) - cfg.fprime(tw - h)) / (2.0 * h);
  }
  Matrix2 j;
  j.m[0] = -fpp * s.w * s.w;
  j.m[1] = -fp - fpp * tw;
  j.m[2] = fp + fpp * tw;
  const double pen_dd = cfg.penalty == DiracPenalty::kGp
                            ? 4.0 * cfg.lambda * (3.0 * s.w * s.w - cfg.g0)
                            : cfg.lambda * (12.0 * s.w * s.w + 2.0);
  j.m[3] = fpp * s.theta * s.theta - pen_dd;
  return j;
}

// Closed-form eigenvalues of a 2x2 matrix.
inline std::array<std::complex<double>, 2> eigenvalues(const Matrix2& j) {
  const double tr = j.m[0] + j.m[3];
  const double det = j.m[0] * j.m[3] - j.m[1] * j.m[2];
  const std::complex<double> disc =
      std::sqrt(std::complex<double>(tr * tr - 4.0 * det, 0.0));
  return {(tr + disc) / 2.0, (tr - disc) / 2.0};
}

struct Classification {
  enum class Kind : std::uint8_t { kConverged, kNonConverged, kDiverged };
  Kind kind = Kind::kNonConverged;
  std::size_t converged_step = 0;  // first step of the sustained tail
};

// Converged iff the state norm stays below eps over the last 10% of steps;
// the reported step is the earliest index from which it never leaves.
inline Classification classify(const Trajectory& traj, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("classify: eps must be > 0");
  Classification out;
  if (traj.diverged) {
    out.kind = Classification::Kind::kDiverged;
    return out;
  }
  const std::size_t total = traj.states.size();
  const std::size_t tail = std::max<std::size_t>(1, (total + 9) / 10);
  for (std::size_t i = total - tail; i < total; ++i) {
    if (traj.states[i].norm() >= eps) {
      out.kind = Classification::Kind::kNonConverged;
      return out;
    }
  }
  out.kind = Classification::Kind::kConverged;
  std::size_t first = total - tail;
  while (first > 0 && traj.states[first - 1].norm() < eps) --first;
  out.converged_step = first;
  return out;
}

}  // namespace swlab
