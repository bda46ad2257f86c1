#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "swlab/rng.hpp"
#include "swlab/tape.hpp"
#include "swlab/toydata.hpp"

namespace swlab {

// A critic as seen by the penalty terms: given a recorded input vector,
// return the taped scalar output. Keeps this module independent of the
// concrete network family.
using TapedCritic = std::function<Var(Tape&, Var)>;

enum class Method : std::uint8_t {
  kSwganAl,
  kSwganGp,
  kSwganCp,
  kWganGp,
  kWganAl,
  kSganAl,
};

inline const char* method_name(Method m) {
  switch (m) {
    case Method::kSwganAl: return "swgan-al";
    case Method::kSwganGp: return "swgan-gp";
    case Method::kSwganCp: return "swgan-cp";
    case Method::kWganGp: return "wgan-gp";
    case Method::kWganAl: return "wgan-al";
    case Method::kSganAl: return "sgan-al";
  }
  return "?";
}

inline Method method_from_name(const std::string& s) {
  if (s == "swgan-al") return Method::kSwganAl;
  if (s == "swgan-gp") return Method::kSwganGp;
  if (s == "swgan-cp") return Method::kSwganCp;
  if (s == "wgan-gp") return Method::kWganGp;
  if (s == "wgan-al") return Method::kWganAl;
  if (s == "sgan-al") return Method::kSganAl;
  throw std::invalid_argument("unknown method '" + s + "'");
}

enum class GpMode : std::uint8_t { kOneSided, kTwoSided };
enum class SganMeasure : std::uint8_t { kMixed, kInterpolation };

struct PenaltyConfig {
  Method method = Method::kSwganAl;
  double lambda = 10.0;
  double rho = 10.0;
  double alpha0 = 0.0;
  double g0 = 1.0;  // gradient-norm target, 0 or 1
  std::size_t m = 8;
  GpMode gp_mode = GpMode::kOneSided;
  SganMeasure sgan_measure = SganMeasure::kMixed;

  void validate() const {
    if (lambda <= 0.0 || rho <= 0.0)
      throw std::invalid_argument("penalty: lambda and rho must be > 0");
    if (m == 0) throw std::invalid_argument("penalty: m must be >= 1");
    if (g0 != 0.0 && g0 != 1.0)
      throw std::invalid_argument("penalty: g0 must be 0 or 1");
  }
};

// Multiplier state of the augmented Lagrangian. alpha stays >= 0 under the
// clamped update; the wgan-al rule leaves it unclamped.
struct AlmState {
  double alpha = 0.0;
  double rho = 10.0;
};

// Monte-Carlo estimate of the per-pair constraint statistic
// Omega = 1 - (1/m) sum_j ||grad_x D(t_j x_i + (1-t_j) x_j)||^2,
// recorded so that its parameter gradient (a second-order quantity through
// the input gradients) is available from one more backward pass.
struct OmegaEstimate {
  Var omega;                  // taped scalar
  Var mean_sqnorm;            // taped S = (1/m) sum ||grad||^2
  double value = 0.0;         // Omega at record time
  double mean_sqnorm_value = 0.0;
  double mean_grad_norm = 0.0;  // (1/m) sum ||grad||, for metrics
  std::size_t m = 0;
  bool degenerate = false;
};

inline OmegaEstimate omega_from_points(Tape& tape, const TapedCritic& critic,
                                       const Batch& points) {
  OmegaEstimate est;
  est.m = points.n;
  Var acc{};
  double norm_acc = 0.0;
  for (std::size_t j = 0; j < points.n; ++j) {
    Var x = tape.constant(points.row(j));
    Var y = critic(tape, x);
    if (tape.length(y) != 1)
      throw std::invalid_argument("omega: critic output must be scalar");
    Var g = tape.backward(y, {x})[0];
    Var sq = tape.sqnorm(g);
    norm_acc += std::sqrt(tape.scalar(sq));
    acc = j == 0 ? sq : tape.add(acc, sq);
  }
  est.mean_sqnorm = tape.smul(acc, 1.0 / static_cast<double>(points.n));
  est.omega = tape.saxpb(est.mean_sqnorm, -1.0, 1.0);
  est.value = tape.scalar(est.omega);
  est.mean_sqnorm_value = tape.scalar(est.mean_sqnorm);
  est.mean_grad_norm = norm_acc / static_cast<double>(points.n);
  return est;
}

// Degenerate pair (x_i = x_j) falls back to the single-point estimate so
// training loops stay total.
inline OmegaEstimate omega(Tape& tape, const TapedCritic& critic,
                           std::span<const double> xi,
                           std::span<const double> xj, std::size_t m,
                           Rng& rng) {
  auto batch = interpolate(xi, xj, m, rng);
  if (batch.degenerate) {
    Batch single = Batch::zeros(1, static_cast<int>(xi.size()));
    for (std::size_t k = 0; k < xi.size(); ++k) single.data[k] = xi[k];
    auto est = omega_from_points(tape, critic, single);
    est.degenerate = true;
    return est;
  }
  return omega_from_points(tape, critic, batch.points);
}

inline OmegaEstimate omega_with_ts(Tape& tape, const TapedCritic& critic,
                                   std::span<const double> xi,
                                   std::span<const double> xj,
                                   std::span<const double> ts) {
  auto batch = interpolate_with_ts(xi, xj, ts);
  auto est = omega_from_points(tape, critic, batch.points);
  est.degenerate = batch.degenerate;
  return est;
}

// Augmented Lagrangian term for the inequality constraint Omega >= 0 with the
// slack substituted by its optimal value s* = max(Omega - alpha/rho, 0):
//   term = alpha (Omega - s*) - rho/2 (Omega - s*)^2.
// alpha enters as a tape leaf so the same backward pass yields g_alpha.
inline Var alm_term(Tape& tape, Var omega_var, Var alpha, double rho) {
  if (rho <= 0.0) throw std::invalid_argument("alm_term: rho must be > 0");
  Var shifted = tape.sub(omega_var, tape.smul(alpha, 1.0 / rho));
  Var slack = tape.maxs(shifted, 0.0);
  Var r = tape.sub(omega_var, slack);
  return tape.sub(tape.mul(alpha, r), tape.smul(tape.square(r), rho / 2.0));
}

// Penalty-method alternatives: one-sided -lambda max(-Omega, 0)^2 penalizes
// only violations; two-sided -lambda Omega^2 centers the estimate at the ball
// boundary.
inline Var gp_term(Tape& tape, Var omega_var, double lambda, GpMode mode) {
  if (lambda <= 0.0) throw std::invalid_argument("gp_term: lambda must be > 0");
  if (mode == GpMode::kOneSided) {
    Var viol = tape.maxs(tape.neg(omega_var), 0.0);
    return tape.smul(tape.square(viol), -lambda);
  }
  return tape.smul(tape.square(omega_var), -lambda);
}

// Zero-centered variant: -lambda (S^2 + S) on the mean squared gradient norm,
// which reduces to -lambda (w^4 + w^2) for the 1D linear critic.
inline Var cp_term(Tape& tape, Var mean_sqnorm, double lambda) {
  if (lambda <= 0.0) throw std::invalid_argument("cp_term: lambda must be > 0");
  return tape.smul(tape.add(tape.square(mean_sqnorm), mean_sqnorm), -lambda);
}

// Classic per-pair gradient penalty with a single interpolation point:
// -lambda (||grad_x D(xhat)|| - target)^2.
struct WganGpTerm {
  Var term;
  double grad_norm = 0.0;
  double omega_value = 0.0;  // 1 - ||grad||^2 for metrics
};

inline WganGpTerm wgan_gp_term_at(Tape& tape, const TapedCritic& critic,
                                  std::span<const double> xi,
                                  std::span<const double> xj, double lambda,
                                  double t, double target = 1.0) {
  if (lambda <= 0.0) throw std::invalid_argument("wgan_gp_term: lambda must be > 0");
  std::vector<double> point(xi.size());
  for (std::size_t k = 0; k < xi.size(); ++k)
    point[k] = t * xi[k] + (1.0 - t) * xj[k];
  Var x = tape.constant(std::span<const double>(point));
  Var y = critic(tape, x);
  Var g = tape.backward(y, {x})[0];
  Var sq = tape.sqnorm(g);
  Var nrm = tape.sqrt(sq);
  WganGpTerm out;
  out.term = tape.smul(tape.square(tape.saxpb(nrm, 1.0, -target)), -lambda);
  out.grad_norm = tape.scalar(nrm);
  out.omega_value = 1.0 - tape.scalar(sq);
  return out;
}

inline WganGpTerm wgan_gp_term(Tape& tape, const TapedCritic& critic,
                               std::span<const double> xi,
                               std::span<const double> xj, double lambda,
                               Rng& rng, double target = 1.0) {
  return wgan_gp_term_at(tape, critic, xi, xj, lambda, rng.uniform(), target);
}

// Equality-style ALM on the per-point statistic h = 1 - ||grad_x D(xhat)||,
// summed over the m points of the pair (no slack).
struct WganAlTerm {
  Var term;
  double mean_grad_norm = 0.0;
  double omega_value = 0.0;
};

inline WganAlTerm wgan_al_term_with_ts(Tape& tape, const TapedCritic& critic,
                                       std::span<const double> xi,
                                       std::span<const double> xj,
                                       std::span<const double> ts, Var alpha,
                                       double rho) {
  if (ts.empty()) throw std::invalid_argument("wgan_al_term: m must be >= 1");
  if (rho <= 0.0) throw std::invalid_argument("wgan_al_term: rho must be > 0");
  const std::size_t m = ts.size();
  auto batch = interpolate_with_ts(xi, xj, ts);
  Var acc{};
  double norm_acc = 0.0;
  double sq_acc = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    Var x = tape.constant(batch.points.row(j));
    Var y = critic(tape, x);
    Var g = tape.backward(y, {x})[0];
    Var sq = tape.sqnorm(g);
    Var h = tape.saxpb(tape.sqrt(sq), -1.0, 1.0);
    Var piece = tape.sub(tape.mul(alpha, h), tape.smul(tape.square(h), rho / 2.0));
    acc = j == 0 ? piece : tape.add(acc, piece);
    norm_acc += std::sqrt(tape.scalar(sq));
    sq_acc += tape.scalar(sq);
  }
  WganAlTerm out;
  out.term = acc;
  out.mean_grad_norm = norm_acc / static_cast<double>(m);
  out.omega_value = 1.0 - sq_acc / static_cast<double>(m);
  return out;
}

inline WganAlTerm wgan_al_term(Tape& tape, const TapedCritic& critic,
                               std::span<const double> xi,
                               std::span<const double> xj, std::size_t m,
                               Var alpha, double rho, Rng& rng) {
  if (m == 0) throw std::invalid_argument("wgan_al_term: m must be >= 1");
  std::vector<double> ts(m);
  for (auto& t : ts) t = rng.uniform();
  return wgan_al_term_with_ts(tape, critic, xi, xj, ts, alpha, rho);
}

// Batch-level constraint of the total-integral kind: a single statistic
// Omega_S = 1 - (1/N) sum ||grad_x D||^2 over all mu samples, with an
// equality ALM term. Contrast with the per-pair Omega above, which is the
// stronger constraint.
struct SganAlTerm {
  Var term;
  Var omega_s;
  double omega_value = 0.0;
  double mean_grad_norm = 0.0;
};

inline SganAlTerm sgan_al_term(Tape& tape, const TapedCritic& critic,
                               const Batch& mu_points, Var alpha, double rho) {
  if (mu_points.n == 0)
    throw std::invalid_argument("sgan_al_term: empty measure sample");
  if (rho <= 0.0) throw std::invalid_argument("sgan_al_term: rho must be > 0");
  Var acc{};
  double norm_acc = 0.0;
  for (std::size_t j = 0; j < mu_points.n; ++j) {
    Var x = tape.constant(mu_points.row(j));
    Var y = critic(tape, x);
    Var g = tape.backward(y, {x})[0];
    Var sq = tape.sqnorm(g);
    norm_acc += std::sqrt(tape.scalar(sq));
    acc = j == 0 ? sq : tape.add(acc, sq);
  }
  SganAlTerm out;
  Var s = tape.smul(acc, 1.0 / static_cast<double>(mu_points.n));
  out.omega_s = tape.saxpb(s, -1.0, 1.0);
  out.term = tape.sub(tape.mul(alpha, out.omega_s),
                      tape.smul(tape.square(out.omega_s), rho / 2.0));
  out.omega_value = tape.scalar(out.omega_s);
  out.mean_grad_norm = norm_acc / static_cast<double>(mu_points.n);
  return out;
}

// Multiplier update. The swgan/sgan rule clamps at zero (inequality
// constraint); the wgan-al rule is plain SGD on alpha.
inline double alpha_update(const AlmState& state, double g_alpha,
                           Method method) {
  const double stepped = state.alpha - state.rho * g_alpha;
  if (method == Method::kWganAl) return stepped;
  return std::max(stepped, 0.0);
}

}  // namespace swlab
