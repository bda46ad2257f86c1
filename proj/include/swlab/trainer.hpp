#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "swlab/constraints.hpp"
#include "swlab/nets.hpp"
#include "swlab/oracle.hpp"
#include "swlab/rng.hpp"
#include "swlab/tape.hpp"
#include "swlab/toydata.hpp"

namespace swlab {

struct TrainConfig {
  PenaltyConfig penalty;
  std::size_t batch_size = 64;     // n
  std::size_t critic_iters = 5;    // k critic steps per iteration
  double learning_rate = 2e-4;
  bool lr_decay = false;           // linear decay to 0 over total_iterations
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.9;
  double adam_eps = 1e-8;
  std::size_t total_iterations = 300;
  std::size_t log_every = 10;
  std::uint64_t seed = 1;
  MlpSpec critic_spec;
  MlpSpec gen_spec;                // input_dim = noise dim; ignored when fixed
  ToyDistribution real;
  std::optional<ToyDistribution> fixed_generator;
  std::size_t eval_samples = 512;  // held-out per side
  bool oracle_enabled = true;

  void validate() const {
    penalty.validate();
    if (batch_size == 0 || critic_iters == 0)
      throw std::invalid_argument("train: n and k must be >= 1");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 ||
        adam_beta2 >= 1.0)
      throw std::invalid_argument("train: betas must lie in [0, 1)");
    real.validate();
    critic_spec.validate();
    if (critic_spec.output_dim != 1 || critic_spec.output_act != OutAct::kLinear)
      throw std::invalid_argument("train: critic must have scalar linear output");
    if (fixed_generator) {
      fixed_generator->validate();
      if (fixed_generator->dim() != static_cast<int>(critic_spec.input_dim))
        throw std::invalid_argument("train: fixed generator dimension mismatch");
    } else {
      gen_spec.validate();
      if (gen_spec.output_dim != critic_spec.input_dim)
        throw std::invalid_argument("train: generator output dimension mismatch");
    }
    if (real.dim() != static_cast<int>(critic_spec.input_dim))
      throw std::invalid_argument("train: real data dimension mismatch");
  }
};

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t t = 0;

  void ensure(std::size_t n) {
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
      t = 0;
    }
  }
};

// Standard bias-corrected update. The ascent flag flips the step so the same
// routine serves critic maximization and generator minimization.
inline void adam_update(AdamState& st, std::span<double> params,
                        std::span<const double> grad, double lr, double beta1,
                        double beta2, double eps, bool ascent) {
  if (params.size() != grad.size())
    throw std::invalid_argument("adam_update: shape mismatch");
  st.ensure(params.size());
  ++st.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = ascent ? -grad[i] : grad[i];
    st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g;
    st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g * g;
    const double mh = st.m[i] / bc1;
    const double vh = st.v[i] / bc2;
    params[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

struct StepMetrics {
  double objective = 0.0;  // training-batch mean D(real) - mean D(fake)
  double omega_mean = 0.0;
  double omega_min = 0.0;
  double grad_norm_mean = 0.0;  // mean interpolation gradient norm
  double alpha = 0.0;
  bool ok = true;
  std::string error;
};

struct LogEntry {
  std::size_t step = 0;
  double objective = 0.0;  // held-out objective
  double omega_mean = 0.0;
  double omega_min = 0.0;
  double grad_norm_mean = 0.0;
  double alpha = 0.0;
  double dual_gap = std::numeric_limits<double>::quiet_NaN();
};

struct RunRecord {
  std::vector<LogEntry> entries;
  double oracle_distance = std::numeric_limits<double>::quiet_NaN();
  bool aborted = false;
  std::size_t abort_step = 0;
  std::string abort_reason;
};

// One adversarial run: k critic ascent steps per iteration, then one
// generator descent step unless the generator is a fixed distribution.
// All state (Adam moments, multiplier, tape) is owned here; a run is
// strictly sequential. Concurrent runs use distinct Trainer instances.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : cfg_(std::move(cfg)),
        real_rng_(cfg_.seed, 2),
        fake_rng_(cfg_.seed, 3),
        interp_rng_(cfg_.seed, 4),
        eval_rng_(cfg_.seed, 5),
        metrics_rng_(cfg_.seed, 6),
        gen_noise_rng_(cfg_.seed, 7) {
    cfg_.validate();
    Rng critic_init(cfg_.seed, 0);
    critic_ = mlp_init(cfg_.critic_spec, critic_init);
    if (!cfg_.fixed_generator) {
      Rng gen_init(cfg_.seed, 1);
      gen_ = mlp_init(cfg_.gen_spec, gen_init);
    }
    alm_.alpha = cfg_.penalty.alpha0;
    alm_.rho = cfg_.penalty.rho;
    real_eval_ = sample(cfg_.real, cfg_.eval_samples, eval_rng_);
    if (cfg_.fixed_generator) {
      fake_eval_ = sample(*cfg_.fixed_generator, cfg_.eval_samples, eval_rng_);
    } else {
      z_eval_ = gaussian_noise(cfg_.eval_samples, cfg_.gen_spec.input_dim,
                               eval_rng_);
    }
  }

  const TrainConfig& config() const { return cfg_; }
  MlpParams& critic() { return critic_; }
  const MlpParams& critic() const { return critic_; }
  const MlpParams& generator() const { return gen_; }
  const AlmState& alm() const { return alm_; }

  StepMetrics critic_step(double lr) {
    const std::size_t n = cfg_.batch_size;
    Batch real = sample(cfg_.real, n, real_rng_);
    Batch fake = sample_fake(n);
    return critic_step_on(real, fake, lr);
  }

  // Core update on given batches; exposed for tests that pin the data.
  StepMetrics critic_step_on(const Batch& real, const Batch& fake, double lr) {
    const std::size_t n = real.n;
    const PenaltyConfig& pc = cfg_.penalty;
    StepMetrics metrics;
    metrics.alpha = alm_.alpha;

    tape_.reset();
    TapedMlp tm = record_mlp(tape_, critic_);
    TapedCritic critic_fn = [&tm](Tape& t, Var x) {
      return mlp_forward(t, tm, x);
    };
    const bool uses_alpha = pc.method == Method::kSwganAl ||
                            pc.method == Method::kWganAl ||
                            pc.method == Method::kSganAl;
    Var alpha_var{};
    if (uses_alpha) alpha_var = tape_.constant(alm_.alpha);

    Var acc{};
    double obj_real = 0.0, obj_fake = 0.0;
    double omega_sum = 0.0, omega_min = std::numeric_limits<double>::infinity();
    double norm_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Var xr = tape_.constant(real.row(i));
      Var xf = tape_.constant(fake.row(i));
      Var dr = mlp_forward(tape_, tm, xr);
      Var df = mlp_forward(tape_, tm, xf);
      obj_real += tape_.scalar(dr);
      obj_fake += tape_.scalar(df);
      Var term = tape_.sub(dr, df);
      double pair_omega = 0.0, pair_norm = 0.0;
      switch (pc.method) {
        case Method::kSwganAl: {
          auto est = omega(tape_, critic_fn, real.row(i), fake.row(i), pc.m,
                           interp_rng_);
          term = tape_.add(term, alm_term(tape_, est.omega, alpha_var, pc.rho));
          pair_omega = est.value;
          pair_norm = est.mean_grad_norm;
          break;
        }
        case Method::kSwganGp: {
          auto est = omega(tape_, critic_fn, real.row(i), fake.row(i), pc.m,
                           interp_rng_);
          term = tape_.add(term, gp_term(tape_, est.omega, pc.lambda, pc.gp_mode));
          pair_omega = est.value;
          pair_norm = est.mean_grad_norm;
          break;
        }
        case Method::kSwganCp: {
          auto est = omega(tape_, critic_fn, real.row(i), fake.row(i), pc.m,
                           interp_rng_);
          term = tape_.add(term, cp_term(tape_, est.mean_sqnorm, pc.lambda));
          pair_omega = est.value;
          pair_norm = est.mean_grad_norm;
          break;
        }
        case Method::kWganGp: {
          auto wg = wgan_gp_term(tape_, critic_fn, real.row(i), fake.row(i),
                                 pc.lambda, interp_rng_, pc.g0);
          term = tape_.add(term, wg.term);
          pair_omega = wg.omega_value;
          pair_norm = wg.grad_norm;
          break;
        }
        case Method::kWganAl: {
          auto wa = wgan_al_term(tape_, critic_fn, real.row(i), fake.row(i),
                                 pc.m, alpha_var, pc.rho, interp_rng_);
          term = tape_.add(term, wa.term);
          pair_omega = wa.omega_value;
          pair_norm = wa.mean_grad_norm;
          break;
        }
        case Method::kSganAl:
          break;  // batch-level term added after the loop
      }
      if (pc.method != Method::kSganAl) {
        omega_sum += pair_omega;
        omega_min = std::min(omega_min, pair_omega);
        norm_sum += pair_norm;
      }
      acc = i == 0 ? term : tape_.add(acc, term);
    }
    Var loss = tape_.smul(acc, 1.0 / static_cast<double>(n));
    if (pc.method == Method::kSganAl) {
      Batch mu = sgan_measure_points(real, fake);
      auto sg = sgan_al_term(tape_, critic_fn, mu, alpha_var, pc.rho);
      loss = tape_.add(loss, sg.term);
      omega_sum = sg.omega_value * n;
      omega_min = sg.omega_value;
      norm_sum = sg.mean_grad_norm * n;
    }

    metrics.objective = (obj_real - obj_fake) / static_cast<double>(n);
    metrics.omega_mean = omega_sum / static_cast<double>(n);
    metrics.omega_min = omega_min;
    metrics.grad_norm_mean = norm_sum / static_cast<double>(n);

    if (!std::isfinite(tape_.scalar(loss))) {
      metrics.ok = false;
      metrics.error = "non-finite critic loss";
      return metrics;
    }

    std::vector<Var> wrt = {tm.params};
    if (uses_alpha) wrt.push_back(alpha_var);
    auto grads = tape_.backward(loss, wrt);
    auto gw = tape_.value(grads[0]);
    for (double g : gw) {
      if (!std::isfinite(g)) {
        metrics.ok = false;
        metrics.error = "non-finite critic gradient";
        return metrics;
      }
    }
    adam_update(adam_critic_, critic_.flat, gw, lr, cfg_.adam_beta1,
                cfg_.adam_beta2, cfg_.adam_eps, /*ascent=*/true);
    if (uses_alpha) {
      const double g_alpha = tape_.scalar(grads[1]);
      alm_.alpha = alpha_update(alm_, g_alpha, pc.method);
    }
    metrics.alpha = alm_.alpha;
    return metrics;
  }

  StepMetrics generator_step(double lr) {
    StepMetrics metrics;
    if (cfg_.fixed_generator)
      throw std::logic_error("generator_step: generator is fixed");
    const std::size_t n = cfg_.batch_size;
    Batch z = gaussian_noise(n, cfg_.gen_spec.input_dim, gen_noise_rng_);
    tape_.reset();
    TapedMlp gen_tm = record_mlp(tape_, gen_);
    TapedMlp critic_tm = record_mlp(tape_, critic_);
    Var acc{};
    for (std::size_t i = 0; i < n; ++i) {
      Var zi = tape_.constant(z.row(i));
      Var xf = mlp_forward(tape_, gen_tm, zi);
      Var d = mlp_forward(tape_, critic_tm, xf);
      acc = i == 0 ? d : tape_.add(acc, d);
    }
    Var loss = tape_.smul(acc, -1.0 / static_cast<double>(n));
    if (!std::isfinite(tape_.scalar(loss))) {
      metrics.ok = false;
      metrics.error = "non-finite generator loss";
      return metrics;
    }
    auto grads = tape_.backward(loss, {gen_tm.params});
    auto g = tape_.value(grads[0]);
    for (double gi : g) {
      if (!std::isfinite(gi)) {
        metrics.ok = false;
        metrics.error = "non-finite generator gradient";
        return metrics;
      }
    }
    adam_update(adam_gen_, gen_.flat, g, lr, cfg_.adam_beta1, cfg_.adam_beta2,
                cfg_.adam_eps, /*ascent=*/false);
    return metrics;
  }

  // on_iteration, when given, fires after iteration 0 (initial state) and
  // after every completed iteration; train1d uses it for profile checkpoints.
  RunRecord run(const std::function<void(std::size_t)>& on_iteration = {}) {
    RunRecord rec;
    StepMetrics last = probe_metrics();
    refresh_oracle(rec);
    rec.entries.push_back(log_entry(0, last, rec));
    if (on_iteration) on_iteration(0);
    for (std::size_t it = 1; it <= cfg_.total_iterations; ++it) {
      const double lr = cfg_.lr_decay
                            ? cfg_.learning_rate *
                                  (1.0 - static_cast<double>(it - 1) /
                                             static_cast<double>(cfg_.total_iterations))
                            : cfg_.learning_rate;
      for (std::size_t j = 0; j < cfg_.critic_iters; ++j) {
        last = critic_step(lr);
        if (!last.ok) {
          rec.aborted = true;
          rec.abort_step = it;
          rec.abort_reason = last.error;
          return rec;
        }
      }
      if (!cfg_.fixed_generator) {
        auto gm = generator_step(lr);
        if (!gm.ok) {
          rec.aborted = true;
          rec.abort_step = it;
          rec.abort_reason = gm.error;
          return rec;
        }
      }
      if (it % cfg_.log_every == 0 || it == cfg_.total_iterations) {
        if (!cfg_.fixed_generator) refresh_oracle(rec);
        rec.entries.push_back(log_entry(it, last, rec));
      }
    }
    return rec;
  }

  // Held-out objective of the current critic.
  double eval_objective() {
    const Batch fake = eval_fake();
    double dr = 0.0, df = 0.0;
    for (std::size_t i = 0; i < real_eval_.n; ++i)
      dr += critic_value(critic_, real_eval_.row(i));
    for (std::size_t i = 0; i < fake.n; ++i)
      df += critic_value(critic_, fake.row(i));
    return dr / real_eval_.n - df / fake.n;
  }

  double oracle_distance() {
    const Batch fake = eval_fake();
    if (real_eval_.dim == 1) {
      return w1_sorted_1d(std::span<const double>(real_eval_.data),
                          std::span<const double>(fake.data))
          .distance;
    }
    const std::size_t n = std::min(real_eval_.n, kAssignmentCapacity);
    Batch a = Batch::zeros(n, real_eval_.dim);
    Batch b = Batch::zeros(n, real_eval_.dim);
    std::copy_n(real_eval_.data.begin(), n * real_eval_.dim, a.data.begin());
    std::copy_n(fake.data.begin(), n * fake.dim, b.data.begin());
    return w1_assignment(a, b).distance;
  }

  static Batch gaussian_noise(std::size_t n, std::uint32_t dim, Rng& rng) {
    Batch z = Batch::zeros(n, static_cast<int>(dim));
    for (auto& v : z.data) v = rng.normal();
    return z;
  }

 private:
  Batch sample_fake(std::size_t n) {
    if (cfg_.fixed_generator) return sample(*cfg_.fixed_generator, n, fake_rng_);
    Batch z = gaussian_noise(n, cfg_.gen_spec.input_dim, fake_rng_);
    Batch out = Batch::zeros(n, static_cast<int>(cfg_.gen_spec.output_dim));
    for (std::size_t i = 0; i < n; ++i) {
      auto x = mlp_forward_value(gen_, z.row(i));
      std::copy(x.begin(), x.end(), out.row(i).begin());
    }
    return out;
  }

  Batch eval_fake() {
    if (cfg_.fixed_generator) return fake_eval_;
    Batch out = Batch::zeros(z_eval_.n, static_cast<int>(cfg_.gen_spec.output_dim));
    for (std::size_t i = 0; i < z_eval_.n; ++i) {
      auto x = mlp_forward_value(gen_, z_eval_.row(i));
      std::copy(x.begin(), x.end(), out.row(i).begin());
    }
    return out;
  }

  Batch sgan_measure_points(const Batch& real, const Batch& fake) {
    if (cfg_.penalty.sgan_measure == SganMeasure::kMixed) {
      Batch mu = Batch::zeros(real.n + fake.n, real.dim);
      std::copy(real.data.begin(), real.data.end(), mu.data.begin());
      std::copy(fake.data.begin(), fake.data.end(),
                mu.data.begin() + real.data.size());
      return mu;
    }
    Batch mu = Batch::zeros(real.n, real.dim);
    for (std::size_t i = 0; i < real.n; ++i) {
      const double t = interp_rng_.uniform();
      auto xi = real.row(i);
      auto xj = fake.row(i);
      auto r = mu.row(i);
      for (int k = 0; k < real.dim; ++k)
        r[k] = t * xi[k] + (1.0 - t) * xj[k];
    }
    return mu;
  }

  // Straight-loop constraint statistics for the step-0 log entry.
  StepMetrics probe_metrics() {
    StepMetrics m;
    m.alpha = alm_.alpha;
    const std::size_t pairs = std::min<std::size_t>(cfg_.batch_size, real_eval_.n);
    const Batch fake = eval_fake();
    double omega_sum = 0.0, omega_min = std::numeric_limits<double>::infinity();
    double norm_sum = 0.0;
    std::vector<double> point(real_eval_.dim);
    for (std::size_t i = 0; i < pairs; ++i) {
      auto xi = real_eval_.row(i);
      auto xj = fake.row(i % fake.n);
      double sq_acc = 0.0, nrm_acc = 0.0;
      for (std::size_t s = 0; s < cfg_.penalty.m; ++s) {
        const double t = metrics_rng_.uniform();
        for (int k = 0; k < real_eval_.dim; ++k)
          point[k] = t * xi[k] + (1.0 - t) * xj[k];
        auto g = input_gradient_value(critic_, point);
        double sq = 0.0;
        for (double gk : g) sq += gk * gk;
        sq_acc += sq;
        nrm_acc += std::sqrt(sq);
      }
      const double om = 1.0 - sq_acc / static_cast<double>(cfg_.penalty.m);
      omega_sum += om;
      omega_min = std::min(omega_min, om);
      norm_sum += nrm_acc / static_cast<double>(cfg_.penalty.m);
    }
    m.objective = 0.0;
    m.omega_mean = omega_sum / static_cast<double>(pairs);
    m.omega_min = omega_min;
    m.grad_norm_mean = norm_sum / static_cast<double>(pairs);
    return m;
  }

  void refresh_oracle(RunRecord& rec) {
    if (cfg_.oracle_enabled) rec.oracle_distance = oracle_distance();
  }

  LogEntry log_entry(std::size_t step, const StepMetrics& m,
                     const RunRecord& rec) {
    LogEntry e;
    e.step = step;
    e.objective = eval_objective();
    e.omega_mean = m.omega_mean;
    e.omega_min = m.omega_min;
    e.grad_norm_mean = m.grad_norm_mean;
    e.alpha = alm_.alpha;
    e.dual_gap = cfg_.oracle_enabled
                     ? rec.oracle_distance - e.objective
                     : std::numeric_limits<double>::quiet_NaN();
    return e;
  }

  TrainConfig cfg_;
  MlpParams critic_, gen_;
  AlmState alm_;
  AdamState adam_critic_, adam_gen_;
  Tape tape_;
  Rng real_rng_, fake_rng_, interp_rng_, eval_rng_, metrics_rng_, gen_noise_rng_;
  Batch real_eval_, fake_eval_, z_eval_;
};

}  // namespace swlab
