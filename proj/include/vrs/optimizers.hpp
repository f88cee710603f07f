#ifndef VRS_OPTIMIZERS_HPP
#define VRS_OPTIMIZERS_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "numeric.hpp"
#include "problems.hpp"
#include "sampling.hpp"

namespace vrs {

enum class method_kind { svrg, saga, sarah, sarah_convex };

inline std::string_view to_string(method_kind m) {
  switch (m) {
    case method_kind::svrg:
      return "svrg";
    case method_kind::saga:
      return "saga";
    case method_kind::sarah:
      return "sarah";
    case method_kind::sarah_convex:
      return "sarah_convex";
  }
  return "?";
}

inline method_kind parse_method_kind(std::string_view s) {
  if (s == "svrg") return method_kind::svrg;
  if (s == "saga") return method_kind::saga;
  if (s == "sarah") return method_kind::sarah;
  if (s == "sarah_convex" || s == "sarah-convex") return method_kind::sarah_convex;
  throw input_error("unknown method '" + std::string(s) + "'");
}

// Universal constants of the nonconvex complexity theorems.
struct theorem_constants {
  double mu2 = 0.25;        // SVRG step-size constant
  double nu2 = 1.0 / 40.0;  // SVRG rate constant for mu2 = 1/4
  double mu3 = 1.0 / 3.0;   // SAGA step-size constant
  double nu3 = 1.0 / 12.0;  // SAGA rate constant for mu3 = 1/3
};

// How SAGA picks the memory entries J_t to overwrite.
enum class saga_refresh {
  independent,     // each j with probability d/n, independently
  single_uniform,  // exactly one uniformly random j per step (the classic b = 1 method)
};

struct run_config {
  run_config(method_kind m, sampling_scheme s) : method(m), scheme(std::move(s)) {}

  method_kind method;
  sampling_scheme scheme;
  double eta = 0.0;
  std::size_t inner_steps = 1;  // m (SVRG, SARAH)
  std::size_t outer_loops = 0;  // M (SVRG, SARAH); 0 leaves only the epoch budget
  std::size_t iterations = 0;   // T (SAGA); 0 leaves only the epoch budget
  double refresh_size = 0.0;    // d (SAGA): E|J_t|
  saga_refresh refresh = saga_refresh::independent;
  theorem_constants constants;
  double beta = 0.0;  // recorded for traceability; never read by the methods
  complexity_constants derived;
  std::uint64_t seed = 1;
  double epsilon = 1e-4;
  double max_epochs = 60.0;  // <= 0 disables the budget
  double checkpoint_every = 1.0;
  bool record_wall_time = false;
  std::size_t replicates = 1;  // sarah_convex only
  Eigen::VectorXd x0;          // empty means the zero vector
  std::vector<std::string> notes;
};

struct checkpoint {
  double epoch = 0.0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  std::uint64_t sgrad_evals = 0;
  std::int64_t wall_ns = 0;
};

struct run_trace {
  std::vector<checkpoint> checkpoints;
  Eigen::VectorXd x_out;   // the method's output x_a
  Eigen::VectorXd x_last;  // last iterate produced
  std::uint64_t sgrad_evals = 0;
  std::uint64_t iterations = 0;
};

class divergence_error : public error {
 public:
  divergence_error(const std::string& what, run_trace trace) : error(what), trace_(std::move(trace)) {}
  const run_trace& trace() const noexcept { return trace_; }

 private:
  run_trace trace_;
};

inline constexpr double divergence_threshold = 1e100;

// ---------------------------------------------------------------------------
// Gradient estimators. Each works on the minibatch S and the marginals p of
// the sampling that produced it; the weight of component i is 1 / (n p_i).

class svrg_estimator {
 public:
  void reset(const problem& prob, const Eigen::VectorXd& anchor) {
    anchor_ = anchor;
    scales_.resize(prob.n());
    grad_ = prob.full_gradient(anchor, scales_);
  }

  const Eigen::VectorXd& anchor() const noexcept { return anchor_; }
  const Eigen::VectorXd& anchor_gradient() const noexcept { return grad_; }

  void direction(const problem& prob, std::span<const double> p, std::span<const std::size_t> batch,
                 const Eigen::VectorXd& x, Eigen::VectorXd& out) const {
    const double nd = static_cast<double>(prob.n());
    out = grad_;
    double weight_sum = 0.0;
    for (std::size_t i : batch) {
      const double w = 1.0 / (nd * p[i]);
      prob.add_row(i, w * (prob.scale(i, x) - scales_[i]), out);
      weight_sum += w;
    }
    if (prob.mu() > 0.0 && !batch.empty()) out += (weight_sum * prob.mu()) * (x - anchor_);
  }

 private:
  Eigen::VectorXd anchor_;
  Eigen::VectorXd grad_;
  std::vector<double> scales_;
};

/// Per-component SAGA memory. For linear-composite losses the anchor gradient
/// grad f_i(alpha_i) = s_i a_i (+ mu alpha_i) is determined by the scalar s_i,
/// so only the scalars are kept unless the loss has a strong-convexity term,
/// in which case the dense anchors are stored as well.
class saga_memory {
 public:
  void reset(const problem& prob, const Eigen::VectorXd& x) {
    const std::size_t n = prob.n();
    scales_.assign(n, 0.0);
    average_ = prob.full_gradient(x, scales_);
    if (prob.mu() > 0.0) anchors_ = x.replicate(1, static_cast<Eigen::Index>(n));
    else anchors_.resize(0, 0);
    updates_since_sync_ = 0;
  }

  /// g^t = (1/n) sum_i grad f_i(alpha_i^t), maintained incrementally.
  const Eigen::VectorXd& average() const noexcept { return average_; }
  double anchor_scale(std::size_t i) const { return scales_[i]; }

  void direction(const problem& prob, std::span<const double> p, std::span<const std::size_t> batch,
                 const Eigen::VectorXd& x, Eigen::VectorXd& out) const {
    const double nd = static_cast<double>(prob.n());
    out = average_;
    for (std::size_t i : batch) {
      const double w = 1.0 / (nd * p[i]);
      prob.add_row(i, w * (prob.scale(i, x) - scales_[i]), out);
      if (prob.mu() > 0.0) out += (w * prob.mu()) * (x - anchors_.col(static_cast<Eigen::Index>(i)));
    }
  }

  /// Sets alpha_j = x for every j in refreshed and updates the running average.
  void refresh(const problem& prob, std::span<const std::size_t> refreshed, const Eigen::VectorXd& x) {
    const double nd = static_cast<double>(prob.n());
    for (std::size_t j : refreshed) {
      const double s = prob.scale(j, x);
      prob.add_row(j, (s - scales_[j]) / nd, average_);
      scales_[j] = s;
      if (prob.mu() > 0.0) {
        auto col = anchors_.col(static_cast<Eigen::Index>(j));
        average_ += (prob.mu() / nd) * (x - col);
        col = x;
      }
    }
    updates_since_sync_ += refreshed.size();
    if (updates_since_sync_ >= prob.n()) {
      average_ = recomputed_average(prob);
      updates_since_sync_ = 0;
    }
  }

  Eigen::VectorXd recomputed_average(const problem& prob) const {
    compensated_vector acc(static_cast<Eigen::Index>(prob.d()));
    for (std::size_t i = 0; i < prob.n(); ++i) {
      const auto r = prob.data().row(i);
      if (prob.mu() > 0.0) {
        Eigen::VectorXd g = prob.mu() * anchors_.col(static_cast<Eigen::Index>(i));
        for (std::size_t k = 0; k < r.nnz(); ++k) g[r.index[k]] += scales_[i] * r.value[k];
        acc.add(g);
      } else {
        for (std::size_t k = 0; k < r.nnz(); ++k) acc.add(r.index[k], scales_[i] * r.value[k]);
      }
    }
    return acc.value() / static_cast<double>(prob.n());
  }

 private:
  std::vector<double> scales_;
  Eigen::VectorXd average_;
  Eigen::MatrixXd anchors_;
  std::size_t updates_since_sync_ = 0;
};

/// Recursive estimator v^t = v^{t-1} + sum_{i in S} (grad f_i(x^t) - grad f_i(x^{t-1})) / (n p_i).
class sarah_estimator {
 public:
  void reset(const problem& prob, const Eigen::VectorXd& x) { v_ = prob.full_gradient(x); }

  void advance(const problem& prob, std::span<const double> p, std::span<const std::size_t> batch,
               const Eigen::VectorXd& x, const Eigen::VectorXd& x_prev) {
    const double nd = static_cast<double>(prob.n());
    double weight_sum = 0.0;
    for (std::size_t i : batch) {
      const double w = 1.0 / (nd * p[i]);
      prob.add_row(i, w * (prob.scale(i, x) - prob.scale(i, x_prev)), v_);
      weight_sum += w;
    }
    if (prob.mu() > 0.0 && !batch.empty()) v_ += (weight_sum * prob.mu()) * (x - x_prev);
  }

  const Eigen::VectorXd& value() const noexcept { return v_; }

 private:
  Eigen::VectorXd v_;
};

// ---------------------------------------------------------------------------
// Theorem-driven hyperparameters.

struct derive_options {
  std::optional<double> gap;  // f(x0) - f(x*) estimate; sizes the run for epsilon when set
  bool enforce_batch_bound = true;
  theorem_constants constants;
};

struct svrg_parameters {
  double eta;
  std::size_t m;
  std::size_t raw_m;  // floor(n alpha / (3 b mu2)) before clipping to 1
};

namespace detail {
// Integer parameters come from products of exactly-representable rationals; a
// relative nudge keeps rounding noise from moving them across an integer.
inline double floor_exact(double x) { return std::floor(x * (1.0 + 1e-12)); }
inline double ceil_exact(double x) { return std::ceil(x * (1.0 - 1e-12)); }
}  // namespace detail

inline svrg_parameters svrg_parameters_for(std::size_t n, double b, double alpha, double Lbar,
                                           const theorem_constants& c = {}) {
  const double nd = static_cast<double>(n);
  const double n23 = std::cbrt(nd * nd);
  svrg_parameters out{};
  out.eta = c.mu2 * b / (alpha * Lbar * n23);
  out.raw_m = static_cast<std::size_t>(detail::floor_exact(nd * alpha / (3.0 * b * c.mu2)));
  out.m = std::max<std::size_t>(1, out.raw_m);
  return out;
}

inline double saga_step_size(std::size_t n, double b, double alpha, double Lbar, const theorem_constants& c = {}) {
  const double nd = static_cast<double>(n);
  return c.mu3 * b / (alpha * Lbar * std::cbrt(nd * nd));
}

/// Largest step allowed for one SARAH outer loop of length m.
inline double sarah_step_size(double b, double alpha, double Lbar, std::size_t m) {
  return 2.0 / (Lbar * (std::sqrt(1.0 + 4.0 * alpha * static_cast<double>(m) / b) + 1.0));
}

namespace detail {

inline complexity_constants checked_alpha(const problem& prob, const sampling_scheme& scheme) {
  if (scheme.n() != prob.n())
    throw config_error("sampling has n = " + std::to_string(scheme.n()) + " but the problem has n = " +
                       std::to_string(prob.n()));
  return compute_alpha(prob.L(), scheme);
}

inline void check_batch_bound(const char* method, double b, double alpha, std::size_t n, bool enforce) {
  const double nd = static_cast<double>(n);
  const double bound = alpha * std::cbrt(nd * nd);
  if (enforce && b > bound * (1.0 + 1e-12))
    throw config_error(std::string(method) + ": minibatch size b = " + format_double(b) +
                       " violates b <= alpha n^(2/3) = " + format_double(bound));
}

}  // namespace detail

inline run_config derive_svrg_config(const problem& prob, sampling_scheme scheme, double epsilon,
                                     const derive_options& opts = {}) {
  const auto c = detail::checked_alpha(prob, scheme);
  if (!(c.alpha > 0.0)) throw config_error("svrg: alpha = 0 (full batch); the theorem needs alpha > 0");
  const double b = scheme.b();
  const std::size_t n = prob.n();
  detail::check_batch_bound("svrg", b, c.alpha, n, opts.enforce_batch_bound);

  run_config cfg(method_kind::svrg, std::move(scheme));
  const auto sp = svrg_parameters_for(n, b, c.alpha, c.Lbar, opts.constants);
  cfg.eta = sp.eta;
  cfg.inner_steps = sp.m;
  if (sp.raw_m == 0) cfg.notes.push_back("svrg: floor(n alpha / (3 b mu2)) = 0, inner loop length clipped to 1");
  cfg.constants = opts.constants;
  cfg.derived = c;
  cfg.epsilon = epsilon;
  const double nd = static_cast<double>(n);
  cfg.beta = c.Lbar / std::cbrt(nd);
  if (opts.gap) {
    const double T = detail::ceil_exact(c.alpha * c.Lbar * std::cbrt(nd * nd) * *opts.gap / (b * epsilon * opts.constants.nu2));
    const auto t = static_cast<std::size_t>(std::max(1.0, T));
    cfg.outer_loops = (t + cfg.inner_steps - 1) / cfg.inner_steps;
  }
  return cfg;
}

inline run_config derive_saga_config(const problem& prob, sampling_scheme scheme, double epsilon,
                                     const derive_options& opts = {}) {
  const auto c = detail::checked_alpha(prob, scheme);
  if (!(c.alpha > 0.0)) throw config_error("saga: alpha = 0 (full batch); the theorem needs alpha > 0");
  const double b = scheme.b();
  const std::size_t n = prob.n();
  detail::check_batch_bound("saga", b, c.alpha, n, opts.enforce_batch_bound);

  run_config cfg(method_kind::saga, std::move(scheme));
  cfg.eta = saga_step_size(n, b, c.alpha, c.Lbar, opts.constants);
  const double nd = static_cast<double>(n);
  cfg.refresh_size = std::min(b / c.alpha, nd);
  if (b / c.alpha > nd) cfg.notes.push_back("saga: d = b/alpha exceeds n, clipped to n");
  cfg.constants = opts.constants;
  cfg.derived = c;
  cfg.epsilon = epsilon;
  cfg.beta = c.Lbar / std::cbrt(nd);
  if (opts.gap) {
    const double T = detail::ceil_exact(c.alpha * c.Lbar * std::cbrt(nd * nd) * *opts.gap / (b * epsilon * opts.constants.nu3));
    cfg.iterations = static_cast<std::size_t>(std::max(1.0, T));
  }
  return cfg;
}

/// m defaults to ceil(n / b); the step is the largest one the one-loop theorem allows.
inline run_config derive_sarah_config(const problem& prob, sampling_scheme scheme, double epsilon,
                                      std::optional<std::size_t> inner_steps = std::nullopt) {
  const auto c = detail::checked_alpha(prob, scheme);
  const double b = scheme.b();
  const std::size_t n = prob.n();
  const std::size_t m =
      inner_steps.value_or(static_cast<std::size_t>(std::ceil(static_cast<double>(n) / b - 1e-12)));
  if (m == 0) throw config_error("sarah: inner loop length must be positive");
  run_config cfg(method_kind::sarah, std::move(scheme));
  cfg.inner_steps = m;
  cfg.eta = sarah_step_size(b, c.alpha, c.Lbar, m);
  cfg.derived = c;
  cfg.epsilon = epsilon;
  return cfg;
}

/// Single-sample SARAH with p_i = L_i / sum_j L_j and, by default, the
/// strongly convex step eta = 2 / (mu + Lbar).
inline run_config derive_sarah_convex_config(const problem& prob, std::size_t inner_steps,
                                             std::optional<double> eta = std::nullopt) {
  if (inner_steps == 0) throw config_error("sarah_convex: inner loop length must be positive");
  compensated_sum total;
  for (double l : prob.L()) total.add(l);
  std::vector<double> p(prob.L().begin(), prob.L().end());
  for (double& x : p) x /= total.value();
  run_config cfg(method_kind::sarah_convex, sampling_scheme::independent(std::move(p)));
  cfg.inner_steps = inner_steps;
  cfg.outer_loops = 1;
  cfg.eta = eta.value_or(2.0 / (prob.mu() + prob.Lbar()));
  cfg.derived = compute_alpha(prob.L(), cfg.scheme);
  cfg.max_epochs = 0.0;
  if (!(cfg.eta < 2.0 / prob.Lbar())) throw config_error("sarah_convex: step size must satisfy eta < 2 / Lbar");
  return cfg;
}

// ---------------------------------------------------------------------------
// Run bookkeeping.

namespace detail {

class run_monitor {
 public:
  run_monitor(const problem& prob, const run_config& cfg, bool use_budget = true)
      : prob_(prob), record_wall_(cfg.record_wall_time), start_(std::chrono::steady_clock::now()) {
    const double nd = static_cast<double>(prob.n());
    if (use_budget && cfg.max_epochs > 0.0)
      budget_ = static_cast<std::uint64_t>(std::ceil(cfg.max_epochs * nd));
    if (!(cfg.checkpoint_every > 0.0)) throw config_error("checkpoint cadence must be positive");
    step_ = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(cfg.checkpoint_every * nd)));
    next_mark_ = step_;
  }

  bool exhausted() const noexcept { return evals_ >= budget_; }
  std::uint64_t evals() const noexcept { return evals_; }

  void begin(const Eigen::VectorXd& x) {
    guard(x);
    record(x);
  }

  void step(std::uint64_t evals, const Eigen::VectorXd& x) {
    evals_ += evals;
    ++iterations_;
    guard(x);
    if (evals_ >= next_mark_) {
      record(x);
      while (next_mark_ <= evals_) next_mark_ += step_;
    }
  }

  // Accounts for evaluations that do not move the iterate (full-gradient passes).
  void charge(std::uint64_t evals, const Eigen::VectorXd& x) {
    evals_ += evals;
    if (evals_ >= next_mark_) {
      record(x);
      while (next_mark_ <= evals_) next_mark_ += step_;
    }
  }

  void guard(const Eigen::VectorXd& x) {
    if (!x.allFinite() || x.norm() > divergence_threshold) fail(x, "iterate diverged (non-finite or ||x|| > 1e100)");
  }

  run_trace finish(Eigen::VectorXd x_out, const Eigen::VectorXd& x_last) {
    if (trace_.checkpoints.empty() || trace_.checkpoints.back().sgrad_evals != evals_) record(x_last);
    trace_.x_out = std::move(x_out);
    trace_.x_last = x_last;
    trace_.sgrad_evals = evals_;
    trace_.iterations = iterations_;
    return std::move(trace_);
  }

 private:
  void record(const Eigen::VectorXd& x) {
    if (!trace_.checkpoints.empty() && trace_.checkpoints.back().sgrad_evals == evals_) return;
    checkpoint c;
    c.sgrad_evals = evals_;
    c.epoch = static_cast<double>(evals_) / static_cast<double>(prob_.n());
    c.loss = prob_.value(x);
    c.grad_norm_sq = prob_.full_gradient(x).squaredNorm();
    if (record_wall_)
      c.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start_).count();
    if (!std::isfinite(c.loss) || std::abs(c.loss) > divergence_threshold || !std::isfinite(c.grad_norm_sq))
      fail(x, "objective diverged (non-finite or |f| > 1e100)");
    trace_.checkpoints.push_back(c);
  }

  [[noreturn]] void fail(const Eigen::VectorXd& x, const std::string& why) {
    run_trace partial = trace_;
    partial.x_last = x;
    partial.sgrad_evals = evals_;
    partial.iterations = iterations_;
    throw divergence_error(why, std::move(partial));
  }

  const problem& prob_;
  bool record_wall_;
  std::chrono::steady_clock::time_point start_;
  std::uint64_t budget_ = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t step_ = 1;
  std::uint64_t next_mark_ = 1;
  std::uint64_t evals_ = 0;
  std::uint64_t iterations_ = 0;
  run_trace trace_;
};

// Uniform choice over a stream of iterates in O(d) memory.
class iterate_reservoir {
 public:
  void offer(const Eigen::VectorXd& x, rng_type& rng) {
    ++count_;
    if (count_ == 1 || std::uniform_int_distribution<std::uint64_t>(0, count_ - 1)(rng) == 0) chosen_ = x;
  }
  void reset() noexcept { count_ = 0; }
  const Eigen::VectorXd& chosen() const noexcept { return chosen_; }

 private:
  std::uint64_t count_ = 0;
  Eigen::VectorXd chosen_;
};

inline Eigen::VectorXd initial_point(const problem& prob, const run_config& cfg) {
  if (cfg.x0.size() == 0) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(prob.d()));
  if (static_cast<std::size_t>(cfg.x0.size()) != prob.d()) throw config_error("x0 has the wrong dimension");
  return cfg.x0;
}

inline void validate(const problem& prob, const run_config& cfg, method_kind expected) {
  if (cfg.method != expected)
    throw config_error("config is for " + std::string(to_string(cfg.method)) + ", not " + std::string(to_string(expected)));
  if (cfg.scheme.n() != prob.n()) throw config_error("sampling size does not match the problem");
  if (!(cfg.eta > 0.0) || !std::isfinite(cfg.eta)) throw config_error("step size must be positive");
  if (cfg.inner_steps == 0) throw config_error("inner loop length must be at least 1");
}

// Stream tags for the per-run generators.
inline constexpr std::uint64_t batch_stream = 1;
inline constexpr std::uint64_t output_stream = 2;
inline constexpr std::uint64_t refresh_stream = 3;

}  // namespace detail

/// Minibatch SVRG over an arbitrary sampling. Each outer loop takes a full
/// gradient at the snapshot and runs m inner steps
///   x <- x - eta (g + sum_{i in S} (grad f_i(x) - grad f_i(snapshot)) / (n p_i)).
/// x_out is uniform over all inner iterates.
inline run_trace run_svrg(const problem& prob, const run_config& cfg) {
  detail::validate(prob, cfg, method_kind::svrg);
  if (cfg.outer_loops == 0 && !(cfg.max_epochs > 0.0)) throw config_error("svrg: no outer-loop count and no budget");
  auto batch_rng = make_rng(cfg.seed, detail::batch_stream);
  auto out_rng = make_rng(cfg.seed, detail::output_stream);
  subset_sampler sampler(cfg.scheme);
  const auto p = cfg.scheme.p();
  detail::run_monitor mon(prob, cfg);
  detail::iterate_reservoir pick;
  svrg_estimator est;

  Eigen::VectorXd x = detail::initial_point(prob, cfg);
  Eigen::VectorXd v(x.size());
  std::vector<std::size_t> batch;
  mon.begin(x);
  for (std::size_t s = 0; (cfg.outer_loops == 0 || s < cfg.outer_loops) && !mon.exhausted(); ++s) {
    est.reset(prob, x);
    mon.charge(prob.n(), x);
    pick.offer(x, out_rng);
    for (std::size_t t = 0; t < cfg.inner_steps && !mon.exhausted(); ++t) {
      sampler.draw(batch_rng, batch);
      est.direction(prob, p, batch, x, v);
      x.noalias() -= cfg.eta * v;
      mon.step(batch.size(), x);
      pick.offer(x, out_rng);
    }
  }
  return mon.finish(pick.chosen(), x);
}

/// Minibatch SAGA over an arbitrary sampling. By default J_t includes each
/// index independently with probability d/n (clipped to 1).
inline run_trace run_saga(const problem& prob, const run_config& cfg) {
  detail::validate(prob, cfg, method_kind::saga);
  if (cfg.iterations == 0 && !(cfg.max_epochs > 0.0)) throw config_error("saga: no iteration count and no budget");
  if (!(cfg.refresh_size > 0.0)) throw config_error("saga: refresh size d must be positive");
  auto batch_rng = make_rng(cfg.seed, detail::batch_stream);
  auto out_rng = make_rng(cfg.seed, detail::output_stream);
  auto refresh_rng = make_rng(cfg.seed, detail::refresh_stream);
  subset_sampler sampler(cfg.scheme);
  const auto p = cfg.scheme.p();
  const std::size_t n = prob.n();
  const double q = std::min(1.0, cfg.refresh_size / static_cast<double>(n));
  detail::run_monitor mon(prob, cfg);
  detail::iterate_reservoir pick;
  saga_memory memory;

  Eigen::VectorXd x = detail::initial_point(prob, cfg);
  Eigen::VectorXd v(x.size());
  std::vector<std::size_t> batch, refreshed;
  mon.begin(x);
  memory.reset(prob, x);
  mon.charge(n, x);
  pick.offer(x, out_rng);
  for (std::size_t t = 0; (cfg.iterations == 0 || t < cfg.iterations) && !mon.exhausted(); ++t) {
    sampler.draw(batch_rng, batch);
    refreshed.clear();
    if (cfg.refresh == saga_refresh::single_uniform) {
      refreshed.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(refresh_rng));
    } else if (q >= 1.0) {
      for (std::size_t j = 0; j < n; ++j) refreshed.push_back(j);
    } else {
      // Gaps between successive independent successes are geometric.
      std::geometric_distribution<std::size_t> gap(q);
      for (std::size_t j = gap(refresh_rng); j < n; j += 1 + gap(refresh_rng)) refreshed.push_back(j);
    }
    memory.direction(prob, p, batch, x, v);
    memory.refresh(prob, refreshed, x);
    x.noalias() -= cfg.eta * v;
    mon.step(batch.size() + refreshed.size(), x);
    pick.offer(x, out_rng);
  }
  return mon.finish(pick.chosen(), x);
}

/// Minibatch SARAH over an arbitrary sampling. Every outer loop restarts from
/// a uniformly chosen iterate of the previous loop; x_out is the last restart point.
inline run_trace run_sarah(const problem& prob, const run_config& cfg) {
  detail::validate(prob, cfg, method_kind::sarah);
  if (cfg.outer_loops == 0 && !(cfg.max_epochs > 0.0)) throw config_error("sarah: no outer-loop count and no budget");
  auto batch_rng = make_rng(cfg.seed, detail::batch_stream);
  auto out_rng = make_rng(cfg.seed, detail::output_stream);
  subset_sampler sampler(cfg.scheme);
  const auto p = cfg.scheme.p();
  detail::run_monitor mon(prob, cfg);
  detail::iterate_reservoir pick;
  sarah_estimator est;

  Eigen::VectorXd x = detail::initial_point(prob, cfg);
  Eigen::VectorXd x_prev(x.size());
  std::vector<std::size_t> batch;
  mon.begin(x);
  for (std::size_t s = 0; (cfg.outer_loops == 0 || s < cfg.outer_loops) && !mon.exhausted(); ++s) {
    pick.reset();
    est.reset(prob, x);
    mon.charge(prob.n(), x);
    pick.offer(x, out_rng);
    x_prev = x;
    x.noalias() -= cfg.eta * est.value();
    mon.step(0, x);
    pick.offer(x, out_rng);
    for (std::size_t t = 1; t < cfg.inner_steps && !mon.exhausted(); ++t) {
      sampler.draw(batch_rng, batch);
      est.advance(prob, p, batch, x, x_prev);
      x_prev = x;
      x.noalias() -= cfg.eta * est.value();
      mon.step(2 * batch.size(), x);
      pick.offer(x, out_rng);
    }
    x = pick.chosen();
  }
  return mon.finish(x, x);
}

struct sarah_convex_result {
  run_trace trace;                             // first replicate
  std::vector<double> mean_estimator_norm_sq;  // ||v^t||^2 per step, averaged over replicates
};

/// Single-sample SARAH for convex components: index i is drawn with
/// probability p_i from the config's sampling marginals (which must sum to 1).
inline sarah_convex_result run_sarah_convex(const problem& prob, const run_config& cfg) {
  detail::validate(prob, cfg, method_kind::sarah_convex);
  if (!(cfg.eta < 2.0 / prob.Lbar())) throw config_error("sarah_convex: step size must satisfy eta < 2 / Lbar");
  if (cfg.outer_loops == 0) throw config_error("sarah_convex: outer loop count must be positive");
  if (cfg.replicates == 0) throw config_error("sarah_convex: at least one replicate is required");
  const auto p = cfg.scheme.p();
  if (std::abs(cfg.scheme.b() - 1.0) > 1e-9) throw config_error("sarah_convex: sampling marginals must sum to 1");

  const std::size_t steps = cfg.outer_loops * cfg.inner_steps;
  std::vector<double> sums(steps, 0.0);
  sarah_convex_result result;
  for (std::size_t r = 0; r < cfg.replicates; ++r) {
    auto batch_rng = make_rng(cfg.seed, 100 + 2 * r);
    auto out_rng = make_rng(cfg.seed, 101 + 2 * r);
    std::discrete_distribution<std::size_t> pick_one(p.begin(), p.end());
    detail::run_monitor mon(prob, cfg, false);
    detail::iterate_reservoir pick;
    sarah_estimator est;
    Eigen::VectorXd x = detail::initial_point(prob, cfg);
    Eigen::VectorXd x_prev(x.size());
    std::size_t batch[1];
    std::size_t k = 0;
    if (r == 0) mon.begin(x);
    for (std::size_t s = 0; s < cfg.outer_loops; ++s) {
      pick.reset();
      est.reset(prob, x);
      sums[k++] += est.value().squaredNorm();
      if (r == 0) mon.charge(prob.n(), x);
      pick.offer(x, out_rng);
      x_prev = x;
      x.noalias() -= cfg.eta * est.value();
      if (r == 0) mon.step(0, x);
      pick.offer(x, out_rng);
      for (std::size_t t = 1; t < cfg.inner_steps; ++t) {
        batch[0] = pick_one(batch_rng);
        est.advance(prob, p, batch, x, x_prev);
        sums[k++] += est.value().squaredNorm();
        x_prev = x;
        x.noalias() -= cfg.eta * est.value();
        if (r == 0) mon.step(2, x);
        pick.offer(x, out_rng);
      }
      x = pick.chosen();
    }
    if (r == 0) result.trace = mon.finish(x, x);
  }
  for (double& s : sums) s /= static_cast<double>(cfg.replicates);
  result.mean_estimator_norm_sq = std::move(sums);
  return result;
}

// ---------------------------------------------------------------------------
// Restart wrapper for tau-gradient-dominated objectives.

struct gd_wrapper_options {
  std::uint64_t seed = 1;
  std::optional<double> f_star;  // defaults to the best value observed
  theorem_constants constants;
  bool enforce_batch_bound = true;
  Eigen::VectorXd x0;
};

struct gd_wrapper_result {
  run_trace trace;  // one checkpoint per restart, at x^k
  std::vector<double> restart_loss;  // f(x^k), k = 0..K
  std::vector<double> restart_gap;   // f(x^k) - f_star
  double f_star = 0.0;
  std::size_t inner_iterations = 0;  // T per restart
};

/// Smallest m >= 1 with m + 1 >= 4 tau / eta(m), eta(m) the one-loop SARAH step.
inline std::size_t sarah_restart_length(double tau, double b, double alpha, double Lbar) {
  auto ok = [&](std::size_t m) { return static_cast<double>(m) + 1.0 >= 4.0 * tau / sarah_step_size(b, alpha, Lbar, m); };
  std::size_t hi = 1;
  while (!ok(hi)) {
    if (hi > (std::size_t{1} << 40)) throw config_error("sarah restart length does not fit");
    hi *= 2;
  }
  std::size_t lo = hi / 2;  // !ok(lo) unless lo == 0
  while (lo + 1 < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (ok(mid) ? hi : lo) = mid;
  }
  return std::max<std::size_t>(1, hi);
}

/// Runs the inner method K times, each restart warm-started from the previous
/// output. The per-restart length T = 2 tau Lbar alpha n^(2/3) / (b nu) makes the
/// inner guarantee E||grad f||^2 <= (f(x^{k-1}) - f*) / (2 tau).
inline gd_wrapper_result run_gd_wrapper(const problem& prob, method_kind inner, const sampling_scheme& scheme,
                                        double tau, std::size_t restarts, const gd_wrapper_options& opts = {}) {
  if (!(tau > 0.0)) throw domain_error("gd wrapper: tau must be positive");
  if (inner != method_kind::svrg && inner != method_kind::saga && inner != method_kind::sarah)
    throw config_error("gd wrapper: unknown inner method " + std::string(to_string(inner)));
  const std::size_t n = prob.n();
  const double nd = static_cast<double>(n);
  const double n23 = std::cbrt(nd * nd);
  derive_options dopts;
  dopts.constants = opts.constants;
  dopts.enforce_batch_bound = opts.enforce_batch_bound;

  Eigen::VectorXd x = opts.x0.size() ? opts.x0 : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(prob.d()));
  gd_wrapper_result result;
  std::uint64_t evals = 0;
  auto record = [&](const Eigen::VectorXd& at) {
    checkpoint c;
    c.sgrad_evals = evals;
    c.epoch = static_cast<double>(evals) / nd;
    c.loss = prob.value(at);
    c.grad_norm_sq = prob.full_gradient(at).squaredNorm();
    result.trace.checkpoints.push_back(c);
    result.restart_loss.push_back(c.loss);
  };
  record(x);

  for (std::size_t k = 1; k <= restarts; ++k) {
    std::optional<run_config> cfg;
    switch (inner) {
      case method_kind::svrg: {
        cfg = derive_svrg_config(prob, scheme, 0.0, dopts);
        const double T = detail::ceil_exact(2.0 * tau * cfg->derived.Lbar * cfg->derived.alpha * n23 / (scheme.b() * opts.constants.nu2));
        const auto t = static_cast<std::size_t>(std::max(1.0, T));
        cfg->outer_loops = (t + cfg->inner_steps - 1) / cfg->inner_steps;
        result.inner_iterations = t;
        break;
      }
      case method_kind::saga: {
        cfg = derive_saga_config(prob, scheme, 0.0, dopts);
        const double T = detail::ceil_exact(2.0 * tau * cfg->derived.Lbar * cfg->derived.alpha * n23 / (scheme.b() * opts.constants.nu3));
        cfg->iterations = static_cast<std::size_t>(std::max(1.0, T));
        result.inner_iterations = cfg->iterations;
        break;
      }
      default: {
        const auto c = compute_alpha(prob.L(), scheme);
        const std::size_t m = sarah_restart_length(tau, scheme.b(), c.alpha, c.Lbar);
        cfg = derive_sarah_config(prob, scheme, 0.0, m);
        cfg->outer_loops = 1;
        result.inner_iterations = m;
        break;
      }
    }
    cfg->max_epochs = 0.0;
    cfg->checkpoint_every = 1e9;
    cfg->x0 = x;
    cfg->seed = opts.seed * 0x9E3779B97F4A7C15ULL + k;
    run_trace t = inner == method_kind::svrg ? run_svrg(prob, *cfg)
                  : inner == method_kind::saga ? run_saga(prob, *cfg)
                                               : run_sarah(prob, *cfg);
    evals += t.sgrad_evals;
    x = t.x_out;
    record(x);
  }
  result.f_star = opts.f_star.value_or(*std::min_element(result.restart_loss.begin(), result.restart_loss.end()));
  for (double f : result.restart_loss) result.restart_gap.push_back(f - result.f_star);
  result.trace.x_out = x;
  result.trace.x_last = x;
  result.trace.sgrad_evals = evals;
  result.trace.iterations = restarts;
  return result;
}

// ---------------------------------------------------------------------------

/// Stochastic-gradient evaluations sufficient for E||grad f(x_a)||^2 <= epsilon.
inline double predict_complexity(method_kind method, std::size_t n, double b, double alpha, double Lbar, double gap,
                                 double epsilon, const theorem_constants& c = {}) {
  const double nd = static_cast<double>(n);
  const double n23 = std::cbrt(nd * nd);
  switch (method) {
    case method_kind::svrg:
      return std::max(nd, c.mu2 * Lbar * n23 * gap / (epsilon * c.nu2) * (1.0 + alpha / (3.0 * c.mu2)));
    case method_kind::saga:
      return nd + Lbar * n23 * gap * (1.0 + alpha) / (epsilon * c.nu3);
    case method_kind::sarah: {
      const double g2 = gap * gap;
      const double L2 = Lbar * Lbar;
      const double e2 = epsilon * epsilon;
      const double lead = 16.0 * alpha * L2 * g2;
      return nd + (lead + std::sqrt(lead * lead + 16.0 * e2 * L2 * g2 * b * b)) / (2.0 * e2);
    }
    case method_kind::sarah_convex:
      break;
  }
  throw config_error("predict_complexity: no formula for " + std::string(to_string(method)));
}

}  // namespace vrs

#endif
