#ifndef VRS_VERIFY_HPP
#define VRS_VERIFY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bruteforce.hpp"
#include "numeric.hpp"
#include "optimizers.hpp"
#include "problems.hpp"
#include "sampling.hpp"

namespace vrs {

struct check_result {
  std::string instance;
  double lhs;
  double rhs;
  bool passed;
};

struct suite_report {
  std::string name;
  std::vector<check_result> checks;

  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [](const auto& c) { return !c.passed; }));
  }
  bool passed() const { return !checks.empty() && failures() == 0; }
};

using check_sink = std::function<void(const std::string& suite, const check_result&)>;

namespace detail {

class suite_builder {
 public:
  suite_builder(std::string name, const check_sink& sink) : sink_(sink) { report_.name = std::move(name); }
  void add(std::string instance, double lhs, double rhs, bool passed) {
    report_.checks.push_back({std::move(instance), lhs, rhs, passed});
    if (sink_) sink_(report_.name, report_.checks.back());
  }
  suite_report done() { return std::move(report_); }

 private:
  const check_sink& sink_;
  suite_report report_;
};

inline std::vector<double> random_smoothness(std::size_t n, rng_type& rng) {
  // log-uniform over three decades so that importance sampling matters
  std::uniform_real_distribution<double> u(0.0, std::log(1000.0));
  std::vector<double> L(n);
  for (double& l : L) l = std::exp(u(rng));
  return L;
}

// A random proper law of the requested kind; approximate draws retry until
// the two-stage construction is non-degenerate.
inline sampling_scheme random_scheme(sampling_kind kind, std::size_t n, rng_type& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  switch (kind) {
    case sampling_kind::uniform_minibatch:
      return sampling_scheme::uniform(n, static_cast<double>(std::uniform_int_distribution<std::size_t>(1, n)(rng)));
    case sampling_kind::independent: {
      std::vector<double> p(n);
      for (double& x : p) x = uniform01(rng) < 0.15 ? 1.0 : u(rng);
      return sampling_scheme::independent(std::move(p));
    }
    case sampling_kind::approximate_independent:
      for (;;) {
        std::vector<double> p(n);
        for (double& x : p) x = uniform01(rng) < 0.15 ? 1.0 : u(rng);
        auto s = sampling_scheme::approximate_independent(std::move(p));
        if (s.kind() == sampling_kind::approximate_independent) return s;
      }
  }
  throw domain_error("random_scheme: unknown kind");
}

inline std::string describe(const sampling_scheme& s) {
  std::string out(to_string(s.kind()));
  out += " n=" + std::to_string(s.n()) + " b=" + format_double(s.b());
  return out;
}

inline constexpr sampling_kind all_kinds[] = {sampling_kind::uniform_minibatch, sampling_kind::independent,
                                             sampling_kind::approximate_independent};

}  // namespace detail

/// Diag(p o v) - (P - p p^T) is PSD for random laws with n in {3..6}, and the
/// closed-form P agrees with the enumerated one.
inline suite_report verify_eso_suite(std::uint64_t seed = 1, const check_sink& sink = {}) {
  detail::suite_builder out("eso", sink);
  auto rng = make_rng(seed, 11);
  for (std::size_t n = 3; n <= 6; ++n)
    for (auto kind : detail::all_kinds)
      for (int r = 0; r < 20; ++r) {
        const auto s = detail::random_scheme(kind, n, rng);
        const auto P = probability_matrix(s);
        const double margin = eso_margin(P, s.p(), s.v());
        out.add(detail::describe(s) + " min eig", margin, -1e-10, margin >= -1e-10);
        const double diff = (law_probability_matrix(enumerate_law(s)) - P).cwiseAbs().maxCoeff();
        out.add(detail::describe(s) + " |P_enum - P|", diff, 1e-12, diff <= 1e-12);
      }
  return out.done();
}

/// Exact variance of the importance-weighted sum against the certificate.
inline suite_report verify_key_inequality_suite(std::uint64_t seed = 1, const check_sink& sink = {}) {
  detail::suite_builder out("keyineq", sink);
  auto rng = make_rng(seed, 12);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto kind : detail::all_kinds)
    for (int r = 0; r < 100; ++r) {
      const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 6)(rng);
      const auto s = detail::random_scheme(kind, n, rng);
      const auto law = enumerate_law(s);
      std::vector<Eigen::VectorXd> zeta(n, Eigen::VectorXd(3));
      for (auto& z : zeta)
        for (Eigen::Index j = 0; j < 3; ++j) z[j] = g(rng);
      const auto c = check_key_inequality(law, s, zeta);
      out.add(detail::describe(s) + " lhs <= rhs", c.lhs, c.rhs, c.holds);
      if (kind == sampling_kind::independent)
        out.add(detail::describe(s) + " tight", c.lhs, c.rhs, std::abs(c.lhs - c.rhs) <= 1e-12);
    }
  return out.done();
}

/// optimal_probabilities against random search, plus the closed forms of alpha
/// for the optimal and uniform laws when b L_max <= sum L.
inline suite_report verify_alpha_suite(std::uint64_t seed = 1, const check_sink& sink = {}, std::size_t trials = 10000) {
  detail::suite_builder out("alpha", sink);
  auto rng = make_rng(seed, 13);
  for (int r = 0; r < 10; ++r) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    const auto L = detail::random_smoothness(n, rng);
    const double b = static_cast<double>(std::uniform_int_distribution<std::size_t>(1, n)(rng));
    const auto opt = compute_alpha(L, sampling_scheme::independent(optimal_probabilities(L, b)));
    const auto found = search_alpha_optimum(L, b, trials, seed * 1000 + static_cast<std::uint64_t>(r));
    const std::string tag = "n=" + std::to_string(n) + " b=" + format_double(b);
    out.add(tag + " alpha(p*) <= best random", opt.alpha, found.alpha, opt.alpha <= found.alpha + 1e-12);

    const std::size_t bmax = max_superlinear_batch(L);
    const double bc = static_cast<double>(std::uniform_int_distribution<std::size_t>(1, std::max<std::size_t>(1, bmax))(rng));
    double s1 = 0.0, s2 = 0.0;
    for (double l : L) {
      s1 += l;
      s2 += l * l;
    }
    const double nd = static_cast<double>(n);
    const std::string ctag = "n=" + std::to_string(n) + " b=" + format_double(bc);
    if (bc * *std::max_element(L.begin(), L.end()) <= s1) {
      const double star = 1.0 - bc * s2 / (s1 * s1);
      const double got = compute_alpha(L, sampling_scheme::independent(optimal_probabilities(L, bc))).alpha;
      out.add(ctag + " closed form alpha_S*", got, star, std::abs(got - star) <= 1e-12);
    }
    const double uni = nd > 1 ? nd * (nd - bc) / (nd - 1.0) * s2 / (s1 * s1) : 0.0;
    const double got_u = compute_alpha(L, sampling_scheme::uniform(n, bc)).alpha;
    out.add(ctag + " closed form alpha_Su", got_u, uni, std::abs(got_u - uni) <= 1e-12);
  }
  return out.done();
}

/// Estimator means over the exact law, for SVRG, SAGA and SARAH, on n = 4.
inline suite_report verify_unbiased_suite(std::uint64_t seed = 1, const check_sink& sink = {}) {
  detail::suite_builder out("unbiased", sink);
  auto rng = make_rng(seed, 14);
  std::normal_distribution<double> g(0.0, 1.0);
  const problem problems[] = {problem(synthesize(4, 3, 10.0, seed), loss_kind::sigmoid_squared),
                              problem(synthesize(4, 3, 10.0, seed + 1), loss_kind::quadratic, 0.1)};
  auto random_point = [&](std::size_t d) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = g(rng);
    return x;
  };
  for (const auto& prob : problems) {
    const sampling_scheme schemes[] = {sampling_scheme::uniform(4, 2),
                                       sampling_scheme::independent(optimal_probabilities(prob.L(), 2.0)),
                                       sampling_scheme::approximate_independent({0.2, 0.3, 0.5, 1.0})};
    for (const auto& s : schemes) {
      const auto law = enumerate_law(s);
      const auto p = s.p();
      const std::string tag = std::string(to_string(prob.loss())) + " " + detail::describe(s);
      const Eigen::VectorXd x = random_point(prob.d()), anchor = random_point(prob.d());
      const Eigen::VectorXd grad = prob.full_gradient(x);
      auto gap = [&](const Eigen::VectorXd& m, const Eigen::VectorXd& want) { return (m - want).cwiseAbs().maxCoeff(); };

      svrg_estimator svrg;
      svrg.reset(prob, anchor);
      const auto m1 = law_mean(law, [&](std::span<const std::size_t> S) {
        Eigen::VectorXd v;
        svrg.direction(prob, p, S, x, v);
        return v;
      });
      const double e1 = gap(m1, grad);
      out.add(tag + " svrg", e1, 1e-12, e1 <= 1e-12);

      saga_memory saga;
      saga.reset(prob, anchor);
      for (std::size_t j = 0; j < prob.n(); j += 2) {
        const std::size_t idx[] = {j};
        saga.refresh(prob, idx, random_point(prob.d()));
      }
      const auto m2 = law_mean(law, [&](std::span<const std::size_t> S) {
        Eigen::VectorXd v;
        saga.direction(prob, p, S, x, v);
        return v;
      });
      const double e2 = gap(m2, grad);
      out.add(tag + " saga", e2, 1e-12, e2 <= 1e-12);

      sarah_estimator sarah;
      sarah.reset(prob, anchor);
      const Eigen::VectorXd before = sarah.value();
      const auto m3 = law_mean(law, [&](std::span<const std::size_t> S) {
        sarah_estimator copy = sarah;
        copy.advance(prob, p, S, x, anchor);
        return Eigen::VectorXd(copy.value() - before);
      });
      const double e3 = gap(m3, grad - prob.full_gradient(anchor));
      out.add(tag + " sarah increment", e3, 1e-12, e3 <= 1e-12);
    }
  }
  return out.done();
}

/// For uniform sampling: alpha Lbar <= L_max and alpha Lbar^2 <= (n-b)/(n-1) L_max^2.
inline suite_report verify_uniform_bounds_suite(std::uint64_t seed = 1, const check_sink& sink = {}) {
  detail::suite_builder out("uniform-bounds", sink);
  auto rng = make_rng(seed, 15);
  for (int r = 0; r < 1000; ++r) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 50)(rng);
    const auto L = detail::random_smoothness(n, rng);
    const double b = static_cast<double>(std::uniform_int_distribution<std::size_t>(1, n)(rng));
    const auto c = compute_alpha(L, sampling_scheme::uniform(n, b));
    const double lmax = *std::max_element(L.begin(), L.end());
    const double nd = static_cast<double>(n);
    const std::string tag = "n=" + std::to_string(n) + " b=" + format_double(b);
    out.add(tag + " alpha Lbar <= Lmax", c.alpha * c.Lbar, lmax, c.alpha * c.Lbar <= lmax * (1.0 + 1e-12));
    const double rhs = (nd - b) / (nd - 1.0) * lmax * lmax;
    out.add(tag + " alpha Lbar^2 <= (n-b)/(n-1) Lmax^2", c.alpha * c.Lbar * c.Lbar, rhs,
            c.alpha * c.Lbar * c.Lbar <= rhs * (1.0 + 1e-12) + 1e-300);
  }
  return out.done();
}

/// alpha of the optimal independent law is strictly decreasing in b on [1, b_max].
inline suite_report verify_speedup_suite(std::uint64_t seed = 1, const check_sink& sink = {}) {
  detail::suite_builder out("speedup", sink);
  auto rng = make_rng(seed, 16);
  for (int r = 0; r < 100; ++r) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 60)(rng);
    const auto L = detail::random_smoothness(n, rng);
    const std::size_t bmax = max_superlinear_batch(L);
    double prev = std::numeric_limits<double>::infinity();
    bool ok = true;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 1; b <= bmax; ++b) {
      const double a = compute_alpha(L, sampling_scheme::independent(optimal_probabilities(L, static_cast<double>(b)))).alpha;
      if (b > 1) worst = std::max(worst, a - prev);
      ok = ok && a < prev;
      prev = a;
    }
    out.add("n=" + std::to_string(n) + " b_max=" + std::to_string(bmax) + " max step", worst, 0.0, ok);
  }
  return out.done();
}

inline const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names{"eso", "keyineq", "alpha", "unbiased", "uniform-bounds", "speedup"};
  return names;
}

inline suite_report run_verify_suite(const std::string& name, std::uint64_t seed = 1, const check_sink& sink = {}) {
  if (name == "eso") return verify_eso_suite(seed, sink);
  if (name == "keyineq") return verify_key_inequality_suite(seed, sink);
  if (name == "alpha") return verify_alpha_suite(seed, sink);
  if (name == "unbiased") return verify_unbiased_suite(seed, sink);
  if (name == "uniform-bounds") return verify_uniform_bounds_suite(seed, sink);
  if (name == "speedup") return verify_speedup_suite(seed, sink);
  throw input_error("unknown verify suite '" + name + "'");
}

}  // namespace vrs

#endif
