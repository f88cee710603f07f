#ifndef VRS_EXPERIMENT_HPP
#define VRS_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "dataio.hpp"
#include "errors.hpp"
#include "numeric.hpp"
#include "optimizers.hpp"
#include "problems.hpp"
#include "sampling.hpp"

namespace vrs {

struct synthetic_source {
  std::size_t n = 200;
  std::size_t d = 20;
  double skew = 100.0;
  std::uint64_t seed = 7;
};

struct experiment_spec {
  std::optional<std::string> dataset_path;
  std::optional<synthetic_source> synthetic;
  loss_kind loss = loss_kind::sigmoid_squared;
  double mu = 0.0;
  std::vector<method_kind> methods;
  std::vector<sampling_kind> schemes;
  std::vector<double> batches;
  bool batch_sweep = false;  // b = 1, 2, 4, ... up to b_max (b_max included)
  double epochs = 60.0;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "out";
  bool scale = false;
  double checkpoint_every = 1.0;
  std::size_t workers = 1;
  double epsilon = 1e-4;
  bool enforce_batch_bound = true;
  bool record_wall_time = false;
};

struct cell_result {
  method_kind method = method_kind::svrg;
  sampling_kind scheme = sampling_kind::uniform_minibatch;
  double b = 1.0;
  std::uint64_t seed = 1;
  std::string file;
  bool ok = false;
  std::string error;
  double eta = 0.0;
  std::size_t inner_steps = 0;
  double refresh_size = 0.0;
  complexity_constants constants;
  double epoch_to_eps = std::numeric_limits<double>::infinity();
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double final_grad_norm_sq = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t sgrad_evals = 0;
  std::uint64_t iterations = 0;
};

struct experiment_result {
  std::vector<cell_result> cells;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t b_max = 0;
};

inline problem load_problem(const experiment_spec& spec) {
  if (spec.dataset_path.has_value() == spec.synthetic.has_value())
    throw config_error("exactly one of a dataset path or synthetic parameters is required");
  dataset data = spec.dataset_path ? parse_libsvm_file(*spec.dataset_path).data
                                   : synthesize(spec.synthetic->n, spec.synthetic->d, spec.synthetic->skew, spec.synthetic->seed);
  if (spec.scale) data = scale_max_abs(data);
  return problem(std::move(data), spec.loss, spec.mu);
}

inline sampling_scheme make_scheme(const problem& prob, sampling_kind kind, double b) {
  switch (kind) {
    case sampling_kind::uniform_minibatch:
      return sampling_scheme::uniform(prob.n(), b);
    case sampling_kind::independent:
      return sampling_scheme::independent(optimal_probabilities(prob.L(), b));
    case sampling_kind::approximate_independent:
      return sampling_scheme::approximate_independent(optimal_probabilities(prob.L(), b));
  }
  throw config_error("unknown sampling kind");
}

inline std::vector<double> sweep_batches(std::size_t b_max) {
  std::vector<double> out;
  for (std::size_t b = 1; b <= b_max; b *= 2) out.push_back(static_cast<double>(b));
  if (out.empty() || out.back() != static_cast<double>(b_max)) out.push_back(static_cast<double>(std::max<std::size_t>(1, b_max)));
  return out;
}

inline run_config derive_config(const problem& prob, method_kind method, sampling_scheme scheme, double epsilon,
                                 bool enforce_batch_bound) {
  derive_options opts;
  opts.enforce_batch_bound = enforce_batch_bound;
  switch (method) {
    case method_kind::svrg:
      return derive_svrg_config(prob, std::move(scheme), epsilon, opts);
    case method_kind::saga:
      return derive_saga_config(prob, std::move(scheme), epsilon, opts);
    case method_kind::sarah:
      return derive_sarah_config(prob, std::move(scheme), epsilon);
    case method_kind::sarah_convex:
      break;
  }
  throw config_error("method " + std::string(to_string(method)) + " is not available in experiment grids");
}

inline run_trace run_method(const problem& prob, const run_config& cfg) {
  switch (cfg.method) {
    case method_kind::svrg:
      return run_svrg(prob, cfg);
    case method_kind::saga:
      return run_saga(prob, cfg);
    case method_kind::sarah:
      return run_sarah(prob, cfg);
    case method_kind::sarah_convex:
      return run_sarah_convex(prob, cfg).trace;
  }
  throw config_error("unknown method");
}

inline void write_trace_csv(const run_trace& trace, std::ostream& out) {
  out << "epoch,loss,grad_norm_sq,sgrad_evals,wall_ns\n";
  for (const auto& c : trace.checkpoints)
    out << format_double(c.epoch) << ',' << format_double(c.loss) << ',' << format_double(c.grad_norm_sq) << ','
        << c.sgrad_evals << ',' << c.wall_ns << '\n';
}

inline std::string cell_file_name(method_kind m, sampling_kind s, double b, std::uint64_t seed) {
  return std::string(to_string(m)) + "_" + std::string(to_string(s)) + "_b" + format_double(b) + "_s" +
         std::to_string(seed) + ".csv";
}

inline double first_epoch_below(const std::vector<checkpoint>& cps, double epsilon) {
  for (const auto& c : cps)
    if (c.grad_norm_sq <= epsilon) return c.epoch;
  return std::numeric_limits<double>::infinity();
}

namespace detail {

inline void write_manifest(const experiment_spec& spec, const experiment_result& res) {
  std::ofstream out(std::filesystem::path(spec.out_dir) / "manifest.csv", std::ios::binary);
  out << "file,method,scheme,b,seed,status,eta,m,d_refresh,alpha,K,Lbar,n,d,epochs,checkpoint_every,eps,"
         "sgrad_evals,iterations,error\n";
  for (const auto& c : res.cells) {
    std::string err = c.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << c.file << ',' << to_string(c.method) << ',' << to_string(c.scheme) << ',' << format_double(c.b) << ','
        << c.seed << ',' << (c.ok ? "ok" : "error") << ',' << format_double(c.eta) << ',' << c.inner_steps << ','
        << format_double(c.refresh_size) << ',' << format_double(c.constants.alpha) << ','
        << format_double(c.constants.K) << ',' << format_double(c.constants.Lbar) << ',' << res.n << ',' << res.d << ','
        << format_double(spec.epochs) << ',' << format_double(spec.checkpoint_every) << ','
        << format_double(spec.epsilon) << ',' << c.sgrad_evals << ',' << c.iterations << ',' << err << '\n';
  }
  if (!out) throw input_error("cannot write manifest");
}

}  // namespace detail

/// Runs every (method, scheme, b, seed) cell with theorem-derived parameters,
/// writing one CSV per cell and a manifest. Failing cells are recorded, not fatal.
inline experiment_result run_experiment(const experiment_spec& spec) {
  if (spec.methods.empty() || spec.seeds.empty() || spec.schemes.empty())
    throw config_error("experiment needs at least one method, scheme and seed");
  if (!(spec.epochs > 0.0)) throw config_error("epoch budget must be positive");
  const problem prob = load_problem(spec);
  experiment_result res;
  res.n = prob.n();
  res.d = prob.d();
  res.b_max = max_superlinear_batch(prob.L());
  std::vector<double> batches = spec.batch_sweep ? sweep_batches(res.b_max) : spec.batches;
  if (batches.empty()) throw config_error("no minibatch sizes given");

  for (auto m : spec.methods)
    for (auto s : spec.schemes)
      for (double b : batches)
        for (auto seed : spec.seeds) {
          cell_result c;
          c.method = m;
          c.scheme = s;
          c.b = b;
          c.seed = seed;
          c.file = cell_file_name(m, s, b, seed);
          res.cells.push_back(std::move(c));
        }
  std::filesystem::create_directories(spec.out_dir);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < res.cells.size(); k = next++) {
      auto& c = res.cells[k];
      try {
        run_config cfg = derive_config(prob, c.method, make_scheme(prob, c.scheme, c.b), spec.epsilon, spec.enforce_batch_bound);
        cfg.seed = c.seed;
        cfg.max_epochs = spec.epochs;
        cfg.checkpoint_every = spec.checkpoint_every;
        cfg.record_wall_time = spec.record_wall_time;
        c.eta = cfg.eta;
        c.inner_steps = cfg.inner_steps;
        c.refresh_size = cfg.refresh_size;
        c.constants = cfg.derived;
        run_trace trace;
        try {
          trace = run_method(prob, cfg);
        } catch (const divergence_error& e) {
          trace = e.trace();
          c.error = e.what();
        }
        std::ofstream out(std::filesystem::path(spec.out_dir) / c.file, std::ios::binary);
        write_trace_csv(trace, out);
        if (!out) throw input_error("cannot write " + c.file);
        c.ok = c.error.empty();
        c.sgrad_evals = trace.sgrad_evals;
        c.iterations = trace.iterations;
        c.epoch_to_eps = first_epoch_below(trace.checkpoints, spec.epsilon);
        if (!trace.checkpoints.empty()) {
          c.final_loss = trace.checkpoints.back().loss;
          c.final_grad_norm_sq = trace.checkpoints.back().grad_norm_sq;
        }
      } catch (const std::exception& e) {
        c.ok = false;
        c.error = e.what();
      }
    }
  };
  const std::size_t nworkers = std::clamp<std::size_t>(spec.workers, 1, res.cells.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < nworkers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  detail::write_manifest(spec, res);
  if (spec.batch_sweep) {
    std::ofstream out(std::filesystem::path(spec.out_dir) / "speedup.csv", std::ios::binary);
    out << "method,scheme,b,median_epochs_to_eps,median_sgrad_evals,cells\n";
    std::map<std::tuple<int, int, double>, std::vector<const cell_result*>> groups;
    for (const auto& c : res.cells) groups[{static_cast<int>(c.method), static_cast<int>(c.scheme), c.b}].push_back(&c);
    for (const auto& [key, cells] : groups) {
      std::vector<double> e;
      for (auto* c : cells)
        if (c->ok) e.push_back(c->epoch_to_eps);
      std::sort(e.begin(), e.end());
      const double med = e.empty() ? std::numeric_limits<double>::infinity() : e[(e.size() - 1) / 2];
      const auto* c0 = cells.front();
      out << to_string(c0->method) << ',' << to_string(c0->scheme) << ',' << format_double(c0->b) << ','
          << (std::isfinite(med) ? format_double(med) : "not_reached") << ','
          << (std::isfinite(med) ? format_double(med * static_cast<double>(res.n)) : "not_reached") << ','
          << cells.size() << '\n';
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Summaries of a trace directory.

struct trace_summary {
  double epoch_to_eps;  // +inf when not reached
  double evals_to_eps;
  double final_loss;
  double final_grad_norm_sq;
};

inline trace_summary summarize_trace_file(const std::filesystem::path& path, double epsilon) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "epoch,loss,grad_norm_sq,sgrad_evals,wall_ns")
    throw input_error(path.string() + ": unexpected CSV header");
  trace_summary s{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                  std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  bool any = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    if (f.size() != 5) throw input_error(path.string() + ": malformed row");
    const double epoch = parse_double(f[0]), loss = parse_double(f[1]), g = parse_double(f[2]);
    const double evals = parse_double(f[3]);
    if (g <= epsilon && !std::isfinite(s.epoch_to_eps)) {
      s.epoch_to_eps = epoch;
      s.evals_to_eps = evals;
    }
    s.final_loss = loss;
    s.final_grad_norm_sq = g;
    any = true;
  }
  if (!any) throw input_error(path.string() + ": no checkpoints");
  return s;
}

struct summary_row {
  std::string method;
  std::string scheme;
  std::string b;
  std::size_t cells = 0;
  std::size_t reached = 0;
  double median_epochs = std::numeric_limits<double>::infinity();
  double median_evals = std::numeric_limits<double>::infinity();
  double median_final_loss = std::numeric_limits<double>::quiet_NaN();
  double median_final_grad = std::numeric_limits<double>::quiet_NaN();
  double uniform_ratio = std::numeric_limits<double>::quiet_NaN();  // uniform epochs / these epochs
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  if (v.size() % 2) return v[h];
  if (!std::isfinite(v[h - 1]) || !std::isfinite(v[h])) return v[h];
  return 0.5 * (v[h - 1] + v[h]);
}

/// Reads manifest.csv and the traces it lists; one row per (method, scheme, b)
/// with medians across seeds.
inline std::vector<summary_row> summarize(const std::filesystem::path& dir, double epsilon) {
  const auto manifest = dir / "manifest.csv";
  if (!std::filesystem::exists(manifest)) throw input_error("no manifest.csv in '" + dir.string() + "'");
  std::ifstream in(manifest);
  std::string line;
  std::getline(in, line);
  struct acc {
    std::vector<double> epochs, evals, loss, grad;
    std::size_t cells = 0;
  };
  std::map<std::tuple<std::string, std::string, double>, std::pair<std::string, acc>> groups;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    if (f.size() < 6) throw input_error("malformed manifest row");
    auto& [btext, a] = groups[{f[1], f[2], parse_double(f[3])}];
    btext = f[3];
    ++a.cells;
    if (f[5] != "ok" || !std::filesystem::exists(dir / f[0])) continue;
    const auto s = summarize_trace_file(dir / f[0], epsilon);
    a.epochs.push_back(s.epoch_to_eps);
    a.evals.push_back(s.evals_to_eps);
    a.loss.push_back(s.final_loss);
    a.grad.push_back(s.final_grad_norm_sq);
  }
  if (groups.empty()) throw input_error("manifest in '" + dir.string() + "' lists no cells");
  std::vector<summary_row> rows;
  for (auto& [key, val] : groups) {
    auto& a = val.second;
    summary_row r;
    std::tie(r.method, r.scheme, std::ignore) = key;
    r.b = val.first;
    r.cells = a.cells;
    r.reached = static_cast<std::size_t>(std::count_if(a.epochs.begin(), a.epochs.end(), [](double e) { return std::isfinite(e); }));
    if (!a.epochs.empty()) {
      r.median_epochs = median_of(a.epochs);
      r.median_evals = median_of(a.evals);
      r.median_final_loss = median_of(a.loss);
      r.median_final_grad = median_of(a.grad);
    }
    rows.push_back(r);
  }
  for (auto& r : rows) {
    if (r.scheme == "uniform") continue;
    for (const auto& u : rows)
      if (u.scheme == "uniform" && u.method == r.method && u.b == r.b && std::isfinite(u.median_epochs) &&
          std::isfinite(r.median_epochs) && r.median_epochs > 0.0)
        r.uniform_ratio = u.median_epochs / r.median_epochs;
  }
  return rows;
}

inline std::string format_epochs(double e) { return std::isfinite(e) ? format_double(e) : "not reached (budget)"; }

inline void write_summary_csv(const std::vector<summary_row>& rows, std::ostream& out) {
  out << "method,scheme,b,cells,reached,median_epochs_to_eps,median_sgrad_evals_to_eps,median_final_loss,"
         "median_final_grad_norm_sq,uniform_over_this\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.scheme << ',' << r.b << ',' << r.cells << ',' << r.reached << ','
        << format_epochs(r.median_epochs) << ',' << format_epochs(r.median_evals) << ','
        << format_double(r.median_final_loss) << ',' << format_double(r.median_final_grad) << ','
        << (std::isnan(r.uniform_ratio) ? std::string("") : format_double(r.uniform_ratio)) << '\n';
}

inline void write_summary_text(const std::vector<summary_row>& rows, std::ostream& out) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-8s %-12s %6s %5s %22s %14s %14s %8s\n", "method", "scheme", "b", "hit", "epochs-to-eps",
                "final loss", "final |g|^2", "uni/this");
  out << buf;
  for (const auto& r : rows) {
    const std::string hit = std::to_string(r.reached) + "/" + std::to_string(r.cells);
    const std::string ratio = std::isnan(r.uniform_ratio) ? "-" : format_double(std::round(r.uniform_ratio * 1000) / 1000);
    std::snprintf(buf, sizeof buf, "%-8s %-12s %6s %5s %22s %14.6g %14.6g %8s\n", r.method.c_str(), r.scheme.c_str(),
                  r.b.c_str(), hit.c_str(), format_epochs(r.median_epochs).c_str(), r.median_final_loss,
                  r.median_final_grad, ratio.c_str());
    out << buf;
  }
}

}  // namespace vrs

#endif
