// Command-line harness: run experiment grids, summarize traces, run the
// brute-force verification suites, inspect alpha for a dataset, check LIBSVM files.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "vrs/vrs.hpp"

namespace {

enum exit_code { ok = 0, usage = 1, data = 2, verification = 3 };

// Unknown names on the command line are usage errors, not data errors.
template <class F>
auto named(F&& parse, const std::string& text) {
  try {
    return parse(text);
  } catch (const vrs::input_error& e) {
    throw vrs::config_error(e.what());
  }
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, sep);)
    if (!tok.empty()) out.push_back(tok);
  return out;
}

// "1,2,5" or "1-5" or a mix.
std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& tok : split(s)) {
    const auto dash = tok.find('-');
    if (dash == std::string::npos) {
      out.push_back(vrs::parse_unsigned(tok));
    } else {
      const auto lo = vrs::parse_unsigned(tok.substr(0, dash)), hi = vrs::parse_unsigned(tok.substr(dash + 1));
      if (hi < lo) throw vrs::config_error("empty seed range '" + tok + "'");
      for (auto x = lo; x <= hi; ++x) out.push_back(x);
    }
  }
  return out;
}

vrs::synthetic_source parse_synthetic(const std::string& s) {
  const auto f = split(s);
  if (f.size() != 3 && f.size() != 4) throw vrs::config_error("--synthetic expects n,d,skew[,seed]");
  vrs::synthetic_source src;
  src.n = vrs::parse_unsigned(f[0]);
  src.d = vrs::parse_unsigned(f[1]);
  src.skew = vrs::parse_double(f[2]);
  if (f.size() == 4) src.seed = vrs::parse_unsigned(f[3]);
  return src;
}

struct source_flags {
  std::string dataset;
  std::string synthetic;
  std::string loss = "sigmoid_squared";
  double mu = 0.0;
  bool scale = false;

  void attach(CLI::App* app) {
    app->add_option("--dataset", dataset, "LIBSVM file");
    app->add_option("--synthetic", synthetic, "synthetic data n,d,skew[,seed]");
    app->add_option("--loss", loss, "sigmoid_squared | quadratic")->capture_default_str();
    app->add_option("--mu", mu, "ridge weight for the quadratic loss")->capture_default_str();
    app->add_flag("--scale", scale, "divide each feature column by its max |value|");
  }

  void fill(vrs::experiment_spec& spec) const {
    if (!dataset.empty()) spec.dataset_path = dataset;
    if (!synthetic.empty()) spec.synthetic = parse_synthetic(synthetic);
    spec.loss = named(vrs::parse_loss_kind, loss);
    spec.mu = mu;
    spec.scale = scale;
  }
};

int cmd_run(const source_flags& src, const std::string& methods, const std::string& schemes, const std::string& batches,
            double epochs, const std::string& seeds, double eps, const std::string& out, std::size_t workers,
            double cadence, bool no_bound, bool wall) {
  vrs::experiment_spec spec;
  src.fill(spec);
  for (const auto& m : split(methods)) spec.methods.push_back(named(vrs::parse_method_kind, m));
  for (const auto& s : split(schemes)) spec.schemes.push_back(named(vrs::parse_sampling_kind, s));
  if (batches == "sweep") {
    spec.batch_sweep = true;
  } else {
    for (const auto& b : split(batches)) spec.batches.push_back(vrs::parse_double(b));
  }
  spec.epochs = epochs;
  spec.seeds = parse_seeds(seeds);
  spec.epsilon = eps;
  spec.out_dir = out;
  spec.workers = workers;
  spec.checkpoint_every = cadence;
  spec.enforce_batch_bound = !no_bound;
  spec.record_wall_time = wall;

  const auto res = vrs::run_experiment(spec);
  std::size_t failed = 0;
  for (const auto& c : res.cells) {
    if (c.ok) continue;
    ++failed;
    std::cerr << c.file << ": " << c.error << "\n";
  }
  std::cout << res.cells.size() << " cells (" << failed << " failed), n=" << res.n << " d=" << res.d
            << " b_max=" << res.b_max << ", traces in " << spec.out_dir << "\n";
  return failed == res.cells.size() ? exit_code::data : exit_code::ok;
}

int cmd_summarize(const std::string& dir, double eps) {
  const auto rows = vrs::summarize(dir, eps);
  vrs::write_summary_text(rows, std::cout);
  std::ofstream out(std::filesystem::path(dir) / "summary.csv", std::ios::binary);
  vrs::write_summary_csv(rows, out);
  return exit_code::ok;
}

int cmd_verify(std::vector<std::string> suites, std::uint64_t seed, bool quiet) {
  if (suites.empty() || (suites.size() == 1 && suites[0] == "all")) suites = vrs::verify_suite_names();
  vrs::check_sink sink;
  if (!quiet)
    sink = [](const std::string& suite, const vrs::check_result& c) {
      std::printf("%s  %-8s %-48s lhs=%.17g rhs=%.17g\n", c.passed ? "ok  " : "FAIL", suite.c_str(), c.instance.c_str(),
                  c.lhs, c.rhs);
    };
  bool all = true;
  for (const auto& s : suites) {
    const auto r = vrs::run_verify_suite(s, seed, sink);
    std::printf("suite %-15s %zu checks, %zu failed\n", s.c_str(), r.checks.size(), r.failures());
    all = all && r.passed();
  }
  return all ? exit_code::ok : exit_code::verification;
}

int cmd_alpha(const source_flags& src, double b) {
  vrs::experiment_spec spec;
  src.fill(spec);
  const auto prob = vrs::load_problem(spec);
  const auto L = prob.L();
  std::printf("n %zu\nd %zu\nLbar %.17g\nLmax %.17g\nb_max %zu\nb %.17g\n", prob.n(), prob.d(), prob.Lbar(), prob.Lmax(),
              vrs::max_superlinear_batch(L), b);
  for (auto kind : {vrs::sampling_kind::uniform_minibatch, vrs::sampling_kind::independent,
                    vrs::sampling_kind::approximate_independent}) {
    const auto s = vrs::make_scheme(prob, kind, b);
    const auto c = vrs::compute_alpha(L, s);
    std::printf("%-12s alpha %.17g K %.17g\n", std::string(vrs::to_string(kind)).c_str(), c.alpha, c.K);
  }
  std::printf("p*");
  for (double p : vrs::optimal_probabilities(L, b)) std::printf(" %s", vrs::format_double(p).c_str());
  std::printf("\n");
  return exit_code::ok;
}

int cmd_parse_check(const std::string& path) {
  const auto r = vrs::parse_libsvm_file(path);
  std::size_t pos = 0;
  for (double y : r.data.labels()) pos += y > 0;
  std::printf("rows %zu\nfeatures %zu\nnnz %zu\npositive %zu\nnegative %zu\nwarnings %zu\n", r.data.n(), r.data.d(),
              r.data.nnz(), pos, r.data.n() - pos, r.report.warnings.size());
  for (const auto& w : r.report.warnings) std::printf("  line %zu: %s\n", w.line, w.message.c_str());
  return exit_code::ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variance-reduced minibatch methods with arbitrary sampling"};
  app.set_config("--config", "", "key = value file; command-line flags take precedence");
  // list options parse their own commas, so config values must reach them unsplit
  auto fmt = std::make_shared<CLI::ConfigTOML>();
  fmt->arrayDelimiter(' ');
  app.config_formatter(fmt);
  app.require_subcommand(1);

  source_flags src;
  std::string methods = "svrg", schemes = "uniform,independent", batches = "1", seeds = "1", out = "traces";
  double epochs = 60.0, eps = 1e-4, cadence = 1.0;
  std::size_t workers = 1;
  bool no_bound = false, wall = false;
  auto* run = app.add_subcommand("run", "run an experiment grid and write CSV traces");
  src.attach(run);
  run->add_option("--method", methods, "comma list of svrg,saga,sarah")->capture_default_str();
  run->add_option("--scheme", schemes, "comma list of uniform,independent,approx")->capture_default_str();
  run->add_option("--batch", batches, "comma list of minibatch sizes, or 'sweep'")->capture_default_str();
  run->add_option("--epochs", epochs, "epoch budget per cell")->capture_default_str();
  run->add_option("--seed", seeds, "seeds, e.g. 1-5 or 1,3,9")->capture_default_str();
  run->add_option("--eps", eps, "gradient threshold for epochs-to-eps")->capture_default_str();
  run->add_option("--out", out, "output directory")->capture_default_str();
  run->add_option("--workers", workers, "cells run concurrently")->capture_default_str();
  run->add_option("--checkpoint-every", cadence, "checkpoint cadence in epochs")->capture_default_str();
  run->add_flag("--no-batch-bound", no_bound, "allow b > alpha n^(2/3) for SVRG and SAGA");
  run->add_flag("--wall-time", wall, "record wall_ns (breaks byte-identical reruns)");

  std::string sum_dir = "traces";
  double sum_eps = 1e-4;
  auto* sum = app.add_subcommand("summarize", "tabulate epochs-to-eps from a trace directory");
  sum->add_option("--out,dir", sum_dir, "trace directory")->capture_default_str();
  sum->add_option("--eps", sum_eps, "gradient threshold")->capture_default_str();

  std::vector<std::string> suites;
  std::uint64_t vseed = 1;
  bool quiet = false;
  auto* ver = app.add_subcommand("verify", "run brute-force verification suites");
  ver->add_option("suites", suites, "eso keyineq alpha unbiased uniform-bounds speedup | all");
  ver->add_option("--seed", vseed, "seed for random instances")->capture_default_str();
  ver->add_flag("--quiet", quiet, "print suite totals only");

  source_flags asrc;
  double ab = 1.0;
  auto* alp = app.add_subcommand("alpha", "print alpha, K and p* for a dataset and b");
  asrc.attach(alp);
  alp->add_option("--batch", ab, "minibatch size")->capture_default_str();

  std::string ppath;
  auto* pc = app.add_subcommand("parse-check", "parse a LIBSVM file and report");
  pc->add_option("--dataset,path", ppath, "LIBSVM file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_code::ok : exit_code::usage;
  }

  try {
    if (*run) return cmd_run(src, methods, schemes, batches, epochs, seeds, eps, out, workers, cadence, no_bound, wall);
    if (*sum) return cmd_summarize(sum_dir, sum_eps);
    if (*ver) return cmd_verify(suites, vseed, quiet);
    if (*alp) return cmd_alpha(asrc, ab);
    if (*pc) return cmd_parse_check(ppath);
  } catch (const vrs::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code::usage;
  } catch (const vrs::parse_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code::data;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code::data;
  }
  return exit_code::usage;
}
