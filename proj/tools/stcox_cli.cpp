#include "stcox/asymptotics.hpp"
#include "stcox/io.hpp"
#include "stcox/study.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

using namespace stcox;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kNotConverged = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double x) { return io::format_double(x); }

std::vector<double> parse_list(const std::string& s, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(flag + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw UsageError(flag + ": empty list");
  return out;
}

std::vector<PatternStats> load_stats(const std::string& events, const BasisSystem& basis) {
  const auto patterns = io::read_events(events, basis.spec().temporal_domain, basis.spec().spatial_domain);
  if (patterns.empty()) throw io::FormatError(events + ": no replicates listed in the sidecar");
  return pattern_stats(basis, patterns);
}

struct LoadedModel {
  io::ModelFile file;
  std::unique_ptr<BasisSystem> basis;
};

LoadedModel load_model(const std::string& path) {
  LoadedModel m{io::read_model(path), nullptr};
  m.basis = std::make_unique<BasisSystem>(m.file.basis);
  io::check_model_shapes(m.file.params, *m.basis, path);
  return m;
}

std::string join_args(int argc, char** argv) {
  std::string s = "stcox";
  for (int i = 1; i < argc; ++i) s += std::string(" ") + argv[i];
  return s;
}

// ---- simulate

struct SimulateArgs {
  std::string preset, model, tau = "log30", out, out_model;
  int n = 0;
  std::uint64_t seed = 1;
};

int run_simulate(const SimulateArgs& a, const std::string& command) {
  if (a.n < 1) throw UsageError("--n must be at least 1");
  if (!a.preset.empty() && !a.model.empty()) throw UsageError("--preset and --model are mutually exclusive");
  if (a.preset.empty() && a.model.empty()) throw UsageError("one of --preset or --model is required");
  io::ModelFile truth;
  std::shared_ptr<const BasisSystem> basis;
  if (!a.preset.empty()) {
    if (a.preset != "section5") throw UsageError("unknown preset '" + a.preset + "' (available: section5)");
    const Section5Truth t = section5_truth(parse_tau_choice(a.tau));
    basis = t.basis;
    truth.basis = t.basis->spec();
    truth.params = t.params;
  } else {
    LoadedModel m = load_model(a.model);
    truth = m.file;
    truth.fit.reset();
    basis = std::move(m.basis);
  }
  const SimulatedData sim = simulate(truth.params, *basis, a.n, a.seed);
  io::write_events(a.out, sim.patterns);
  truth.provenance = {a.seed, "", command};
  io::write_model(a.out_model.empty() ? a.out + ".truth.json" : a.out_model, truth);
  std::size_t events = 0;
  for (const auto& p : sim.patterns) events += p.events.size();
  std::cout << "simulated " << a.n << " replicates, " << events << " events -> " << a.out << "\n";
  return kOk;
}

// ---- fit

struct FitArgs {
  std::string events, config, out_model, out_trace;
  int threads = 0;
  bool quiet = false;
};

io::RunConfig load_config(const std::string& path) { return path.empty() ? io::RunConfig{} : io::read_config(path); }

int run_fit(const FitArgs& a, const std::string& command) {
  io::RunConfig cfg = load_config(a.config);
  if (a.threads > 0) cfg.fit.threads = a.threads;
  const BasisSystem basis(cfg.basis);
  const auto data = load_stats(a.events, basis);
  const FitCallback progress = [&](const FitIteration& it, const ModelParameters&) {
    if (!a.quiet) std::cerr << "iteration " << it.iteration << ": " << fmt(it.penalized_loglik) << "\n";
  };
  const FitReport rep = fit(data, basis, cfg.fit, std::nullopt, progress);
  io::ModelFile out;
  out.basis = cfg.basis;
  out.params = rep.theta_hat;
  out.provenance = {cfg.fit.seed, io::config_hash(cfg), command};
  io::FitSummary s;
  s.xi = cfg.fit.xi;
  s.penalized_loglik = rep.trace.empty() ? 0.0 : rep.trace.back().penalized_loglik;
  s.iterations = rep.trace.empty() ? 0 : rep.trace.back().iteration;
  s.converged = rep.converged;
  out.fit = s;
  io::write_model(a.out_model, out);
  if (!a.out_trace.empty()) io::write_trace(a.out_trace, rep.trace);
  std::cout << (rep.converged ? "converged" : "did not converge") << " after " << s.iterations
            << " iterations, penalized log-likelihood " << fmt(s.penalized_loglik) << "\n";
  return rep.converged ? kOk : kNotConverged;
}

// ---- cv

struct CvArgs {
  std::string events, config, grid, grid_mu, grid_phi, grid_nu, grid_psi, mode = "sequential", out;
  int folds = 5;
};

int run_cv(const CvArgs& a) {
  const io::RunConfig cfg = load_config(a.config);
  const BasisSystem basis(cfg.basis);
  const auto data = load_stats(a.events, basis);
  if (a.folds < 2 || a.folds > static_cast<int>(data.size()))
    throw UsageError("--folds must be between 2 and the number of replicates (" + std::to_string(data.size()) + ")");
  std::array<std::vector<double>, 4> grid;
  const std::string shared = a.grid.empty() ? "" : a.grid;
  const std::array<std::pair<std::string, std::string>, 4> specific = {
      {{a.grid_mu, "--grid-mu"}, {a.grid_phi, "--grid-phi"}, {a.grid_nu, "--grid-nu"}, {a.grid_psi, "--grid-psi"}}};
  for (int j = 0; j < 4; ++j) {
    if (!specific[j].first.empty())
      grid[j] = parse_list(specific[j].first, specific[j].second);
    else if (!shared.empty())
      grid[j] = parse_list(shared, "--grid");
    else
      grid[j] = {cfg.fit.xi[j]};
    for (double x : grid[j])
      if (!(x >= 0.0)) throw UsageError("smoothing parameters must be non-negative");
  }
  const CvMode mode = parse_cv_mode(a.mode);
  const CvResult r = cross_validate(data, basis, cfg.fit, a.folds, grid, mode);
  std::string csv = "xi_mu,xi_phi,xi_nu,xi_psi,score,valid\n";
  for (const auto& c : r.table)
    csv += fmt(c.xi[0]) + "," + fmt(c.xi[1]) + "," + fmt(c.xi[2]) + "," + fmt(c.xi[3]) + "," +
           (c.valid ? fmt(c.score) : std::string("NA")) + "," + (c.valid ? "1" : "0") + "\n";
  if (!a.out.empty()) io::write_file(a.out, csv);
  std::cout << "best xi = (" << fmt(r.best[0]) << ", " << fmt(r.best[1]) << ", " << fmt(r.best[2]) << ", "
            << fmt(r.best[3]) << "), cross-validated log-likelihood " << fmt(r.best_score) << "\n";
  return kOk;
}

// ---- infer

struct InferArgs {
  std::string events, model, out, score = "laplace";
  bool full = false, reduced = false, kappa_report = false;
  int threads = 1;
};

std::string table_csv(const std::vector<std::string>& names, const Vector& est, const Vector& se) {
  std::string out = "parameter,estimate,asymptotic_sd,z_value\n";
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    out += names[j] + "," + fmt(est[k]) + "," + fmt(se[k]) + "," + (se[k] > 0.0 ? fmt(est[k] / se[k]) : "NA") + "\n";
  }
  return out;
}

int run_infer(const InferArgs& a) {
  if (a.full && a.reduced) throw UsageError("--full and --reduced are mutually exclusive");
  const LoadedModel m = load_model(a.model);
  const auto data = load_stats(a.events, *m.basis);
  InferenceOptions opt;
  opt.full = a.full;
  opt.method = parse_score_method(a.score);
  opt.threads = a.threads;
  if (m.file.fit) opt.xi = m.file.fit->xi;
  InferenceReport rep;
  try {
    rep = infer(m.file.params, *m.basis, data, opt);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNotConverged;
  }
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  if (a.full && !rep.has_full) {
    std::cerr << "error: the full information matrix is singular for these data; rerun with --reduced\n";
    return kNotConverged;
  }

  const bool full = a.full;
  const auto& names = full ? rep.full_names : rep.reduced_names;
  const Vector& est = full ? rep.theta_full : rep.theta_tilde;
  const Vector& se = full ? rep.full_se : rep.reduced_se;
  const Matrix& cov = full ? rep.full_cov : rep.reduced_cov;
  std::string table = table_csv(names, est, se);
  std::string corr = "correlation,estimate,sd\n";
  for (const auto& c : rep.correlations) corr += c.name + "," + fmt(c.value) + "," + fmt(c.se) + "\n";

  nlohmann::json cj = {{"parameters", names}, {"n", rep.n}};
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < cov.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < cov.cols(); ++c) row.push_back(cov(r, c));
    rows.push_back(row);
  }
  cj["covariance"] = rows;
  if (a.kappa_report) {
    if (!full) throw UsageError("--kappa-report needs --full (the bias acts on the functional coefficients)");
    std::string bias = "parameter,bias\n";
    for (std::size_t j = 0; j < names.size(); ++j) bias += names[j] + "," + fmt(rep.bias[static_cast<Eigen::Index>(j)]) + "\n";
    if (!a.out.empty()) io::write_file(a.out + ".bias.csv", bias);
    cj["xi"] = {opt.xi[0], opt.xi[1], opt.xi[2], opt.xi[3]};
  }

  if (a.out.empty()) {
    std::cout << table << "\n" << corr;
  } else {
    io::write_file(a.out + ".csv", table);
    io::write_file(a.out + ".corr.csv", corr);
    io::write_file(a.out + ".cov.json", cj.dump(2) + "\n");
    std::cout << "wrote " << a.out << ".csv, " << a.out << ".corr.csv, " << a.out << ".cov.json\n";
  }
  return kOk;
}

// ---- components

struct ComponentsArgs {
  std::string model, events, out_dir;
  double multiple = std::nan("");
  int grid = 101;
  double threshold = 0.05;
};

int run_components(const ComponentsArgs& a) {
  if (a.grid < 2) throw UsageError("--grid must be at least 2");
  if (!std::isnan(a.multiple) && a.multiple < 0.0) throw UsageError("--multiple must be non-negative");
  const LoadedModel m = load_model(a.model);
  const ModelParameters& p = m.file.params;
  const BasisSystem& basis = *m.basis;
  fs::create_directories(a.out_dir);
  const int p1 = p.p1(), p2 = p.p2();
  auto mult = [&](double var) { return std::isnan(a.multiple) ? std::sqrt(var) : a.multiple; };

  const auto& td = basis.spec().temporal_domain;
  std::string t = "t,mean";
  for (int k = 0; k < p1; ++k) t += ",plus_phi" + std::to_string(k + 1) + ",minus_phi" + std::to_string(k + 1);
  t += "\n";
  for (int g = 0; g < a.grid; ++g) {
    const double tt = td.t_lower + (td.t_upper - td.t_lower) * g / (a.grid - 1);
    const Vector b = basis.temporal().evaluate(tt);
    const double mu = b.dot(p.c0);
    t += fmt(tt) + "," + fmt(std::exp(mu));
    for (int k = 0; k < p1; ++k) {
      const double c = mult(p.sigma_u2[k]) * b.dot(p.C.col(k));
      t += "," + fmt(std::exp(mu + c)) + "," + fmt(std::exp(mu - c));
    }
    t += "\n";
  }
  io::write_file((fs::path(a.out_dir) / "temporal.csv").string(), t);

  std::string s = "s1,s2,mean";
  for (int l = 0; l < p2; ++l) s += ",plus_psi" + std::to_string(l + 1) + ",minus_psi" + std::to_string(l + 1);
  s += "\n";
  const auto& nodes = basis.spatial().quad_nodes();
  const Matrix& Bs = basis.spatial().quad_basis();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double nu = Bs.row(r).dot(p.d0);
    s += fmt(nodes[i].x) + "," + fmt(nodes[i].y) + "," + fmt(std::exp(nu));
    for (int l = 0; l < p2; ++l) {
      const double c = mult(p.sigma_v2[l]) * Bs.row(r).dot(p.D.col(l));
      s += "," + fmt(std::exp(nu + c)) + "," + fmt(std::exp(nu - c));
    }
    s += "\n";
  }
  io::write_file((fs::path(a.out_dir) / "spatial.csv").string(), s);

  const ComponentSelection sel = select_components(p.sigma_u2, p.sigma_v2, a.threshold);
  std::string v = "axis,component,variance,proportion,below_threshold\n";
  for (int k = 0; k < p1; ++k)
    v += "temporal," + std::to_string(k + 1) + "," + fmt(p.sigma_u2[k]) + "," + fmt(sel.temporal_proportions[k]) + "," +
         (sel.temporal_flagged[k] ? "1" : "0") + "\n";
  for (int l = 0; l < p2; ++l)
    v += "spatial," + std::to_string(l + 1) + "," + fmt(p.sigma_v2[l]) + "," + fmt(sel.spatial_proportions[l]) + "," +
         (sel.spatial_flagged[l] ? "1" : "0") + "\n";
  io::write_file((fs::path(a.out_dir) / "variances.csv").string(), v);

  if (!a.events.empty()) {
    const auto patterns = io::read_events(a.events, basis.spec().temporal_domain, basis.spec().spatial_domain);
    const auto post = e_step(p, basis, patterns);
    std::string w = "replicate_id,events,z";
    for (int k = 0; k < p1; ++k) w += ",u" + std::to_string(k + 1);
    for (int l = 0; l < p2; ++l) w += ",v" + std::to_string(l + 1);
    w += "\n";
    for (std::size_t i = 0; i < patterns.size(); ++i) {
      w += patterns[i].id + "," + std::to_string(patterns[i].size());
      for (Eigen::Index j = 0; j < post[i].w_star.size(); ++j) w += "," + fmt(post[i].w_star[j]);
      w += "\n";
    }
    io::write_file((fs::path(a.out_dir) / "scores.csv").string(), w);
  }
  std::cout << "suggested components: p1 = " << sel.suggested_p1 << ", p2 = " << sel.suggested_p2 << "\n";
  return kOk;
}

// ---- mc-study

struct StudyArgs {
  std::string scenario = "section5", tau = "log30", n_list = "50,100,200,400", out;
  int replicates = 100, threads = 1;
  std::uint64_t seed = 1;
  bool no_asymptotics = false, quiet = false;
};

int run_mc(const StudyArgs& a) {
  if (a.scenario != "section5") throw UsageError("unknown scenario '" + a.scenario + "' (available: section5)");
  if (a.replicates < 1) throw UsageError("--replicates must be at least 1");
  StudyOptions opt;
  opt.tau = parse_tau_choice(a.tau);
  opt.n_list.clear();
  for (double n : parse_list(a.n_list, "--n-list")) {
    if (n < 1 || n != std::floor(n)) throw UsageError("--n-list entries must be positive integers");
    opt.n_list.push_back(static_cast<int>(n));
  }
  opt.replicates = a.replicates;
  opt.seed = a.seed;
  opt.threads = a.threads;
  opt.asymptotics = !a.no_asymptotics;
  if (!a.quiet) opt.progress = [](const std::string& s) { std::cerr << s << "\n"; };
  const StudyResult r = run_study(opt);
  fs::create_directories(a.out);
  const fs::path dir(a.out);
  io::write_file((dir / "rmse_parameters.csv").string(), rmse_table_csv(r));
  io::write_file((dir / "rmse_random_effects.csv").string(), effect_table_csv(r));
  io::write_file((dir / "asymptotic_sd.csv").string(), asymptotic_table_csv(r));
  io::write_file((dir / "replicates.csv").string(), outcomes_csv(r));
  std::cout << rmse_table_csv(r);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replicated spatio-temporal log-Gaussian Cox processes: simulate, fit, cross-validate, infer"};
  app.require_subcommand(1);
  const std::string command = join_args(argc, argv);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Simulate replicated point patterns");
  sim->add_option("--preset", sa.preset, "Built-in truth (section5)");
  sim->add_option("--model", sa.model, "Model file to simulate from");
  sim->add_option("--tau", sa.tau, "Baseline for the preset: log10 or log30")->capture_default_str();
  sim->add_option("--n", sa.n, "Number of replicates")->required();
  sim->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  sim->add_option("--out", sa.out, "Events CSV (the sidecar is written next to it)")->required();
  sim->add_option("--out-model", sa.out_model, "Truth model file (default <out>.truth.json)");

  FitArgs fa;
  auto* fitc = app.add_subcommand("fit", "Fit the model by penalized Laplace-EM");
  fitc->add_option("--events", fa.events, "Events CSV")->required();
  fitc->add_option("--config", fa.config, "Config JSON (FitConfig fields, domain, basis)");
  fitc->add_option("--out-model", fa.out_model, "Output model file")->required();
  fitc->add_option("--out-trace", fa.out_trace, "Output trace CSV");
  fitc->add_option("--threads", fa.threads, "Override the config thread count");
  fitc->add_flag("--quiet", fa.quiet, "No per-iteration output");

  CvArgs ca;
  auto* cv = app.add_subcommand("cv", "Choose smoothing parameters by k-fold cross-validation");
  cv->add_option("--events", ca.events, "Events CSV")->required();
  cv->add_option("--config", ca.config, "Config JSON");
  cv->add_option("--folds", ca.folds, "Number of folds")->capture_default_str();
  cv->add_option("--grid", ca.grid, "Comma-separated xi values used for all four parameters");
  cv->add_option("--grid-mu", ca.grid_mu, "xi values for the mean temporal function");
  cv->add_option("--grid-phi", ca.grid_phi, "xi values for the temporal components");
  cv->add_option("--grid-nu", ca.grid_nu, "xi values for the mean spatial function");
  cv->add_option("--grid-psi", ca.grid_psi, "xi values for the spatial components");
  cv->add_option("--mode", ca.mode, "sequential or full")->capture_default_str();
  cv->add_option("--out", ca.out, "Output CSV of the evaluated grid");

  InferArgs ia;
  auto* inf = app.add_subcommand("infer", "Asymptotic standard errors and correlations");
  inf->add_option("--events", ia.events, "Events CSV")->required();
  inf->add_option("--model", ia.model, "Fitted model file")->required();
  inf->add_flag("--reduced", ia.reduced, "Covariance parameters only (default)");
  inf->add_flag("--full", ia.full, "All parameters, through the constrained sandwich");
  inf->add_flag("--kappa-report", ia.kappa_report, "Also report the smoothing bias -V DP^T xi (with --full)");
  inf->add_option("--score", ia.score, "laplace, fisher or fd")->capture_default_str();
  inf->add_option("--threads", ia.threads, "Threads for the scores")->capture_default_str();
  inf->add_option("--out", ia.out, "Output prefix (.csv, .corr.csv, .cov.json)");

  ComponentsArgs pa;
  auto* comp = app.add_subcommand("components", "Plot data for the mean functions and their components");
  comp->add_option("--model", pa.model, "Fitted model file")->required();
  comp->add_option("--events", pa.events, "Events CSV, for per-replicate scores");
  comp->add_option("--multiple", pa.multiple, "Multiple c in exp(mean +- c component); default one score sd");
  comp->add_option("--grid", pa.grid, "Number of time points")->capture_default_str();
  comp->add_option("--threshold", pa.threshold, "Variance-proportion threshold")->capture_default_str();
  comp->add_option("--out-dir", pa.out_dir, "Output directory")->required();

  StudyArgs ma;
  auto* mc = app.add_subcommand("mc-study", "Monte Carlo study of the estimators");
  mc->add_option("--scenario", ma.scenario, "Scenario (section5)")->capture_default_str();
  mc->add_option("--tau", ma.tau, "log10 or log30")->capture_default_str();
  mc->add_option("--replicates", ma.replicates, "Monte Carlo replicates per sample size")->capture_default_str();
  mc->add_option("--n-list", ma.n_list, "Comma-separated sample sizes")->capture_default_str();
  mc->add_option("--seed", ma.seed, "Random seed")->capture_default_str();
  mc->add_option("--threads", ma.threads, "Replicates fitted in parallel")->capture_default_str();
  mc->add_flag("--no-asymptotics", ma.no_asymptotics, "Skip the asymptotic standard deviations");
  mc->add_flag("--quiet", ma.quiet, "No progress output");
  mc->add_option("--out", ma.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kFailure;
  }

  try {
    if (*sim) return run_simulate(sa, command);
    if (*fitc) return run_fit(fa, command);
    if (*cv) return run_cv(ca);
    if (*inf) return run_infer(ia);
    if (*comp) return run_components(pa);
    if (*mc) return run_mc(ma);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
