#include "stcox/study.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>

namespace stcox {

namespace {

std::vector<std::string> scalar_names(int p1, int p2) {
  const ThetaLayout L(1, 1, p1, p2);
  std::vector<std::string> names = L.names(true);
  names.resize(static_cast<std::size_t>(L.tau()));
  names.push_back("tau");
  names.push_back("sigma_z");
  for (int k = 0; k < p1; ++k) names.push_back("sigma_u[" + std::to_string(k + 1) + "]");
  for (int l = 0; l < p2; ++l) names.push_back("sigma_v[" + std::to_string(l + 1) + "]");
  return names;
}

Vector scalars(const ModelParameters& p) {
  const ThetaLayout L(p);
  const Vector red = L.pack(p, true);
  Vector out(L.tau() + 2 + p.p1() + p.p2());
  out.head(L.tau()) = red.head(L.tau());
  out[L.tau()] = p.tau;
  out[L.tau() + 1] = std::sqrt(p.sigma_z2);
  out.segment(L.tau() + 2, p.p1()) = p.sigma_u2.cwiseSqrt();
  out.tail(p.p2()) = p.sigma_v2.cwiseSqrt();
  return out;
}

double sq_norm_j(const Vector& d, const Matrix& J) { return d.dot(J * d); }

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

ReplicateOutcome run_one(const Section5Truth& truth, const StudyOptions& opt, int n, int index) {
  ReplicateOutcome out;
  out.n = n;
  out.index = index;
  const BasisSystem& basis = *truth.basis;
  const ModelParameters& th0 = truth.params;
  const std::uint64_t seed = derive_seed(derive_seed(opt.seed, static_cast<std::uint64_t>(n)), index);
  try {
    const SimulatedData sim = simulate(th0, basis, n, seed);
    const auto data = pattern_stats(basis, sim.patterns);
    FitConfig cfg = opt.fit;
    cfg.p1 = th0.p1();
    cfg.p2 = th0.p2();
    cfg.threads = 1;
    const FitReport rep = fit(data, basis, cfg);
    ModelParameters est = rep.theta_hat;
    std::vector<Vector> w(rep.posteriors.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rep.posteriors[i].w_star;
    align_signs(est, &w, th0, basis);

    out.converged = rep.converged;
    out.iterations = rep.trace.empty() ? 0 : rep.trace.back().iteration;
    out.estimate = scalars(est);

    const Matrix& Jt = basis.temporal().gram();
    const Matrix& Js = basis.spatial().gram();
    const int p1 = th0.p1(), p2 = th0.p2();
    out.functional_sq.resize(2 + p1 + p2);
    out.functional_sq[0] = sq_norm_j(est.c0 - th0.c0, Jt);
    for (int k = 0; k < p1; ++k) out.functional_sq[1 + k] = sq_norm_j(est.C.col(k) - th0.C.col(k), Jt);
    out.functional_sq[1 + p1] = sq_norm_j(est.d0 - th0.d0, Js);
    for (int l = 0; l < p2; ++l) out.functional_sq[2 + p1 + l] = sq_norm_j(est.D.col(l) - th0.D.col(l), Js);

    out.effect_mse = Vector::Zero(1 + p1 + p2);
    for (int i = 0; i < n; ++i) out.effect_mse += (w[i] - sim.latents[i]).array().square().matrix() / n;

    out.corr_u1v1 = est.Sigma_uv(0, 0) / std::sqrt(est.sigma_u2[0] * est.sigma_v2[0]);
    if (opt.asymptotics) {
      const ThetaLayout L(est);
      InferenceOptions io;
      io.threads = 1;
      const InferenceReport inf = infer(est, basis, data, io);
      out.asymptotic_sd = inf.reduced_se.head(L.tau());
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

void align_signs(ModelParameters& est, std::vector<Vector>* latents, const ModelParameters& truth,
                 const BasisSystem& basis) {
  const int p1 = est.p1(), p2 = est.p2();
  const Matrix& Jt = basis.temporal().gram();
  const Matrix& Js = basis.spatial().gram();
  for (int k = 0; k < std::min(p1, truth.p1()); ++k)
    if (est.C.col(k).dot(Jt * truth.C.col(k)) < 0.0) {
      est.C.col(k) *= -1.0;
      est.sigma_zu[k] *= -1.0;
      est.Sigma_uv.row(k) *= -1.0;
      if (latents)
        for (auto& w : *latents) w[1 + k] *= -1.0;
    }
  for (int l = 0; l < std::min(p2, truth.p2()); ++l)
    if (est.D.col(l).dot(Js * truth.D.col(l)) < 0.0) {
      est.D.col(l) *= -1.0;
      est.sigma_zv[l] *= -1.0;
      est.Sigma_uv.col(l) *= -1.0;
      if (latents)
        for (auto& w : *latents) w[1 + p1 + l] *= -1.0;
    }
}

StudyResult run_study(const StudyOptions& opt) {
  if (opt.replicates < 1) throw std::invalid_argument("mc study: replicates must be at least 1");
  if (opt.n_list.empty()) throw std::invalid_argument("mc study: empty sample-size list");
  for (int n : opt.n_list)
    if (n < 1) throw std::invalid_argument("mc study: sample sizes must be positive");
  opt.fit.validate();

  const Section5Truth truth = section5_truth(opt.tau);
  const int p1 = truth.params.p1(), p2 = truth.params.p2();
  StudyResult res;
  res.tau = opt.tau;
  res.truth = scalars(truth.params);
  res.scalar_names = scalar_names(p1, p2);
  res.functional_names = {"mu"};
  for (int k = 0; k < p1; ++k) res.functional_names.push_back("phi" + std::to_string(k + 1));
  res.functional_names.push_back("nu");
  for (int l = 0; l < p2; ++l) res.functional_names.push_back("psi" + std::to_string(l + 1));
  res.effect_names = {"Z"};
  for (int k = 0; k < p1; ++k) res.effect_names.push_back("U" + std::to_string(k + 1));
  for (int l = 0; l < p2; ++l) res.effect_names.push_back("V" + std::to_string(l + 1));
  res.cross_count = p1 + p2 + p1 * p2;

  for (int n : opt.n_list) {
    std::vector<ReplicateOutcome> outs(static_cast<std::size_t>(opt.replicates));
    std::mutex progress_mutex;
    detail::parallel_for(outs.size(), opt.threads, [&](std::size_t r) {
      outs[r] = run_one(truth, opt, n, static_cast<int>(r));
      if (opt.progress) {
        const std::lock_guard<std::mutex> lock(progress_mutex);
        opt.progress("n=" + std::to_string(n) + " replicate " + std::to_string(r + 1) + "/" +
                     std::to_string(opt.replicates) + (outs[r].ok ? "" : " failed: " + outs[r].error));
      }
    });

    StudyCell cell;
    cell.n = n;
    cell.attempted = opt.replicates;
    const auto ns = static_cast<Eigen::Index>(res.scalar_names.size());
    cell.scalar_rmse = Vector::Zero(ns);
    cell.functional_rmse = Vector::Zero(static_cast<Eigen::Index>(res.functional_names.size()));
    cell.effect_rmse = Vector::Zero(static_cast<Eigen::Index>(res.effect_names.size()));
    std::vector<const ReplicateOutcome*> good;
    for (const auto& o : outs)
      if (o.ok) good.push_back(&o);
    cell.succeeded = static_cast<int>(good.size());
    for (const auto* o : good) cell.converged += o->converged ? 1 : 0;
    if (!good.empty()) {
      const double g = static_cast<double>(good.size());
      Vector mean = Vector::Zero(ns);
      for (const auto* o : good) {
        cell.scalar_rmse += (o->estimate - res.truth).array().square().matrix() / g;
        cell.functional_rmse += o->functional_sq / g;
        cell.effect_rmse += o->effect_mse / g;
        mean += o->estimate / g;
        cell.corr_u1v1_mean += o->corr_u1v1 / g;
      }
      cell.scalar_rmse = cell.scalar_rmse.cwiseSqrt();
      cell.functional_rmse = cell.functional_rmse.cwiseSqrt();
      cell.effect_rmse = cell.effect_rmse.cwiseSqrt();
      cell.median_abs_error.resize(ns);
      for (Eigen::Index j = 0; j < ns; ++j) {
        std::vector<double> e;
        for (const auto* o : good) e.push_back(std::abs(o->estimate[j] - res.truth[j]));
        cell.median_abs_error[j] = median(e);
      }
      if (opt.asymptotics) {
        cell.asd_mean = Vector::Zero(res.cross_count);
        for (const auto* o : good) cell.asd_mean += o->asymptotic_sd / g;
      }
      if (good.size() >= 2) {
        cell.mc_sd = Vector::Zero(ns);
        for (const auto* o : good) {
          cell.mc_sd += (o->estimate - mean).array().square().matrix() / (g - 1.0);
          cell.corr_u1v1_sd += std::pow(o->corr_u1v1 - cell.corr_u1v1_mean, 2) / (g - 1.0);
        }
        cell.mc_sd = cell.mc_sd.cwiseSqrt();
        cell.corr_u1v1_sd = std::sqrt(cell.corr_u1v1_sd);
        if (opt.asymptotics) {
          cell.asd_sd = Vector::Zero(res.cross_count);
          for (const auto* o : good)
            cell.asd_sd += (o->asymptotic_sd - cell.asd_mean).array().square().matrix() / (g - 1.0);
          cell.asd_sd = cell.asd_sd.cwiseSqrt();
        }
      }
    }
    res.cells.push_back(std::move(cell));
    for (auto& o : outs) res.outcomes.push_back(std::move(o));
  }
  return res;
}

std::string rmse_table_csv(const StudyResult& r) {
  std::string out = "# root mean squared errors, tau = " + to_string(r.tau) + "\nparameter";
  for (const auto& c : r.cells) out += ",n=" + std::to_string(c.n);
  out += "\n";
  auto row = [&](const std::string& name, auto&& get) {
    out += name;
    for (const auto& c : r.cells) out += "," + (c.succeeded ? fmt(get(c)) : std::string("NA"));
    out += "\n";
  };
  const int cross = r.cross_count;
  for (int j = 0; j < cross; ++j) row(r.scalar_names[j], [&](const StudyCell& c) { return c.scalar_rmse[j]; });
  row("tau", [&](const StudyCell& c) { return c.scalar_rmse[cross]; });
  for (std::size_t f = 0; f < r.functional_names.size(); ++f)
    row(r.functional_names[f], [&](const StudyCell& c) { return c.functional_rmse[static_cast<Eigen::Index>(f)]; });
  for (std::size_t j = static_cast<std::size_t>(cross) + 1; j < r.scalar_names.size(); ++j)
    row(r.scalar_names[j], [&](const StudyCell& c) { return c.scalar_rmse[static_cast<Eigen::Index>(j)]; });
  return out;
}

std::string effect_table_csv(const StudyResult& r) {
  std::string out = "# root mean squared errors of random-effect predictors, tau = " + to_string(r.tau) + "\nvariable";
  for (const auto& c : r.cells) out += ",n=" + std::to_string(c.n);
  out += "\n";
  for (std::size_t e = 0; e < r.effect_names.size(); ++e) {
    out += r.effect_names[e];
    for (const auto& c : r.cells)
      out += "," + (c.succeeded ? fmt(c.effect_rmse[static_cast<Eigen::Index>(e)]) : std::string("NA"));
    out += "\n";
  }
  return out;
}

std::string asymptotic_table_csv(const StudyResult& r) {
  std::string out = "# Monte Carlo sd (true) vs reduced asymptotic sd (mean, sd over replicates), tau = " +
                    to_string(r.tau) + "\nparameter";
  for (const auto& c : r.cells) {
    const std::string n = std::to_string(c.n);
    out += ",true n=" + n + ",mean n=" + n + ",sd n=" + n;
  }
  out += "\n";
  for (int j = 0; j < r.cross_count; ++j) {
    out += "sd(" + r.scalar_names[static_cast<std::size_t>(j)] + ")";
    for (const auto& c : r.cells) {
      out += "," + (c.mc_sd.size() ? fmt(c.mc_sd[j]) : std::string("NA"));
      out += "," + (c.asd_mean.size() ? fmt(c.asd_mean[j]) : std::string("NA"));
      out += "," + (c.asd_sd.size() ? fmt(c.asd_sd[j]) : std::string("NA"));
    }
    out += "\n";
  }
  return out;
}

std::string outcomes_csv(const StudyResult& r) {
  std::string out = "n,replicate,ok,converged,iterations";
  for (const auto& s : r.scalar_names) out += "," + s;
  for (const auto& f : r.functional_names) out += ",sqerr_" + f;
  for (const auto& e : r.effect_names) out += ",mse_" + e;
  for (int j = 0; j < r.cross_count; ++j) out += ",asd_" + r.scalar_names[static_cast<std::size_t>(j)];
  out += ",corr_U1V1\n";
  const std::size_t width =
      r.scalar_names.size() + r.functional_names.size() + r.effect_names.size() + static_cast<std::size_t>(r.cross_count) + 1;
  for (const auto& o : r.outcomes) {
    out += std::to_string(o.n) + "," + std::to_string(o.index) + "," + (o.ok ? "1" : "0") + "," +
           (o.converged ? "1" : "0") + "," + std::to_string(o.iterations);
    if (!o.ok) {
      for (std::size_t k = 0; k < width; ++k) out += ",NA";
      out += "\n";
      continue;
    }
    auto put = [&](const Vector& v) {
      for (Eigen::Index k = 0; k < v.size(); ++k) out += "," + fmt(v[k]);
    };
    put(o.estimate);
    put(o.functional_sq);
    put(o.effect_mse);
    if (o.asymptotic_sd.size())
      put(o.asymptotic_sd);
    else
      for (int k = 0; k < r.cross_count; ++k) out += ",NA";
    out += "," + fmt(o.corr_u1v1) + "\n";
  }
  return out;
}

}  // namespace stcox
