#include "stcox/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

namespace stcox {

void FitConfig::validate() const {
  if (p1 < 1 || p2 < 1) throw std::invalid_argument("fit config: p1 and p2 must be at least 1");
  for (double x : xi)
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("fit config: smoothing parameters must be >= 0");
  if (!(em_tol > 0.0) || !(newton_tol > 0.0)) throw std::invalid_argument("fit config: tolerances must be positive");
  if (em_max_iter < 0 || newton_max_iter < 1) throw std::invalid_argument("fit config: iteration limits must be positive");
  if (threads < 1) throw std::invalid_argument("fit config: threads must be at least 1");
}

namespace {

double log_sum_exp(const Vector& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

// Gaussian posterior of w replaced, for the M-step, by: exp(z) integrated exactly
// (lognormal factor and tilt of (u, v)), and a symmetric 2d-point cubature over (u, v).
struct ReplicateCubature {
  double log_scale = 0.0;  // zbar + S_zz / 2
  Matrix u;                // (1+p1) x K, first row ones
  Matrix v;                // (1+p2) x K
  Vector log_weight;       // K
  Vector u_mean;           // (1+p1) posterior mean with leading one
  Vector v_mean;
};

ReplicateCubature make_cubature(const PosteriorSummary& post, int p1, int p2) {
  ReplicateCubature c;
  const Vector& w = post.w_star;
  const Matrix& S = post.S;
  const int dx = p1 + p2;
  c.log_scale = w[0] + 0.5 * S(0, 0);
  c.u_mean.resize(1 + p1);
  c.u_mean << 1.0, w.segment(1, p1);
  c.v_mean.resize(1 + p2);
  c.v_mean << 1.0, w.tail(p2);
  if (dx == 0) {
    c.u = Matrix::Ones(1, 1);
    c.v = Matrix::Ones(1, 1);
    c.log_weight = Vector::Zero(1);
    return c;
  }
  const Vector tilted = w.tail(dx) + S.block(1, 0, dx, 1);
  const Matrix Sxx = S.block(1, 1, dx, dx);
  Eigen::LLT<Matrix> llt(Sxx);
  Matrix L = llt.matrixL();
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(Sxx);
    L = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  const int K = 2 * dx;
  const double r = std::sqrt(static_cast<double>(dx));
  c.u.resize(1 + p1, K);
  c.v.resize(1 + p2, K);
  c.log_weight = Vector::Constant(K, -std::log(static_cast<double>(K)));
  for (int j = 0; j < dx; ++j) {
    for (int s = 0; s < 2; ++s) {
      const Vector x = tilted + (s == 0 ? r : -r) * L.col(j);
      const int k = 2 * j + s;
      c.u(0, k) = 1.0;
      c.u.block(1, k, p1, 1) = x.head(p1);
      c.v(0, k) = 1.0;
      c.v.block(1, k, p2, 1) = x.tail(p2);
    }
  }
  return c;
}

// One intensity factor (time or space) in the M-step.
struct AxisProblem {
  const Matrix* basis;    // nodes x q
  const Vector* weights;  // nodes
  const Matrix* penalty;  // q x q
  const Matrix* nullspace;
  std::array<double, 2> xi;  // mean, components
  std::vector<const Vector*> event_sums;
  std::vector<const Matrix*> points;  // (1+p) x K per replicate
  std::vector<const Vector*> means;   // (1+p) per replicate
};

// log of the factor integral at every cubature point, for coefficients Cf.
std::vector<Vector> log_integrals(const AxisProblem& ax, const Matrix& Cf) {
  const Matrix Phi = (*ax.basis) * Cf;
  const Vector logw = ax.weights->array().log();
  std::vector<Vector> out(ax.points.size());
  for (std::size_t i = 0; i < ax.points.size(); ++i) {
    const Matrix& P = *ax.points[i];
    out[i].resize(P.cols());
    for (Eigen::Index k = 0; k < P.cols(); ++k) {
      const Vector eta = Phi * P.col(k) + logw;
      out[i][k] = log_sum_exp(eta);
    }
  }
  return out;
}

double axis_penalty(const AxisProblem& ax, const Matrix& Cf) {
  double s = ax.xi[0] * Cf.col(0).dot((*ax.penalty) * Cf.col(0));
  for (Eigen::Index l = 1; l < Cf.cols(); ++l) s += ax.xi[1] * Cf.col(l).dot((*ax.penalty) * Cf.col(l));
  return s;
}

// (1/n) [sum_i b_i' Cf mean_i - sum_ik exp(logA_ik + logI_ik)] - penalty
double axis_objective(const AxisProblem& ax, const Matrix& Cf, const std::vector<Vector>& logA,
                      const std::vector<Vector>& logI) {
  const double n = static_cast<double>(ax.points.size());
  double s = 0.0;
  for (std::size_t i = 0; i < ax.points.size(); ++i) {
    s += ax.event_sums[i]->dot(Cf * (*ax.means[i]));
    s -= (logA[i] + logI[i]).array().exp().sum();
  }
  return s / n - axis_penalty(ax, Cf);
}

// One damped Newton step on the axis objective in null-space coordinates.
// Returns false when no ascent was found after 10 halvings. logI holds the
// factor integrals of Cf and is updated with it.
bool axis_newton(const AxisProblem& ax, Matrix& Cf, const std::vector<Vector>& logA, std::vector<Vector>& logI) {
  const Matrix& B = *ax.basis;
  const Matrix& N = *ax.nullspace;
  const Eigen::Index q = B.cols();
  const Eigen::Index P = Cf.cols();  // 1 + p
  const Eigen::Index r = N.cols();
  const double n = static_cast<double>(ax.points.size());
  const Matrix Phi = B * Cf;
  const Vector logw = ax.weights->array().log();

  Matrix M = Matrix::Zero(B.rows(), P);                 // sum A w e^eta utilde^T
  Matrix W = Matrix::Zero(B.rows(), P * (P + 1) / 2);  // sum A w e^eta u_l u_l'
  Matrix G = Matrix::Zero(q, P);
  for (std::size_t i = 0; i < ax.points.size(); ++i) {
    const Matrix& Pts = *ax.points[i];
    G += (*ax.event_sums[i]) * ax.means[i]->transpose();
    for (Eigen::Index k = 0; k < Pts.cols(); ++k) {
      const Vector ut = Pts.col(k);
      const Vector e = (Phi * ut + logw).array() + logA[i][k];
      const Vector mass = e.array().exp();
      M.noalias() += mass * ut.transpose();
      int c = 0;
      for (Eigen::Index l = 0; l < P; ++l)
        for (Eigen::Index l2 = l; l2 < P; ++l2) W.col(c++) += mass * (ut[l] * ut[l2]);
    }
  }
  G = (G - B.transpose() * M) / n;
  const Matrix& Om = *ax.penalty;
  for (Eigen::Index l = 0; l < P; ++l) G.col(l) -= 2.0 * ax.xi[l == 0 ? 0 : 1] * Om * Cf.col(l);

  Vector g(P * r);
  for (Eigen::Index l = 0; l < P; ++l) g.segment(l * r, r) = N.transpose() * G.col(l);
  Matrix negH = Matrix::Zero(P * r, P * r);
  int c = 0;
  for (Eigen::Index l = 0; l < P; ++l) {
    for (Eigen::Index l2 = l; l2 < P; ++l2) {
      const Matrix BN = B * N;
      Matrix blk = BN.transpose() * W.col(c++).asDiagonal() * BN / n;
      if (l == l2) blk += 2.0 * ax.xi[l == 0 ? 0 : 1] * N.transpose() * Om * N;
      negH.block(l * r, l2 * r, r, r) = blk;
      if (l != l2) negH.block(l2 * r, l * r, r, r) = blk.transpose();
    }
  }
  Eigen::LDLT<Matrix> ldlt(negH);
  Vector step = ldlt.solve(g);
  if (ldlt.info() != Eigen::Success || !step.allFinite() || g.dot(step) <= 0.0) step = g;  // steepest ascent fallback

  const double f0 = axis_objective(ax, Cf, logA, logI);
  double t = 1.0;
  for (int h = 0; h <= 10; ++h) {
    Matrix trial = Cf;
    for (Eigen::Index l = 0; l < P; ++l) trial.col(l) += t * (N * step.segment(l * r, r));
    std::vector<Vector> trial_logI = log_integrals(ax, trial);
    const double f = axis_objective(ax, trial, logA, trial_logI);
    if (std::isfinite(f) && f >= f0) {
      Cf = trial;
      logI = std::move(trial_logI);
      return true;
    }
    t *= 0.5;
  }
  return false;
}

struct MStepState {
  double tau;
  Matrix Ct;  // [c0 C]
  Matrix Ds;  // [d0 D]
  std::vector<Vector> logIt, logIs;  // factor integrals at the cubature points
};

class MStepWork {
 public:
  MStepWork(const BasisSystem& basis, const std::vector<PatternStats>& data,
            const std::vector<PosteriorSummary>& posts, int p1, int p2, const Xi& xi) {
    cub_.reserve(posts.size());
    for (const auto& p : posts) cub_.push_back(make_cubature(p, p1, p2));
    total_m_ = 0.0;
    for (const auto& x : data) total_m_ += x.m;
    const auto& tb = basis.temporal();
    const auto& sb = basis.spatial();
    t_.basis = &tb.quad_basis();
    t_.weights = &tb.quad_weights();
    t_.penalty = &tb.penalty();
    t_.nullspace = &basis.temporal_nullspace();
    t_.xi = {xi[0], xi[1]};
    s_.basis = &sb.quad_basis();
    s_.weights = &sb.quad_weights();
    s_.penalty = &sb.penalty();
    s_.nullspace = &basis.spatial_nullspace();
    s_.xi = {xi[2], xi[3]};
    for (std::size_t i = 0; i < data.size(); ++i) {
      t_.event_sums.push_back(&data[i].bt_sum);
      s_.event_sums.push_back(&data[i].bs_sum);
      t_.points.push_back(&cub_[i].u);
      s_.points.push_back(&cub_[i].v);
      t_.means.push_back(&cub_[i].u_mean);
      s_.means.push_back(&cub_[i].v_mean);
    }
  }

  double total_events() const { return total_m_; }

  // log of exp(scale_i) * weight_k * (other factor integral) at each point
  std::vector<Vector> log_factors(const std::vector<Vector>& other) const {
    std::vector<Vector> out(cub_.size());
    for (std::size_t i = 0; i < cub_.size(); ++i) out[i] = (other[i] + cub_[i].log_weight).array() + cub_[i].log_scale;
    return out;
  }

  void refresh(MStepState& st) const {
    st.logIt = log_integrals(t_, st.Ct);
    st.logIs = log_integrals(s_, st.Ds);
  }

  // closed-form tau given the coefficients
  double update_tau(const MStepState& st, double tau_old) const {
    std::vector<double> terms;
    for (std::size_t i = 0; i < cub_.size(); ++i)
      for (Eigen::Index k = 0; k < st.logIt[i].size(); ++k)
        terms.push_back(cub_[i].log_scale + cub_[i].log_weight[k] + st.logIt[i][k] + st.logIs[i][k]);
    const Vector tv = Eigen::Map<const Vector>(terms.data(), static_cast<Eigen::Index>(terms.size()));
    if (total_m_ <= 0.0) return tau_old - 10.0;
    return std::max(std::log(total_m_) - log_sum_exp(tv), tau_old - 10.0);
  }

  bool temporal_step(MStepState& st) const {
    std::vector<Vector> logA = log_factors(st.logIs);
    for (auto& v : logA) v.array() += st.tau;
    return axis_newton(t_, st.Ct, logA, st.logIt);
  }

  bool spatial_step(MStepState& st) const {
    std::vector<Vector> logA = log_factors(st.logIt);
    for (auto& v : logA) v.array() += st.tau;
    return axis_newton(s_, st.Ds, logA, st.logIs);
  }

 private:
  std::vector<ReplicateCubature> cub_;
  AxisProblem t_, s_;
  double total_m_ = 0.0;
};

Matrix join(const Vector& c0, const Matrix& C) {
  Matrix out(c0.size(), 1 + C.cols());
  out.col(0) = c0;
  out.rightCols(C.cols()) = C;
  return out;
}

}  // namespace

ModelParameters m_step(const ModelParameters& params, const BasisSystem& basis,
                       const std::vector<PatternStats>& data, const std::vector<PosteriorSummary>& posteriors,
                       const Xi& xi, MStepInfo* info) {
  if (data.size() != posteriors.size() || data.empty())
    throw std::invalid_argument("m_step: data and posteriors must be non-empty and of equal length");
  const int p1 = params.p1();
  const int p2 = params.p2();
  const MStepWork work(basis, data, posteriors, p1, p2, xi);
  MStepState st{params.tau, join(params.c0, params.C), join(params.d0, params.D), {}, {}};
  work.refresh(st);

  bool ok = true;
  st.tau = work.update_tau(st, st.tau);
  if (!work.temporal_step(st)) {
    ok = false;
    if (info) info->notes.push_back("temporal block: no ascent after 10 halvings");
  }
  st.tau = work.update_tau(st, st.tau);
  if (!work.spatial_step(st)) {
    ok = false;
    if (info) info->notes.push_back("spatial block: no ascent after 10 halvings");
  }
  st.tau = work.update_tau(st, st.tau);
  if (info) info->flagged = !ok;

  const int d = 1 + p1 + p2;
  Matrix sigma = Matrix::Zero(d, d);
  for (const auto& p : posteriors) sigma += p.w_star * p.w_star.transpose() + p.S;
  sigma /= static_cast<double>(posteriors.size());
  sigma = 0.5 * (sigma + sigma.transpose());
  if (Eigen::LLT<Matrix>(sigma).info() != Eigen::Success) sigma += 1e-10 * Matrix::Identity(d, d);

  try {
    return restore_kl_form(basis, st.tau, st.Ct.col(0), st.Ct.rightCols(p1), st.Ds.col(0), st.Ds.rightCols(p2),
                           sigma);
  } catch (const std::domain_error& e) {
    // loadings collapsed (no information left to hold them apart): keep the previous ones
    if (info) {
      info->flagged = true;
      info->notes.push_back(std::string("loadings kept: ") + e.what());
    }
    return restore_kl_form(basis, st.tau, st.Ct.col(0), params.C, st.Ds.col(0), params.D, sigma);
  }
}

namespace {

// Leading J-orthonormal directions of per-replicate log-ratios between a
// smoothed empirical density and the smoothed baseline, completed
// deterministically when the data support fewer than p directions.
Matrix residual_directions(const Matrix& B, const Vector& weights, const Matrix& gram, const Matrix& nullspace,
                           const Vector& base_eta, const std::vector<const Vector*>& sums,
                           const std::vector<int>& counts, int p) {
  const Eigen::Index q = B.cols();
  if (nullspace.cols() < p)
    throw std::invalid_argument("initialize: more components requested than free basis directions");
  Vector lam = (base_eta.array() - base_eta.maxCoeff()).exp();
  lam /= weights.dot(lam);
  const Vector smooth_base = B * (B.transpose() * weights.cwiseProduct(lam));  // smoothed baseline density
  // J-orthonormal basis of the constrained space
  const Matrix NJN = nullspace.transpose() * gram * nullspace;
  Eigen::SelfAdjointEigenSolver<Matrix> es(NJN);
  const Matrix NJ = nullspace * es.operatorInverseSqrt();
  const Matrix to_alpha = NJ.transpose() * gram;  // coefficients -> orthonormal coordinates

  const Matrix proj_moments = B.transpose() * weights.asDiagonal();  // f on nodes -> int f beta
  Eigen::LDLT<Matrix> J(gram);
  std::vector<Vector> alphas;
  for (std::size_t i = 0; i < sums.size(); ++i) {
    const double m = counts[i];
    const Vector dens = ((B * (*sums[i])).array() + smooth_base.array()) / (m + 1.0);
    const Vector r = (dens.array() / smooth_base.array()).log();
    const Vector coef = J.solve(proj_moments * r);
    alphas.push_back(to_alpha * coef);
  }
  const Eigen::Index rN = NJ.cols();
  Vector mean = Vector::Zero(rN);
  for (const auto& a : alphas) mean += a;
  if (!alphas.empty()) mean /= static_cast<double>(alphas.size());
  Matrix K = Matrix::Zero(rN, rN);
  for (const auto& a : alphas) K += (a - mean) * (a - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> ke(K);
  std::vector<Vector> dirs;
  const double top = std::max(ke.eigenvalues().maxCoeff(), 0.0);
  for (Eigen::Index k = rN - 1; k >= 0 && static_cast<int>(dirs.size()) < p; --k)
    if (top > 0.0 && ke.eigenvalues()[k] > 1e-10 * top) dirs.push_back(ke.eigenvectors().col(k));
  for (Eigen::Index j = 0; j < rN && static_cast<int>(dirs.size()) < p; ++j) {
    Vector e = Vector::Unit(rN, j);
    for (const auto& d : dirs) e -= d.dot(e) * d;
    if (e.norm() > 1e-6) dirs.push_back(e.normalized());
  }
  Matrix A(rN, p);
  for (int k = 0; k < p; ++k) A.col(k) = dirs[static_cast<std::size_t>(k)];
  (void)q;
  return NJ * A;
}

}  // namespace

ModelParameters initialize(const BasisSystem& basis, const std::vector<PatternStats>& data, int p1, int p2,
                           const Xi& xi) {
  if (data.empty()) throw std::invalid_argument("initialize: no replicates");
  double total = 0.0;
  for (const auto& x : data) total += x.m;
  if (total <= 0.0) throw std::invalid_argument("initialize: every replicate is empty");
  const double n = static_cast<double>(data.size());
  const auto& td = basis.spec().temporal_domain;
  const auto& sd = basis.spec().spatial_domain;

  // Pooled log-linear fit of mu and nu with w = 0.
  std::vector<PosteriorSummary> zero(data.size());
  for (auto& z : zero) {
    z.w_star = Vector::Zero(1);
    z.S = Matrix::Zero(1, 1);
  }
  const MStepWork work(basis, data, zero, 0, 0, xi);
  MStepState st{std::log(total / n) - std::log(td.length()) - std::log(sd.area()), Matrix::Zero(basis.q1(), 1),
                Matrix::Zero(basis.q2(), 1), {}, {}};
  work.refresh(st);
  for (int round = 0; round < 8; ++round) {
    st.tau = work.update_tau(st, st.tau);
    work.temporal_step(st);
    st.tau = work.update_tau(st, st.tau);
    work.spatial_step(st);
  }
  st.tau = work.update_tau(st, st.tau);

  std::vector<const Vector*> bt, bs;
  std::vector<int> counts;
  for (const auto& x : data) {
    bt.push_back(&x.bt_sum);
    bs.push_back(&x.bs_sum);
    counts.push_back(x.m);
  }
  const auto& tb = basis.temporal();
  const auto& sb = basis.spatial();
  const Matrix C = residual_directions(tb.quad_basis(), tb.quad_weights(), tb.gram(), basis.temporal_nullspace(),
                                       tb.quad_basis() * st.Ct.col(0), bt, counts, p1);
  const Matrix D = residual_directions(sb.quad_basis(), sb.quad_weights(), sb.gram(), basis.spatial_nullspace(),
                                       sb.quad_basis() * st.Ds.col(0), bs, counts, p2);

  const int d = 1 + p1 + p2;
  Matrix sigma = Matrix::Zero(d, d);
  sigma(0, 0) = 0.1;
  for (int k = 0; k < p1; ++k) sigma(1 + k, 1 + k) = 0.1 * std::pow(0.9, k);
  for (int k = 0; k < p2; ++k) sigma(1 + p1 + k, 1 + p1 + k) = 0.1 * std::pow(0.9, k);
  return restore_kl_form(basis, st.tau, st.Ct.col(0), C, st.Ds.col(0), D, sigma);
}

namespace {

// Posteriors and objective at theta, or nothing when the E-step breaks down.
std::optional<std::pair<std::vector<PosteriorSummary>, double>> evaluate(
    const ModelParameters& theta, const BasisSystem& basis, const std::vector<PatternStats>& data,
    const FitConfig& config, const std::vector<PosteriorSummary>* warm) {
  const LaplaceOptions opt{config.newton_tol, config.newton_max_iter};
  try {
    const CompleteDataEvaluator ev(theta, basis);
    std::vector<PosteriorSummary> post;
    try {
      post = e_step(ev, data, opt, warm, config.threads);
    } catch (const NewtonFailure&) {
      if (!warm) throw;
      post = e_step(ev, data, opt, nullptr, config.threads);
    }
    const double ell = penalized_loglik(post, theta, basis, config.xi);
    if (!std::isfinite(ell)) return std::nullopt;
    return std::make_pair(std::move(post), ell);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// (1 - a) * from + a * to, with the loadings of `to` sign-matched to `from`,
// mapped back into the parameter space.
ModelParameters blend(const ModelParameters& from, const ModelParameters& to, double a, const BasisSystem& basis) {
  const int p1 = from.p1();
  const int p2 = from.p2();
  Matrix C = to.C, D = to.D;
  Vector flip = Vector::Ones(1 + p1 + p2);
  const Matrix& Jt = basis.temporal().gram();
  const Matrix& Js = basis.spatial().gram();
  for (int k = 0; k < p1; ++k)
    if (from.C.col(k).dot(Jt * C.col(k)) < 0.0) {
      C.col(k) *= -1.0;
      flip[1 + k] = -1.0;
    }
  for (int k = 0; k < p2; ++k)
    if (from.D.col(k).dot(Js * D.col(k)) < 0.0) {
      D.col(k) *= -1.0;
      flip[1 + p1 + k] = -1.0;
    }
  const Matrix St = flip.asDiagonal() * assemble_sigma(to) * flip.asDiagonal();
  const double b = 1.0 - a;
  return restore_kl_form(basis, b * from.tau + a * to.tau, b * from.c0 + a * to.c0, b * from.C + a * C,
                         b * from.d0 + a * to.d0, b * from.D + a * D, b * assemble_sigma(from) + a * St);
}

constexpr int kMaxBacktracks = 6;

}  // namespace

FitReport fit(const std::vector<PatternStats>& data, const BasisSystem& basis, const FitConfig& config,
              const std::optional<ModelParameters>& start, const FitCallback& callback) {
  config.validate();
  if (data.size() < 2) throw std::invalid_argument("fit: at least two replicates are required");
  double total = 0.0;
  for (const auto& x : data) total += x.m;
  if (total <= 0.0) throw std::invalid_argument("fit: every replicate is empty");

  FitReport rep;
  rep.config = config;
  ModelParameters theta = start ? *start : initialize(basis, data, config.p1, config.p2, config.xi);
  if (theta.p1() != config.p1 || theta.p2() != config.p2)
    throw std::invalid_argument("fit: starting parameters do not match p1, p2");

  auto first = evaluate(theta, basis, data, config, nullptr);
  if (!first) throw NewtonFailure("fit: Laplace approximation failed at the starting values");
  std::vector<PosteriorSummary> post = std::move(first->first);
  double ell = first->second;
  rep.trace.push_back({0, ell, false});
  if (callback) callback(rep.trace.back(), theta);

  for (int it = 1; it <= config.em_max_iter; ++it) {
    MStepInfo info;
    const ModelParameters next = m_step(theta, basis, data, post, config.xi, &info);
    // the EM update is accepted only if the Laplace objective does not drop;
    // otherwise the step towards it is halved
    bool accepted = false;
    double a = 1.0;
    for (int h = 0; h <= kMaxBacktracks && !accepted; ++h, a *= 0.5) {
      std::optional<ModelParameters> cand;
      try {
        cand = h == 0 ? next : blend(theta, next, a, basis);
      } catch (const std::domain_error&) {
        continue;
      }
      auto ev = evaluate(*cand, basis, data, config, &post);
      if (!ev || ev->second < ell) continue;
      const double change = std::abs(ev->second - ell) / std::max(1.0, std::abs(ell));
      theta = std::move(*cand);
      post = std::move(ev->first);
      ell = ev->second;
      accepted = true;
      rep.trace.push_back({it, ell, info.flagged});
      if (callback) callback(rep.trace.back(), theta);
      if (change < config.em_tol) rep.converged = true;
    }
    // no ascent left along the EM direction: theta is stationary for this scheme
    if (!accepted) rep.converged = true;
    if (rep.converged) break;
  }
  rep.theta_hat = std::move(theta);
  rep.posteriors = std::move(post);
  return rep;
}

FitReport fit(const std::vector<PointPattern>& patterns, const BasisSystem& basis, const FitConfig& config,
              const std::optional<ModelParameters>& start, const FitCallback& callback) {
  return fit(pattern_stats(basis, patterns), basis, config, start, callback);
}

LatentEffects predict_random_effects(const ModelParameters& theta_hat, const BasisSystem& basis,
                                     const PointPattern& pattern) {
  const PosteriorSummary s = laplace_marginal(theta_hat, basis, pattern);
  return LatentEffects::unstack(s.w_star, theta_hat.p1(), theta_hat.p2());
}

CvMode parse_cv_mode(const std::string& s) {
  if (s == "sequential") return CvMode::sequential;
  if (s == "full") return CvMode::full;
  throw std::invalid_argument("cv mode must be sequential or full, got '" + s + "'");
}

std::vector<int> assign_folds(int n, int folds, std::uint64_t seed) {
  if (folds < 2 || folds > n) throw std::invalid_argument("folds must be between 2 and the number of replicates");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (int i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int> U(0, i);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(U(rng))]);
  }
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (int pos = 0; pos < n; ++pos) fold[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = pos % folds;
  return fold;
}

namespace {

CvCell cv_cell(const std::vector<PatternStats>& data, const BasisSystem& basis, FitConfig config,
               const std::vector<int>& fold_of, int folds, const Xi& xi) {
  CvCell cell;
  cell.xi = xi;
  config.xi = xi;
  try {
    for (int k = 0; k < folds; ++k) {
      std::vector<PatternStats> train, test;
      for (std::size_t i = 0; i < data.size(); ++i) (fold_of[i] == k ? test : train).push_back(data[i]);
      const FitReport r = fit(train, basis, config);
      const CompleteDataEvaluator ev(r.theta_hat, basis);
      for (const auto& x : test) cell.score += laplace_marginal(ev, x, {config.newton_tol, config.newton_max_iter}).laplace_logf;
    }
  } catch (const std::exception& e) {
    cell.valid = false;
    cell.error = e.what();
    cell.score = 0.0;
  }
  return cell;
}

}  // namespace

CvResult cross_validate(const std::vector<PatternStats>& data, const BasisSystem& basis, const FitConfig& config,
                        int folds, const std::array<std::vector<double>, 4>& xi_grid, CvMode mode) {
  config.validate();
  for (const auto& g : xi_grid)
    if (g.empty()) throw std::invalid_argument("cross_validate: every smoothing grid needs at least one value");
  CvResult out;
  out.fold_of = assign_folds(static_cast<int>(data.size()), folds, config.seed);

  std::map<Xi, CvCell> cache;
  auto eval = [&](const Xi& xi) -> const CvCell& {
    auto it = cache.find(xi);
    if (it == cache.end()) {
      it = cache.emplace(xi, cv_cell(data, basis, config, out.fold_of, folds, xi)).first;
      out.table.push_back(it->second);
    }
    return it->second;
  };

  if (mode == CvMode::full) {
    for (double a : xi_grid[0])
      for (double b : xi_grid[1])
        for (double c : xi_grid[2])
          for (double d : xi_grid[3]) eval(Xi{a, b, c, d});
  } else {
    // each coordinate on its grid with the others at their initial values,
    // then the coordinate-wise optima combined
    Xi combined = config.xi;
    for (std::size_t j = 0; j < 4; ++j) {
      double best_score = -std::numeric_limits<double>::infinity();
      for (double g : xi_grid[j]) {
        Xi trial = config.xi;
        trial[j] = g;
        const CvCell& c = eval(trial);
        if (c.valid && c.score > best_score) {
          best_score = c.score;
          combined[j] = g;
        }
      }
    }
    const CvCell& c = eval(combined);
    if (c.valid) {
      out.best = combined;
      out.best_score = c.score;
      return out;
    }
  }

  bool any = false;
  for (const auto& c : out.table) {
    if (c.valid && (!any || c.score > out.best_score)) {
      out.best = c.xi;
      out.best_score = c.score;
      any = true;
    }
  }
  if (!any) throw std::runtime_error("cross_validate: every grid cell failed to fit");
  return out;
}

std::vector<double> variance_proportions(const Vector& variances) {
  const double total = variances.sum();
  std::vector<double> out;
  for (Eigen::Index k = 0; k < variances.size(); ++k) out.push_back(total > 0.0 ? variances[k] / total : 0.0);
  return out;
}

ComponentSelection select_components(const Vector& sigma_u2, const Vector& sigma_v2, double threshold) {
  ComponentSelection s;
  s.temporal_proportions = variance_proportions(sigma_u2);
  s.spatial_proportions = variance_proportions(sigma_v2);
  for (double p : s.temporal_proportions) {
    s.temporal_flagged.push_back(p < threshold);
    if (p >= threshold) ++s.suggested_p1;
  }
  for (double p : s.spatial_proportions) {
    s.spatial_flagged.push_back(p < threshold);
    if (p >= threshold) ++s.suggested_p2;
  }
  return s;
}

}  // namespace stcox
