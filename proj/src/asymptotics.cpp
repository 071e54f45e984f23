#include "stcox/asymptotics.hpp"

#include "parallel.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace stcox {

ThetaLayout::ThetaLayout(int q1, int q2, int p1, int p2) : q1_(q1), q2_(q2), p1_(p1), p2_(p2) {
  tau_ = p1 + p2 + p1 * p2;
  c0C_ = tau_ + 2 + p1 + p2;
  d0D_ = c0C_ + q1 * (1 + p1);
}

ThetaLayout::ThetaLayout(const ModelParameters& params)
    : ThetaLayout(static_cast<int>(params.c0.size()), static_cast<int>(params.d0.size()), params.p1(), params.p2()) {}

std::vector<std::string> ThetaLayout::names(bool reduced) const {
  std::vector<std::string> out(static_cast<std::size_t>(dim(reduced)));
  auto idx = [](int i) { return std::to_string(i + 1); };
  for (int k = 0; k < p1_; ++k) out[sigma_zu(k)] = "sigma_zu[" + idx(k) + "]";
  for (int l = 0; l < p2_; ++l) out[sigma_zv(l)] = "sigma_zv[" + idx(l) + "]";
  for (int l = 0; l < p2_; ++l)
    for (int k = 0; k < p1_; ++k) out[sigma_uv(k, l)] = "Sigma_uv[" + idx(k) + "," + idx(l) + "]";
  out[tau()] = "tau";
  out[sigma_z2()] = "sigma_z2";
  for (int k = 0; k < p1_; ++k) out[sigma_u2(k)] = "sigma_u2[" + idx(k) + "]";
  for (int l = 0; l < p2_; ++l) out[sigma_v2(l)] = "sigma_v2[" + idx(l) + "]";
  if (reduced) return out;
  for (int j = 0; j < q1_; ++j) {
    out[c0C(j, 0)] = "c0[" + idx(j) + "]";
    for (int k = 0; k < p1_; ++k) out[c0C(j, k + 1)] = "C[" + idx(j) + "," + idx(k) + "]";
  }
  for (int j = 0; j < q2_; ++j) {
    out[d0D(j, 0)] = "d0[" + idx(j) + "]";
    for (int l = 0; l < p2_; ++l) out[d0D(j, l + 1)] = "D[" + idx(j) + "," + idx(l) + "]";
  }
  return out;
}

Vector ThetaLayout::pack(const ModelParameters& p, bool reduced) const {
  Vector x(dim(reduced));
  for (int k = 0; k < p1_; ++k) x[sigma_zu(k)] = p.sigma_zu[k];
  for (int l = 0; l < p2_; ++l) x[sigma_zv(l)] = p.sigma_zv[l];
  for (int l = 0; l < p2_; ++l)
    for (int k = 0; k < p1_; ++k) x[sigma_uv(k, l)] = p.Sigma_uv(k, l);
  x[tau()] = p.tau;
  x[sigma_z2()] = p.sigma_z2;
  for (int k = 0; k < p1_; ++k) x[sigma_u2(k)] = p.sigma_u2[k];
  for (int l = 0; l < p2_; ++l) x[sigma_v2(l)] = p.sigma_v2[l];
  if (reduced) return x;
  for (int j = 0; j < q1_; ++j) {
    x[c0C(j, 0)] = p.c0[j];
    for (int k = 0; k < p1_; ++k) x[c0C(j, k + 1)] = p.C(j, k);
  }
  for (int j = 0; j < q2_; ++j) {
    x[d0D(j, 0)] = p.d0[j];
    for (int l = 0; l < p2_; ++l) x[d0D(j, l + 1)] = p.D(j, l);
  }
  return x;
}

ModelParameters ThetaLayout::unpack(const Vector& x, const ModelParameters& like) const {
  if (x.size() != reduced_dim() && x.size() != full_dim())
    throw std::invalid_argument("ThetaLayout::unpack: vector length matches neither layout");
  ModelParameters p = like;
  for (int k = 0; k < p1_; ++k) p.sigma_zu[k] = x[sigma_zu(k)];
  for (int l = 0; l < p2_; ++l) p.sigma_zv[l] = x[sigma_zv(l)];
  for (int l = 0; l < p2_; ++l)
    for (int k = 0; k < p1_; ++k) p.Sigma_uv(k, l) = x[sigma_uv(k, l)];
  p.tau = x[tau()];
  p.sigma_z2 = x[sigma_z2()];
  for (int k = 0; k < p1_; ++k) p.sigma_u2[k] = x[sigma_u2(k)];
  for (int l = 0; l < p2_; ++l) p.sigma_v2[l] = x[sigma_v2(l)];
  if (x.size() == reduced_dim()) return p;
  for (int j = 0; j < q1_; ++j) {
    p.c0[j] = x[c0C(j, 0)];
    for (int k = 0; k < p1_; ++k) p.C(j, k) = x[c0C(j, k + 1)];
  }
  for (int j = 0; j < q2_; ++j) {
    p.d0[j] = x[d0D(j, 0)];
    for (int l = 0; l < p2_; ++l) p.D(j, l) = x[d0D(j, l + 1)];
  }
  return p;
}

ScoreMethod parse_score_method(const std::string& s) {
  if (s == "laplace") return ScoreMethod::laplace;
  if (s == "fisher") return ScoreMethod::fisher_identity;
  if (s == "fd") return ScoreMethod::finite_difference;
  throw std::invalid_argument("score method must be laplace, fisher or fd, got '" + s + "'");
}

namespace {

// d Sigma for each covariance coordinate of the layout
std::vector<std::pair<int, Matrix>> sigma_directions(const ThetaLayout& L) {
  const int p1 = L.p1(), p2 = L.p2(), d = 1 + p1 + p2;
  std::vector<std::pair<int, Matrix>> out;
  auto sym = [&](int idx, int a, int b) {
    Matrix E = Matrix::Zero(d, d);
    E(a, b) = 1.0;
    E(b, a) = 1.0;
    out.emplace_back(idx, E);
  };
  for (int k = 0; k < p1; ++k) sym(L.sigma_zu(k), 0, 1 + k);
  for (int l = 0; l < p2; ++l) sym(L.sigma_zv(l), 0, 1 + p1 + l);
  for (int l = 0; l < p2; ++l)
    for (int k = 0; k < p1; ++k) sym(L.sigma_uv(k, l), 1 + k, 1 + p1 + l);
  sym(L.sigma_z2(), 0, 0);
  for (int k = 0; k < p1; ++k) sym(L.sigma_u2(k), 1 + k, 1 + k);
  for (int l = 0; l < p2; ++l) sym(L.sigma_v2(l), 1 + p1 + l, 1 + p1 + l);
  return out;
}

Vector score_laplace(const CompleteDataEvaluator& ev, const PatternStats& x, const ThetaLayout& L, bool reduced,
                     const LaplaceOptions& opt) {
  const PosteriorSummary post = laplace_marginal(ev, x, opt);
  const Vector& w = post.w_star;
  const Matrix& S = post.S;
  const int d = static_cast<int>(w.size());
  const LatentState st = ev.state(w);

  // how log det(-H) reacts to moving the mode
  Vector v(d);
  for (int k = 0; k < d; ++k) {
    const GradHess t = ev.data_tangent(x, st, ev.make_direction(0.0, Vector::Unit(d, k), Matrix(), Matrix()));
    v[k] = 0.5 * S.cwiseProduct(t.hess).sum();
  }
  auto total = [&](double dl, const Vector& dg, const Matrix& dH) {
    return dl + 0.5 * S.cwiseProduct(dH).sum() + v.dot(S * dg);
  };

  Vector out(L.dim(reduced));
  const Matrix& Si = ev.sigma_inverse();
  for (const auto& [idx, E] : sigma_directions(L)) {
    const Matrix SiE = Si * E;
    const Matrix dH = SiE * Si;  // d(-Sigma^-1) = Sigma^-1 dSigma Sigma^-1
    const Vector dg = dH * w;
    const double dl = -0.5 * SiE.trace() + 0.5 * w.dot(dg);
    out[idx] = total(dl, dg, dH);
  }
  {
    const GradHess t = ev.data_tangent(x, st, ev.make_direction(1.0, Vector(), Matrix(), Matrix()));
    out[L.tau()] = total(t.value, t.grad, t.hess);
  }
  if (reduced) return out;
  const int q1 = L.q1(), q2 = L.q2(), p1 = L.p1(), p2 = L.p2();
  for (int col = 0; col <= p1; ++col)
    for (int j = 0; j < q1; ++j) {
      Matrix dc = Matrix::Zero(q1, 1 + p1);
      dc(j, col) = 1.0;
      const GradHess t = ev.data_tangent(x, st, ev.make_direction(0.0, Vector(), dc, Matrix()));
      out[L.c0C(j, col)] = total(t.value, t.grad, t.hess);
    }
  for (int col = 0; col <= p2; ++col)
    for (int j = 0; j < q2; ++j) {
      Matrix dd = Matrix::Zero(q2, 1 + p2);
      dd(j, col) = 1.0;
      const GradHess t = ev.data_tangent(x, st, ev.make_direction(0.0, Vector(), Matrix(), dd));
      out[L.d0D(j, col)] = total(t.value, t.grad, t.hess);
    }
  return out;
}

// Fisher's identity with every expectation of exp(a'w) taken exactly under N(w*, S):
// a double sum over temporal x spatial nodes.
Vector score_fisher(const CompleteDataEvaluator& ev, const PatternStats& x, const ThetaLayout& L, bool reduced,
                    const LaplaceOptions& opt) {
  const PosteriorSummary post = laplace_marginal(ev, x, opt);
  const Vector& w = post.w_star;
  const Matrix& S = post.S;
  const int p1 = L.p1(), p2 = L.p2();
  const ModelParameters& th = ev.params();
  const ProcessTables& tab = ev.tables();

  Vector out(L.dim(reduced));
  const Matrix& Si = ev.sigma_inverse();
  const Matrix second = S + w * w.transpose();
  for (const auto& [idx, E] : sigma_directions(L)) {
    const Matrix SiE = Si * E;
    out[idx] = -0.5 * SiE.trace() + 0.5 * (SiE * Si).cwiseProduct(second).sum();
  }

  const Vector u = w.segment(1, p1), vv = w.tail(p2);
  const Matrix Suu = S.block(1, 1, p1, p1), Svv = S.block(1 + p1, 1 + p1, p2, p2);
  const Matrix Suv = S.block(1, 1 + p1, p1, p2);
  const Vector Suz = S.block(1, 0, p1, 1), Svz = S.block(1 + p1, 0, p2, 1);
  const Matrix& Phi = tab.phi_nodes();
  const Matrix& Psi = tab.psi_nodes();
  const Vector alpha = tab.mu_nodes() + Phi * (u + Suz) + 0.5 * (Phi * Suu).cwiseProduct(Phi).rowwise().sum();
  const Vector beta = tab.nu_nodes() + Psi * (vv + Svz) + 0.5 * (Psi * Svv).cwiseProduct(Psi).rowwise().sum();
  const double c = th.tau + w[0] + 0.5 * S(0, 0);
  const Vector at = (alpha.array() + c).exp() * tab.t_weights().array();
  const Vector bs = beta.array().exp() * tab.s_weights().array();
  const Matrix G = at.asDiagonal() * (Phi * Suv * Psi.transpose()).array().exp().matrix() * bs.asDiagonal();
  out[L.tau()] = x.m - G.sum();
  if (reduced) return out;

  const Matrix& Bt = ev.basis().temporal().quad_basis();
  const Matrix& Bs = ev.basis().spatial().quad_basis();
  const Vector rt = G.rowwise().sum();
  const Vector cs = G.colwise().sum().transpose();
  const Matrix GPsi = G * Psi;                // n_t x p2
  const Matrix GtPhi = G.transpose() * Phi;  // n_s x p1
  Matrix Wt(Bt.rows(), 1 + p1), Ws(Bs.rows(), 1 + p2);
  Wt.col(0) = rt;
  Ws.col(0) = cs;
  // tilted means of u and v at each node; the cross term through Suv is added below
  const Matrix tmean = (Phi * Suu).rowwise() + (u + Suz).transpose();
  const Matrix smean = (Psi * Svv).rowwise() + (vv + Svz).transpose();
  Wt.rightCols(p1) = rt.asDiagonal() * tmean + GPsi * Suv.transpose();
  Ws.rightCols(p2) = cs.asDiagonal() * smean + GtPhi * Suv;
  Vector ut(1 + p1), vt(1 + p2);
  ut << 1.0, u;
  vt << 1.0, vv;
  const Matrix gt = x.bt_sum * ut.transpose() - Bt.transpose() * Wt;
  const Matrix gs = x.bs_sum * vt.transpose() - Bs.transpose() * Ws;
  for (int col = 0; col <= p1; ++col)
    for (int j = 0; j < L.q1(); ++j) out[L.c0C(j, col)] = gt(j, col);
  for (int col = 0; col <= p2; ++col)
    for (int j = 0; j < L.q2(); ++j) out[L.d0D(j, col)] = gs(j, col);
  return out;
}

Vector score_fd(const CompleteDataEvaluator& ev, const PatternStats& x, const ThetaLayout& L, bool reduced,
                const LaplaceOptions& opt) {
  const PosteriorSummary centre = laplace_marginal(ev, x, opt);
  const Vector theta = L.pack(ev.params(), reduced);
  Vector out(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta[j]));
    double f[2];
    for (int s = 0; s < 2; ++s) {
      Vector t = theta;
      t[j] += s == 0 ? h : -h;
      const CompleteDataEvaluator e2(L.unpack(t, ev.params()), ev.basis());
      f[s] = laplace_marginal(e2, x, opt, &centre.w_star).laplace_logf;
    }
    out[j] = (f[0] - f[1]) / (2.0 * h);
  }
  return out;
}

}  // namespace

Vector score_theta(const CompleteDataEvaluator& ev, const PatternStats& x, bool reduced, ScoreMethod method,
                   const LaplaceOptions& opt) {
  const ThetaLayout L(ev.params());
  switch (method) {
    case ScoreMethod::laplace:
      return score_laplace(ev, x, L, reduced, opt);
    case ScoreMethod::fisher_identity:
      return score_fisher(ev, x, L, reduced, opt);
    case ScoreMethod::finite_difference:
      return score_fd(ev, x, L, reduced, opt);
  }
  throw std::logic_error("unknown score method");
}

Vector score_theta(const ModelParameters& params, const BasisSystem& basis, const PointPattern& pattern,
                   bool reduced, ScoreMethod method) {
  const CompleteDataEvaluator ev(params, basis);
  return score_theta(ev, pattern_stats(basis, pattern), reduced, method);
}

Matrix fisher_info(const ModelParameters& params, const BasisSystem& basis, const std::vector<PatternStats>& data,
                   bool reduced, ScoreMethod method, int threads) {
  if (data.empty()) throw std::invalid_argument("fisher_info: no replicates");
  const CompleteDataEvaluator ev(params, basis);
  std::vector<Vector> scores(data.size());
  detail::parallel_for(data.size(), threads, [&](std::size_t i) { scores[i] = score_theta(ev, data[i], reduced, method); });
  const Eigen::Index r = scores.front().size();
  Matrix F = Matrix::Zero(r, r);
  for (const auto& s : scores) F.selfadjointView<Eigen::Lower>().rankUpdate(s);
  F = F.selfadjointView<Eigen::Lower>();
  return F / static_cast<double>(data.size());
}

Matrix constraint_jacobian(const ModelParameters& params, const BasisSystem& basis) {
  const ThetaLayout L(params);
  const int p1 = L.p1(), p2 = L.p2(), q1 = L.q1(), q2 = L.q2();
  const Matrix& Jt = basis.temporal().gram();
  const Matrix& Js = basis.spatial().gram();
  const Matrix& AP = basis.temporal().periodicity();
  const int rows = p1 * (p1 + 1) / 2 + p2 * (p2 + 1) / 2 + (p1 + 1) + (p2 + 1) +
                   static_cast<int>(AP.rows()) * (p1 + 1);
  Matrix A = Matrix::Zero(rows, L.full_dim());
  int r = 0;
  for (int l = 0; l < p1; ++l)
    for (int k = 0; k <= l; ++k, ++r) {
      const Vector gk = Jt * params.C.col(l), gl = Jt * params.C.col(k);
      for (int j = 0; j < q1; ++j) {
        A(r, L.c0C(j, k + 1)) += gk[j];
        A(r, L.c0C(j, l + 1)) += gl[j];
      }
    }
  for (int l = 0; l < p2; ++l)
    for (int k = 0; k <= l; ++k, ++r) {
      const Vector gk = Js * params.D.col(l), gl = Js * params.D.col(k);
      for (int j = 0; j < q2; ++j) {
        A(r, L.d0D(j, k + 1)) += gk[j];
        A(r, L.d0D(j, l + 1)) += gl[j];
      }
    }
  for (int k = 0; k <= p1; ++k, ++r)
    for (int j = 0; j < q1; ++j) A(r, L.c0C(j, k)) = basis.temporal().integral()[j];
  for (int k = 0; k <= p2; ++k, ++r)
    for (int j = 0; j < q2; ++j) A(r, L.d0D(j, k)) = basis.spatial().integral()[j];
  for (int k = 0; k <= p1; ++k)
    for (Eigen::Index a = 0; a < AP.rows(); ++a, ++r)
      for (int j = 0; j < q1; ++j) A(r, L.c0C(j, k)) = AP(a, j);
  return A;
}

Matrix orthogonal_complement(const Matrix& A, int dim) {
  if (A.rows() == 0) return Matrix::Identity(dim, dim);
  if (A.cols() != dim) throw std::invalid_argument("orthogonal_complement: width mismatch");
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double cut = 1e-10 * (sv.size() ? sv[0] : 0.0);
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > cut) ++rank;
  return svd.matrixV().rightCols(dim - rank).transpose();
}

Matrix sandwich_covariance_with(const Matrix& F0, const Matrix& B) {
  const Matrix M = B * F0 * B.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()));
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  if (!(es.eigenvalues().minCoeff() > 1e-12 * top))
    throw std::runtime_error(
        "sandwich covariance: B F0 B^T is singular (too few replicates for the full parameter); "
        "use the reduced asymptotics instead");
  const Matrix Minv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  const Matrix V = B.transpose() * Minv * B;
  return 0.5 * (V + V.transpose());
}

Matrix sandwich_covariance(const Matrix& F0, const Matrix& A) {
  if (F0.rows() != F0.cols()) throw std::invalid_argument("sandwich covariance: F0 must be square");
  return sandwich_covariance_with(F0, orthogonal_complement(A, static_cast<int>(F0.rows())));
}

Matrix penalty_jacobian(const ModelParameters& params, const BasisSystem& basis) {
  const ThetaLayout L(params);
  const Matrix& Wt = basis.temporal().penalty();
  const Matrix& Ws = basis.spatial().penalty();
  Matrix DP = Matrix::Zero(4, L.full_dim());
  const Vector g0 = 2.0 * Wt * params.c0;
  for (int j = 0; j < L.q1(); ++j) DP(0, L.c0C(j, 0)) = g0[j];
  for (int k = 0; k < L.p1(); ++k) {
    const Vector g = 2.0 * Wt * params.C.col(k);
    for (int j = 0; j < L.q1(); ++j) DP(1, L.c0C(j, k + 1)) = g[j];
  }
  const Vector h0 = 2.0 * Ws * params.d0;
  for (int j = 0; j < L.q2(); ++j) DP(2, L.d0D(j, 0)) = h0[j];
  for (int l = 0; l < L.p2(); ++l) {
    const Vector g = 2.0 * Ws * params.D.col(l);
    for (int j = 0; j < L.q2(); ++j) DP(3, L.d0D(j, l + 1)) = g[j];
  }
  return DP;
}

Vector asymptotic_bias(const Matrix& V, const Matrix& DP, const Xi& kappa) {
  const Vector k = Eigen::Map<const Vector>(kappa.data(), 4);
  return -(V * (DP.transpose() * k));
}

std::vector<Correlation> delta_correlations(const ModelParameters& theta, const Matrix& reduced_cov) {
  const ThetaLayout L(theta);
  if (reduced_cov.rows() < L.reduced_dim() || reduced_cov.cols() < L.reduced_dim())
    throw std::invalid_argument("delta_correlations: covariance does not cover the reduced parameter");
  std::vector<Correlation> out;
  auto add = [&](const std::string& name, double s, double a, double b, int is, int ia, int ib) {
    if (!(a > 1e-12) || !(b > 1e-12)) throw std::invalid_argument("delta_correlations: near-zero variance in " + name);
    const double r = s / std::sqrt(a * b);
    const double g[3] = {1.0 / std::sqrt(a * b), -0.5 * r / a, -0.5 * r / b};
    const int id[3] = {is, ia, ib};
    double var = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) var += g[i] * g[j] * reduced_cov(id[i], id[j]);
    out.push_back({name, r, std::sqrt(std::max(var, 0.0))});
  };
  for (int k = 0; k < L.p1(); ++k)
    for (int l = 0; l < L.p2(); ++l)
      add("corr(U" + std::to_string(k + 1) + ",V" + std::to_string(l + 1) + ")", theta.Sigma_uv(k, l),
          theta.sigma_u2[k], theta.sigma_v2[l], L.sigma_uv(k, l), L.sigma_u2(k), L.sigma_v2(l));
  for (int k = 0; k < L.p1(); ++k)
    add("corr(Z,U" + std::to_string(k + 1) + ")", theta.sigma_zu[k], theta.sigma_z2, theta.sigma_u2[k],
        L.sigma_zu(k), L.sigma_z2(), L.sigma_u2(k));
  for (int l = 0; l < L.p2(); ++l)
    add("corr(Z,V" + std::to_string(l + 1) + ")", theta.sigma_zv[l], theta.sigma_z2, theta.sigma_v2[l],
        L.sigma_zv(l), L.sigma_z2(), L.sigma_v2(l));
  return out;
}

InferenceReport infer(const ModelParameters& theta_hat, const BasisSystem& basis,
                      const std::vector<PatternStats>& data, const InferenceOptions& options) {
  const ThetaLayout L(theta_hat);
  InferenceReport rep;
  rep.n = static_cast<int>(data.size());
  const double n = static_cast<double>(data.size());
  rep.reduced_names = L.names(true);
  rep.theta_tilde = L.pack(theta_hat, true);
  const int rd = L.reduced_dim();
  if (rep.n < rd) {
    std::ostringstream msg;
    msg << "only " << rep.n << " replicates for a " << rd << "-dimensional reduced parameter";
    rep.warnings.push_back(msg.str());
  }

  const Matrix F = fisher_info(theta_hat, basis, data, !options.full, options.method, options.threads);
  const Matrix Fr = F.topLeftCorner(rd, rd);
  Eigen::SelfAdjointEigenSolver<Matrix> es(Fr);
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  if (!(es.eigenvalues().minCoeff() > 1e-12 * top))
    throw std::runtime_error("infer: the reduced information matrix is singular");
  rep.reduced_cov =
      es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose() / n;
  rep.reduced_cov = 0.5 * (rep.reduced_cov + rep.reduced_cov.transpose()).eval();
  rep.reduced_se = rep.reduced_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  rep.correlations = delta_correlations(theta_hat, rep.reduced_cov);

  if (options.full) {
    rep.full_names = L.names(false);
    rep.theta_full = L.pack(theta_hat, false);
    if (rep.n < L.full_dim()) {
      std::ostringstream msg;
      msg << "only " << rep.n << " replicates for a " << L.full_dim()
          << "-dimensional parameter; the full information matrix is likely singular";
      rep.warnings.push_back(msg.str());
    }
    try {
      const Matrix V = sandwich_covariance(F, constraint_jacobian(theta_hat, basis));
      rep.full_cov = V / n;
      rep.full_se = rep.full_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
      // -V DP^T kappa / sqrt(n) with kappa = sqrt(n) xi
      rep.bias = asymptotic_bias(V, penalty_jacobian(theta_hat, basis), options.xi);
      rep.has_full = true;
    } catch (const std::runtime_error& e) {
      rep.warnings.push_back(e.what());
    }
  }
  return rep;
}

}  // namespace stcox
