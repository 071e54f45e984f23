#include "stcox/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace stcox {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_shapes(const ModelParameters& p, const BasisSystem& basis) {
  const int p1 = p.p1();
  const int p2 = p.p2();
  if (p.c0.size() != basis.q1() || p.C.rows() != basis.q1())
    throw std::invalid_argument("model: temporal coefficients do not match the basis size");
  if (p.d0.size() != basis.q2() || p.D.rows() != basis.q2())
    throw std::invalid_argument("model: spatial coefficients do not match the basis size");
  if (p.sigma_u2.size() != p1 || p.sigma_zu.size() != p1 || p.Sigma_uv.rows() != p1)
    throw std::invalid_argument("model: temporal covariance blocks have the wrong size");
  if (p.sigma_v2.size() != p2 || p.sigma_zv.size() != p2 || p.Sigma_uv.cols() != p2)
    throw std::invalid_argument("model: spatial covariance blocks have the wrong size");
}

// Normalized masses and moments of one factor: eta = base + comp * coef on the nodes.
AxisMoments axis_moments(const Vector& base, const Matrix& comp, const Vector& weights, const Vector& coef,
                         bool second, Vector* mass_out) {
  Vector eta = base;
  if (comp.cols() > 0) eta.noalias() += comp * coef;
  const double shift = eta.maxCoeff();
  Vector mass = weights.array() * (eta.array() - shift).exp();
  const double total = mass.sum();
  mass /= total;
  AxisMoments out;
  out.log_I = shift + std::log(total);
  out.mean = comp.transpose() * mass;
  if (second) out.second = comp.transpose() * mass.asDiagonal() * comp;
  if (mass_out) *mass_out = std::move(mass);
  return out;
}

int first_significant(const Eigen::Ref<const Vector>& col) {
  const double thresh = 1e-8 * col.norm();
  for (Eigen::Index i = 0; i < col.size(); ++i)
    if (std::abs(col[i]) > thresh) return static_cast<int>(i);
  return -1;
}

struct KlFactor {
  Matrix loadings;   // J-orthonormal columns
  Matrix transform;  // new scores = transform * old scores
};

// Loadings B with score covariance S_bb: returns B' = B G^{-1/2} Q and
// T = Q^T G^{1/2} so that B u = B' (T u), with T S_bb T^T diagonal and decreasing.
KlFactor kl_factor(const Matrix& B, const Matrix& gram, const Matrix& score_cov, const char* label) {
  const Eigen::Index p = B.cols();
  KlFactor out;
  if (p == 0) {
    out.loadings = B;
    out.transform = Matrix(0, 0);
    return out;
  }
  const Matrix G = B.transpose() * gram * B;
  Eigen::SelfAdjointEigenSolver<Matrix> ge(0.5 * (G + G.transpose()));
  const Vector gev = ge.eigenvalues();
  if (!(gev.minCoeff() > 1e-12 * std::max(1.0, gev.maxCoeff())))
    throw std::domain_error(std::string("project_theta: ") + label + " is rank-deficient in the J-metric");
  const Matrix G_half = ge.eigenvectors() * gev.cwiseSqrt().asDiagonal() * ge.eigenvectors().transpose();
  const Matrix G_inv_half =
      ge.eigenvectors() * gev.cwiseSqrt().cwiseInverse().asDiagonal() * ge.eigenvectors().transpose();
  const Matrix K = G_half * score_cov * G_half;
  Eigen::SelfAdjointEigenSolver<Matrix> ke(0.5 * (K + K.transpose()));
  const Vector lam = ke.eigenvalues();
  Matrix Q = ke.eigenvectors();
  Matrix loadings = B * G_inv_half * Q;

  std::vector<int> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  auto lead = [&](int k) {
    const int i = first_significant(loadings.col(k));
    return i < 0 ? 0.0 : std::abs(loadings(i, k));
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (std::abs(lam[a] - lam[b]) >= 1e-10) return lam[a] > lam[b];
    return lead(a) > lead(b);
  });
  Matrix Qs(p, p);
  Matrix Ls(B.rows(), p);
  for (Eigen::Index k = 0; k < p; ++k) {
    Qs.col(k) = Q.col(order[static_cast<std::size_t>(k)]);
    Ls.col(k) = loadings.col(order[static_cast<std::size_t>(k)]);
  }
  for (Eigen::Index k = 0; k < p; ++k) {
    const int i = first_significant(Ls.col(k));
    if (i >= 0 && Ls(i, k) < 0.0) {
      Ls.col(k) *= -1.0;
      Qs.col(k) *= -1.0;
    }
  }
  out.loadings = Ls;
  out.transform = Qs.transpose() * G_half;
  return out;
}

}  // namespace

ModelParameters ModelParameters::zeros(int q1, int q2, int p1, int p2) {
  ModelParameters p;
  p.tau = 0.0;
  p.sigma_z2 = 1.0;
  p.c0 = Vector::Zero(q1);
  p.C = Matrix::Zero(q1, p1);
  p.sigma_u2 = Vector::Ones(p1);
  p.d0 = Vector::Zero(q2);
  p.D = Matrix::Zero(q2, p2);
  p.sigma_v2 = Vector::Ones(p2);
  p.sigma_zu = Vector::Zero(p1);
  p.sigma_zv = Vector::Zero(p2);
  p.Sigma_uv = Matrix::Zero(p1, p2);
  return p;
}

Vector LatentEffects::stacked() const {
  Vector w(1 + u.size() + v.size());
  w[0] = z;
  w.segment(1, u.size()) = u;
  w.tail(v.size()) = v;
  return w;
}

LatentEffects LatentEffects::unstack(const Vector& w, int p1, int p2) {
  if (w.size() != 1 + p1 + p2) throw std::invalid_argument("latent vector has the wrong length");
  LatentEffects out;
  out.z = w[0];
  out.u = w.segment(1, p1);
  out.v = w.tail(p2);
  return out;
}

void validate_pattern(const BasisSystem& basis, const PointPattern& pattern) {
  const auto& td = basis.spec().temporal_domain;
  const auto& sd = basis.spec().spatial_domain;
  for (std::size_t j = 0; j < pattern.events.size(); ++j) {
    const Event& e = pattern.events[j];
    if (!std::isfinite(e.t) || !td.contains(e.t)) {
      std::ostringstream msg;
      msg << "replicate '" << pattern.id << "' event " << j << ": time " << e.t << " outside ["
          << td.t_lower << ", " << td.t_upper << "]";
      throw std::out_of_range(msg.str());
    }
    if (!std::isfinite(e.x) || !std::isfinite(e.y) || !sd.contains(e.x, e.y)) {
      std::ostringstream msg;
      msg << "replicate '" << pattern.id << "' event " << j << ": location (" << e.x << ", " << e.y
          << ") outside the spatial domain";
      throw std::out_of_range(msg.str());
    }
  }
}

PatternStats pattern_stats(const BasisSystem& basis, const PointPattern& pattern) {
  validate_pattern(basis, pattern);
  PatternStats s;
  s.m = pattern.size();
  s.bt_sum = Vector::Zero(basis.q1());
  s.bs_sum = Vector::Zero(basis.q2());
  for (const Event& e : pattern.events) {
    s.bt_sum += basis.temporal().evaluate(e.t);
    s.bs_sum += basis.spatial().evaluate(e.x, e.y);
  }
  s.log_m_factorial = std::lgamma(static_cast<double>(s.m) + 1.0);
  return s;
}

std::vector<PatternStats> pattern_stats(const BasisSystem& basis, const std::vector<PointPattern>& patterns) {
  std::vector<PatternStats> out;
  out.reserve(patterns.size());
  for (const auto& p : patterns) out.push_back(pattern_stats(basis, p));
  return out;
}

Matrix assemble_sigma(const ModelParameters& params) {
  const int p1 = params.p1();
  const int p2 = params.p2();
  const int d = 1 + p1 + p2;
  Matrix S = Matrix::Zero(d, d);
  S(0, 0) = params.sigma_z2;
  for (int k = 0; k < p1; ++k) {
    S(0, 1 + k) = S(1 + k, 0) = params.sigma_zu[k];
    S(1 + k, 1 + k) = params.sigma_u2[k];
  }
  for (int l = 0; l < p2; ++l) {
    S(0, 1 + p1 + l) = S(1 + p1 + l, 0) = params.sigma_zv[l];
    S(1 + p1 + l, 1 + p1 + l) = params.sigma_v2[l];
  }
  for (int k = 0; k < p1; ++k)
    for (int l = 0; l < p2; ++l) S(1 + k, 1 + p1 + l) = S(1 + p1 + l, 1 + k) = params.Sigma_uv(k, l);
  return S;
}

std::vector<std::string> check_theta(const ModelParameters& params, const BasisSystem& basis, double tol) {
  check_shapes(params, basis);
  std::vector<std::string> bad;
  const int p1 = params.p1();
  const int p2 = params.p2();
  const auto& tb = basis.temporal();
  const auto& sb = basis.spatial();

  const Matrix hC = params.C.transpose() * tb.gram() * params.C - Matrix::Identity(p1, p1);
  for (int k = 0; k < p1; ++k)
    for (int l = k; l < p1; ++l)
      if (std::abs(hC(k, l)) > tol) bad.push_back("h_C(" + std::to_string(k + 1) + "," + std::to_string(l + 1) + ")");
  const Matrix hD = params.D.transpose() * sb.gram() * params.D - Matrix::Identity(p2, p2);
  for (int k = 0; k < p2; ++k)
    for (int l = k; l < p2; ++l)
      if (std::abs(hD(k, l)) > tol) bad.push_back("h_D(" + std::to_string(k + 1) + "," + std::to_string(l + 1) + ")");

  for (int k = 0; k <= p1; ++k) {
    const Vector c = k == 0 ? params.c0 : Vector(params.C.col(k - 1));
    if (std::abs(tb.integral().dot(c)) > tol) bad.push_back("zero integral c" + std::to_string(k));
    if (basis.periodic() && (tb.periodicity() * c).cwiseAbs().maxCoeff() > tol)
      bad.push_back("periodicity c" + std::to_string(k));
  }
  for (int k = 0; k <= p2; ++k) {
    const Vector d = k == 0 ? params.d0 : Vector(params.D.col(k - 1));
    if (std::abs(sb.integral().dot(d)) > tol) bad.push_back("zero integral d" + std::to_string(k));
  }

  const Matrix S = assemble_sigma(params);
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  if (!S.allFinite() || !(es.eigenvalues().minCoeff() > 0.0)) bad.push_back("Sigma positive definite");

  auto ordered = [](const Vector& v) {
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (!(v[k] > 0.0)) return false;
      if (k > 0 && !(v[k - 1] > v[k])) return false;
    }
    return true;
  };
  if (!ordered(params.sigma_u2)) bad.push_back("variance ordering u");
  if (!ordered(params.sigma_v2)) bad.push_back("variance ordering v");

  for (int k = 0; k < p1; ++k) {
    const int i = first_significant(params.C.col(k));
    if (i < 0 || params.C(i, k) < 0.0) bad.push_back("sign rule C" + std::to_string(k + 1));
  }
  for (int k = 0; k < p2; ++k) {
    const int i = first_significant(params.D.col(k));
    if (i < 0 || params.D(i, k) < 0.0) bad.push_back("sign rule D" + std::to_string(k + 1));
  }
  return bad;
}

Matrix project_onto_constraints(const Matrix& coefs, const Matrix& constraint_rows, const Matrix& gram) {
  if (constraint_rows.rows() == 0) return coefs;
  const Eigen::LDLT<Matrix> J(gram);
  const Matrix JiAt = J.solve(constraint_rows.transpose());
  const Eigen::CompleteOrthogonalDecomposition<Matrix> M(constraint_rows * JiAt);
  return coefs - JiAt * M.solve(constraint_rows * coefs);
}

ModelParameters restore_kl_form(const BasisSystem& basis, double tau, const Vector& c0, const Matrix& C,
                                const Vector& d0, const Matrix& D, const Matrix& sigma_full) {
  const int p1 = static_cast<int>(C.cols());
  const int p2 = static_cast<int>(D.cols());
  if (sigma_full.rows() != 1 + p1 + p2 || sigma_full.cols() != 1 + p1 + p2)
    throw std::invalid_argument("project_theta: covariance has the wrong size");
  const auto& Jt = basis.temporal().gram();
  const auto& Js = basis.spatial().gram();

  const Matrix At = basis.temporal().constraint_rows();
  const Matrix As = basis.spatial().constraint_rows();
  const Vector c0p = project_onto_constraints(c0, At, Jt);
  const Vector d0p = project_onto_constraints(d0, As, Js);
  const Matrix Cp = project_onto_constraints(C, At, Jt);
  const Matrix Dp = project_onto_constraints(D, As, Js);

  const Matrix sym = 0.5 * (sigma_full + sigma_full.transpose());
  const KlFactor ft = kl_factor(Cp, Jt, sym.block(1, 1, p1, p1), "C");
  const KlFactor fs = kl_factor(Dp, Js, sym.block(1 + p1, 1 + p1, p2, p2), "D");

  Matrix T = Matrix::Zero(1 + p1 + p2, 1 + p1 + p2);
  T(0, 0) = 1.0;
  if (p1 > 0) T.block(1, 1, p1, p1) = ft.transform;
  if (p2 > 0) T.block(1 + p1, 1 + p1, p2, p2) = fs.transform;
  const Matrix S = T * sym * T.transpose();

  ModelParameters out;
  out.tau = tau;
  out.c0 = c0p;
  out.C = ft.loadings;
  out.d0 = d0p;
  out.D = fs.loadings;
  out.sigma_z2 = S(0, 0);
  out.sigma_zu = S.block(1, 0, p1, 1);
  out.sigma_zv = S.block(1 + p1, 0, p2, 1);
  out.sigma_u2 = S.diagonal().segment(1, p1);
  out.sigma_v2 = S.diagonal().tail(p2);
  out.Sigma_uv = S.block(1, 1 + p1, p1, p2);
  return out;
}

ModelParameters project_theta(const ModelParameters& params, const BasisSystem& basis) {
  check_shapes(params, basis);
  return restore_kl_form(basis, params.tau, params.c0, params.C, params.d0, params.D, assemble_sigma(params));
}

double log_intensity_t(const ModelParameters& params, const BasisSystem& basis, const Vector& u, double t) {
  const Vector b = basis.temporal().evaluate(t);
  return b.dot(params.c0 + params.C * u);
}

double log_intensity_s(const ModelParameters& params, const BasisSystem& basis, const Vector& v, double x,
                       double y) {
  if (!basis.spec().spatial_domain.contains(x, y)) throw std::out_of_range("log_intensity_s: location outside domain");
  const Vector b = basis.spatial().evaluate(x, y);
  return b.dot(params.d0 + params.D * v);
}

ProcessTables::ProcessTables(const ModelParameters& params, const BasisSystem& basis) {
  check_shapes(params, basis);
  const auto& tb = basis.temporal();
  const auto& sb = basis.spatial();
  mu_ = tb.quad_basis() * params.c0;
  phi_ = tb.quad_basis() * params.C;
  wt_ = tb.quad_weights();
  nu_ = sb.quad_basis() * params.d0;
  psi_ = sb.quad_basis() * params.D;
  ws_ = sb.quad_weights();
}

AxisMoments ProcessTables::temporal(const Vector& u, bool second) const {
  return axis_moments(mu_, phi_, wt_, u, second, nullptr);
}

AxisMoments ProcessTables::spatial(const Vector& v, bool second) const {
  return axis_moments(nu_, psi_, ws_, v, second, nullptr);
}

double ProcessTables::log_temporal_integral(const Vector& u) const {
  Vector eta = mu_;
  if (phi_.cols() > 0) eta.noalias() += phi_ * u;
  const double shift = eta.maxCoeff();
  return shift + std::log((wt_.array() * (eta.array() - shift).exp()).sum());
}

double ProcessTables::log_spatial_integral(const Vector& v) const {
  Vector eta = nu_;
  if (psi_.cols() > 0) eta.noalias() += psi_ * v;
  const double shift = eta.maxCoeff();
  return shift + std::log((ws_.array() * (eta.array() - shift).exp()).sum());
}

IntensityIntegrals intensity_integrals(const ModelParameters& params, const BasisSystem& basis,
                                       const LatentEffects& w) {
  const ProcessTables tables(params, basis);
  IntensityIntegrals out;
  out.log_I_t = tables.log_temporal_integral(w.u);
  out.log_I_s = tables.log_spatial_integral(w.v);
  out.log_rho = params.tau + w.z + out.log_I_t + out.log_I_s;
  out.I_t = std::exp(out.log_I_t);
  out.I_s = std::exp(out.log_I_s);
  out.rho = std::exp(out.log_rho);
  return out;
}

CompleteDataEvaluator::CompleteDataEvaluator(const ModelParameters& params, const BasisSystem& basis)
    : params_(params), basis_(&basis), tables_(params, basis) {
  sigma_ = assemble_sigma(params);
  Eigen::LLT<Matrix> llt(sigma_);
  if (llt.info() != Eigen::Success || !sigma_.allFinite())
    throw std::domain_error("Sigma is not positive definite");
  const Matrix L = llt.matrixL();
  log_det_ = 2.0 * L.diagonal().array().log().sum();
  if (!std::isfinite(log_det_)) throw std::domain_error("Sigma is not positive definite");
  sigma_inv_ = llt.solve(Matrix::Identity(sigma_.rows(), sigma_.cols()));
  sigma_inv_ = 0.5 * (sigma_inv_ + sigma_inv_.transpose());
}

double CompleteDataEvaluator::log_prior(const Vector& w) const {
  return -0.5 * (w.dot(sigma_inv_ * w) + log_det_ + static_cast<double>(w.size()) * kLog2Pi);
}

double CompleteDataEvaluator::data_value(const PatternStats& x, const Vector& w) const {
  const int p1 = params_.p1();
  const int p2 = params_.p2();
  const double z = w[0];
  const Vector u = w.segment(1, p1);
  const Vector v = w.tail(p2);
  const double log_rho =
      params_.tau + z + tables_.log_temporal_integral(u) + tables_.log_spatial_integral(v);
  return x.m * (params_.tau + z) + x.bt_sum.dot(params_.c0 + params_.C * u) +
         x.bs_sum.dot(params_.d0 + params_.D * v) - std::exp(log_rho) - x.log_m_factorial;
}

double CompleteDataEvaluator::value(const PatternStats& x, const Vector& w) const {
  return data_value(x, w) + log_prior(w);
}

LatentState CompleteDataEvaluator::state(const Vector& w) const {
  const int p1 = params_.p1();
  const int p2 = params_.p2();
  LatentState st;
  st.w = w;
  st.t = axis_moments(tables_.mu_nodes(), tables_.phi_nodes(), tables_.t_weights(), w.segment(1, p1), true,
                      &st.t_mass);
  st.s = axis_moments(tables_.nu_nodes(), tables_.psi_nodes(), tables_.s_weights(), w.tail(p2), true, &st.s_mass);
  st.log_rho = params_.tau + w[0] + st.t.log_I + st.s.log_I;
  return st;
}

GradHess CompleteDataEvaluator::data_grad_hess(const PatternStats& x, const Vector& w) const {
  const int p1 = params_.p1();
  const int p2 = params_.p2();
  const int d = 1 + p1 + p2;
  const LatentState st = state(w);
  const double R = std::exp(st.log_rho);
  const Vector u = w.segment(1, p1);
  const Vector v = w.tail(p2);

  GradHess out;
  out.value = x.m * (params_.tau + w[0]) + x.bt_sum.dot(params_.c0 + params_.C * u) +
              x.bs_sum.dot(params_.d0 + params_.D * v) - R - x.log_m_factorial;
  out.grad.resize(d);
  out.grad[0] = x.m - R;
  out.grad.segment(1, p1) = params_.C.transpose() * x.bt_sum - R * st.t.mean;
  out.grad.tail(p2) = params_.D.transpose() * x.bs_sum - R * st.s.mean;

  Matrix& H = out.hess;
  H.resize(d, d);
  H(0, 0) = -R;
  H.block(1, 0, p1, 1) = -R * st.t.mean;
  H.block(1 + p1, 0, p2, 1) = -R * st.s.mean;
  H.block(1, 1, p1, p1) = -R * st.t.second;
  H.block(1 + p1, 1 + p1, p2, p2) = -R * st.s.second;
  H.block(1 + p1, 1, p2, p1) = -R * st.s.mean * st.t.mean.transpose();
  H = H.selfadjointView<Eigen::Lower>();
  return out;
}

GradHess CompleteDataEvaluator::grad_hess(const PatternStats& x, const Vector& w) const {
  GradHess out = data_grad_hess(x, w);
  out.value += log_prior(w);
  out.grad.noalias() -= sigma_inv_ * w;
  out.hess -= sigma_inv_;
  return out;
}

Direction CompleteDataEvaluator::make_direction(double dtau, const Vector& dw, const Matrix& dc0C,
                                                const Matrix& dd0D) const {
  Direction dir;
  dir.dtau = dtau;
  dir.dw = dw;
  dir.dc0C = dc0C;
  dir.dd0D = dd0D;
  if (dc0C.size() > 0) dir.t_nodes = basis_->temporal().quad_basis() * dc0C;
  if (dd0D.size() > 0) dir.s_nodes = basis_->spatial().quad_basis() * dd0D;
  return dir;
}

namespace {

struct AxisTangent {
  double d0 = 0.0;  // d log I
  Vector d1;        // d E-unnormalized mean / I
  Matrix d2;
};

// Tangent of the unnormalized moments divided by I, for eta = base + comp*coef
// perturbed by (d base, d comp) at the nodes and d coef.
AxisTangent axis_tangent(const Vector& mass, const Matrix& comp, const Vector& coef, const Matrix* dnodes,
                         const Vector& dcoef) {
  const Eigen::Index p = comp.cols();
  const Eigen::Index n = comp.rows();
  Vector deta = Vector::Zero(n);
  Matrix dcomp;
  if (dnodes) {
    deta = dnodes->col(0);
    dcomp = dnodes->rightCols(p);
    if (p > 0) deta.noalias() += dcomp * coef;
  }
  if (dcoef.size() > 0 && p > 0) deta.noalias() += comp * dcoef;

  AxisTangent t;
  const Vector md = mass.cwiseProduct(deta);
  t.d0 = md.sum();
  t.d1 = comp.transpose() * md;
  t.d2 = comp.transpose() * md.asDiagonal() * comp;
  if (dnodes && p > 0) {
    t.d1.noalias() += dcomp.transpose() * mass;
    const Matrix cross = dcomp.transpose() * mass.asDiagonal() * comp;
    t.d2 += cross + cross.transpose();
  }
  return t;
}

}  // namespace

GradHess CompleteDataEvaluator::data_tangent(const PatternStats& x, const LatentState& st,
                                             const Direction& dir) const {
  const int p1 = params_.p1();
  const int p2 = params_.p2();
  const int d = 1 + p1 + p2;
  const Vector& w = st.w;
  const Vector u = w.segment(1, p1);
  const Vector v = w.tail(p2);
  const double R = std::exp(st.log_rho);

  const double dz = dir.dw.size() > 0 ? dir.dw[0] : 0.0;
  const Vector du = dir.dw.size() > 0 ? Vector(dir.dw.segment(1, p1)) : Vector();
  const Vector dv = dir.dw.size() > 0 ? Vector(dir.dw.tail(p2)) : Vector();

  const AxisTangent tt =
      axis_tangent(st.t_mass, tables_.phi_nodes(), u, dir.t_nodes.size() > 0 ? &dir.t_nodes : nullptr, du);
  const AxisTangent ts =
      axis_tangent(st.s_mass, tables_.psi_nodes(), v, dir.s_nodes.size() > 0 ? &dir.s_nodes : nullptr, dv);
  const double dF = dir.dtau + dz;  // d log(exp(tau+z))
  const double dlogR = dF + tt.d0 + ts.d0;

  GradHess out;
  double dval = x.m * dF - R * dlogR;
  Vector dgu = Vector::Zero(p1);
  Vector dgv = Vector::Zero(p2);
  if (dir.dc0C.size() > 0) {
    const Vector bc = dir.dc0C.transpose() * x.bt_sum;  // (dc0, dC)^T bt
    dval += bc[0] + bc.tail(p1).dot(u);
    dgu += bc.tail(p1);
  }
  if (dir.dd0D.size() > 0) {
    const Vector bd = dir.dd0D.transpose() * x.bs_sum;
    dval += bd[0] + bd.tail(p2).dot(v);
    dgv += bd.tail(p2);
  }
  if (du.size() > 0) dval += x.bt_sum.dot(params_.C * du);
  if (dv.size() > 0) dval += x.bs_sum.dot(params_.D * dv);
  out.value = dval;

  // d(R * mean_t) = R[(dF + dlogI_s) mean_t + d1_t]
  const Vector d_rmt = R * ((dF + ts.d0) * st.t.mean + tt.d1);
  const Vector d_rms = R * ((dF + tt.d0) * st.s.mean + ts.d1);

  out.grad.resize(d);
  out.grad[0] = -R * dlogR;
  out.grad.segment(1, p1) = dgu - d_rmt;
  out.grad.tail(p2) = dgv - d_rms;

  Matrix& H = out.hess;
  H.resize(d, d);
  H(0, 0) = -R * dlogR;
  H.block(1, 0, p1, 1) = -d_rmt;
  H.block(1 + p1, 0, p2, 1) = -d_rms;
  H.block(1, 1, p1, p1) = -R * ((dF + ts.d0) * st.t.second + tt.d2);
  H.block(1 + p1, 1 + p1, p2, p2) = -R * ((dF + tt.d0) * st.s.second + ts.d2);
  H.block(1 + p1, 1, p2, p1) =
      -R * (dF * st.s.mean * st.t.mean.transpose() + ts.d1 * st.t.mean.transpose() + st.s.mean * tt.d1.transpose());
  H = H.selfadjointView<Eigen::Lower>();
  return out;
}

double complete_data_loglik(const ModelParameters& params, const BasisSystem& basis, const PointPattern& pattern,
                            const LatentEffects& w) {
  const CompleteDataEvaluator ev(params, basis);
  return ev.value(pattern_stats(basis, pattern), w.stacked());
}

GradHess grad_hess_w(const ModelParameters& params, const BasisSystem& basis, const PointPattern& pattern,
                     const LatentEffects& w) {
  const CompleteDataEvaluator ev(params, basis);
  return ev.grad_hess(pattern_stats(basis, pattern), w.stacked());
}

}  // namespace stcox
