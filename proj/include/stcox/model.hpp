#ifndef STCOX_MODEL_HPP
#define STCOX_MODEL_HPP

#include "stcox/basis.hpp"

#include <string>
#include <vector>

namespace stcox {

/// theta = (sigma_zu, sigma_zv, vec Sigma_uv, tau, sigma_z^2, c0, vec C, sigma_u^2,
///          d0, vec D, sigma_v^2)
struct ModelParameters {
  double tau = 0.0;
  double sigma_z2 = 1.0;
  Vector c0;        // q1
  Matrix C;         // q1 x p1
  Vector sigma_u2;  // p1, decreasing
  Vector d0;        // q2
  Matrix D;         // q2 x p2
  Vector sigma_v2;  // p2, decreasing
  Vector sigma_zu;  // p1
  Vector sigma_zv;  // p2
  Matrix Sigma_uv;  // p1 x p2

  int p1() const { return static_cast<int>(C.cols()); }
  int p2() const { return static_cast<int>(D.cols()); }
  int latent_dim() const { return 1 + p1() + p2(); }

  /// Zero-valued parameters of the right shapes (sigma blocks set to identity-like values).
  static ModelParameters zeros(int q1, int q2, int p1, int p2);
};

/// w = (z, u^T, v^T)^T
struct LatentEffects {
  double z = 0.0;
  Vector u;
  Vector v;

  Vector stacked() const;
  static LatentEffects unstack(const Vector& w, int p1, int p2);
};

struct Event {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
};

struct PointPattern {
  std::string id;
  std::vector<Event> events;

  int size() const { return static_cast<int>(events.size()); }
};

/// Everything the likelihood needs from one replicate: the count and the
/// basis vectors summed over its events.
struct PatternStats {
  int m = 0;
  Vector bt_sum;  // sum_j beta_t(t_j)
  Vector bs_sum;  // sum_j beta_s(s_j)
  double log_m_factorial = 0.0;
};

/// Throws std::out_of_range naming the first event outside the domain.
void validate_pattern(const BasisSystem& basis, const PointPattern& pattern);
PatternStats pattern_stats(const BasisSystem& basis, const PointPattern& pattern);
std::vector<PatternStats> pattern_stats(const BasisSystem& basis, const std::vector<PointPattern>& patterns);

Matrix assemble_sigma(const ModelParameters& params);

/// Names of the violated constraints of Theta; empty iff params is in Theta.
std::vector<std::string> check_theta(const ModelParameters& params, const BasisSystem& basis, double tol = 1e-8);

/// Map coefficients and an unrestricted latent covariance into Theta without
/// changing the law of (log R, log Lambda_t, log Lambda_s): linear constraints
/// by J-orthogonal projection, then J-orthonormal loadings with diagonal,
/// decreasing score variances and the first-coefficient sign rule.
ModelParameters restore_kl_form(const BasisSystem& basis, double tau, const Vector& c0, const Matrix& C,
                                const Vector& d0, const Matrix& D, const Matrix& sigma_full);
ModelParameters project_theta(const ModelParameters& params, const BasisSystem& basis);

double log_intensity_t(const ModelParameters& params, const BasisSystem& basis, const Vector& u, double t);
double log_intensity_s(const ModelParameters& params, const BasisSystem& basis, const Vector& v, double x,
                       double y);

struct IntensityIntegrals {
  double I_t = 0.0;
  double I_s = 0.0;
  double rho = 0.0;
  double log_I_t = 0.0;
  double log_I_s = 0.0;
  double log_rho = 0.0;
};

IntensityIntegrals intensity_integrals(const ModelParameters& params, const BasisSystem& basis,
                                       const LatentEffects& w);

/// Normalized moments of the component functions under one intensity factor.
struct AxisMoments {
  double log_I = 0.0;  // log of the integral
  Vector mean;         // E[phi]
  Matrix second;       // E[phi phi^T]
};

/// Mean and component functions tabulated on the quadrature nodes.
class ProcessTables {
 public:
  ProcessTables(const ModelParameters& params, const BasisSystem& basis);

  AxisMoments temporal(const Vector& u, bool second = true) const;
  AxisMoments spatial(const Vector& v, bool second = true) const;
  double log_temporal_integral(const Vector& u) const;
  double log_spatial_integral(const Vector& v) const;

  const Vector& mu_nodes() const { return mu_; }
  const Matrix& phi_nodes() const { return phi_; }
  const Vector& nu_nodes() const { return nu_; }
  const Matrix& psi_nodes() const { return psi_; }
  const Vector& t_weights() const { return wt_; }
  const Vector& s_weights() const { return ws_; }

 private:
  Vector mu_, nu_, wt_, ws_;
  Matrix phi_, psi_;
};

struct GradHess {
  double value = 0.0;
  Vector grad;
  Matrix hess;
};

/// Perturbation of (tau, c0, C, d0, D) and of w used for directional derivatives.
/// Empty members mean zero. Build with make_direction so the node tables are filled.
struct Direction {
  double dtau = 0.0;
  Vector dw;    // 1+p1+p2
  Matrix dc0C;  // q1 x (1+p1), column 0 perturbs c0
  Matrix dd0D;  // q2 x (1+p2)
  // dc0C and dd0D pushed to the quadrature nodes
  Matrix t_nodes;  // n_t x (1+p1)
  Matrix s_nodes;  // n_s x (1+p2)
};

/// Per-replicate quantities at a fixed w, reused across directional derivatives.
struct LatentState {
  Vector w;
  Vector t_mass;  // normalized lambda_t * weight at the temporal nodes
  Vector s_mass;
  AxisMoments t;
  AxisMoments s;
  double log_rho = 0.0;
};

/// log f(x|w) + log f(w) and its w-derivatives for fixed parameters.
class CompleteDataEvaluator {
 public:
  CompleteDataEvaluator(const ModelParameters& params, const BasisSystem& basis);

  const ModelParameters& params() const { return params_; }
  const BasisSystem& basis() const { return *basis_; }
  const ProcessTables& tables() const { return tables_; }
  const Matrix& sigma() const { return sigma_; }
  const Matrix& sigma_inverse() const { return sigma_inv_; }
  double sigma_log_det() const { return log_det_; }

  double value(const PatternStats& x, const Vector& w) const;
  GradHess grad_hess(const PatternStats& x, const Vector& w) const;

  double data_value(const PatternStats& x, const Vector& w) const;
  GradHess data_grad_hess(const PatternStats& x, const Vector& w) const;
  LatentState state(const Vector& w) const;
  Direction make_direction(double dtau, const Vector& dw, const Matrix& dc0C, const Matrix& dd0D) const;
  /// Directional derivative of (data value, data gradient, data Hessian).
  GradHess data_tangent(const PatternStats& x, const LatentState& st, const Direction& dir) const;

  double log_prior(const Vector& w) const;

 private:
  ModelParameters params_;
  const BasisSystem* basis_;
  ProcessTables tables_;
  Matrix sigma_;
  Matrix sigma_inv_;
  double log_det_ = 0.0;
};

double complete_data_loglik(const ModelParameters& params, const BasisSystem& basis, const PointPattern& pattern,
                            const LatentEffects& w);
GradHess grad_hess_w(const ModelParameters& params, const BasisSystem& basis, const PointPattern& pattern,
                     const LatentEffects& w);

/// J-orthogonal projection of coefficient columns onto {c : A c = 0}.
Matrix project_onto_constraints(const Matrix& coefs, const Matrix& constraint_rows, const Matrix& gram);

}  // namespace stcox

#endif  // STCOX_MODEL_HPP
