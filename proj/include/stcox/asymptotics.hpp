#ifndef STCOX_ASYMPTOTICS_HPP
#define STCOX_ASYMPTOTICS_HPP

#include "stcox/estimate.hpp"

#include <string>
#include <vector>

namespace stcox {

/// Coordinates of theta as a flat vector. The reduced block comes first:
/// (sigma_zu, sigma_zv, vec Sigma_uv, tau, sigma_z2, sigma_u2, sigma_v2),
/// followed by c0, C (column-major), d0, D.
class ThetaLayout {
 public:
  ThetaLayout(int q1, int q2, int p1, int p2);
  explicit ThetaLayout(const ModelParameters& params);

  int q1() const { return q1_; }
  int q2() const { return q2_; }
  int p1() const { return p1_; }
  int p2() const { return p2_; }
  int reduced_dim() const { return c0C_; }
  int full_dim() const { return d0D_ + q2_ * (1 + p2_); }
  int dim(bool reduced) const { return reduced ? reduced_dim() : full_dim(); }

  int sigma_zu(int k) const { return k; }
  int sigma_zv(int l) const { return p1_ + l; }
  int sigma_uv(int k, int l) const { return p1_ + p2_ + l * p1_ + k; }
  int tau() const { return tau_; }
  int sigma_z2() const { return tau_ + 1; }
  int sigma_u2(int k) const { return tau_ + 2 + k; }
  int sigma_v2(int l) const { return tau_ + 2 + p1_ + l; }
  int c0C(int row, int col) const { return c0C_ + col * q1_ + row; }  // col 0 is c0
  int d0D(int row, int col) const { return d0D_ + col * q2_ + row; }

  std::vector<std::string> names(bool reduced) const;
  Vector pack(const ModelParameters& params, bool reduced) const;
  /// Replaces the coordinates covered by x (reduced or full) in a copy of `like`.
  ModelParameters unpack(const Vector& x, const ModelParameters& like) const;

 private:
  int q1_, q2_, p1_, p2_;
  int tau_, c0C_, d0D_;
};

enum class ScoreMethod {
  laplace,            // exact gradient of the Laplace log-marginal
  fisher_identity,    // E[grad log f(x, w) | x] under the Laplace Gaussian
  finite_difference,  // central differences of the Laplace log-marginal
};
ScoreMethod parse_score_method(const std::string& s);

Vector score_theta(const CompleteDataEvaluator& ev, const PatternStats& x, bool reduced,
                   ScoreMethod method = ScoreMethod::laplace, const LaplaceOptions& opt = {});
Vector score_theta(const ModelParameters& params, const BasisSystem& basis, const PointPattern& pattern,
                   bool reduced = false, ScoreMethod method = ScoreMethod::laplace);

/// F0 = (1/n) sum_i s_i s_i^T.
Matrix fisher_info(const ModelParameters& params, const BasisSystem& basis, const std::vector<PatternStats>& data,
                   bool reduced, ScoreMethod method = ScoreMethod::laplace, int threads = 1);

/// Gradients of the equality constraints of Theta, in full-layout coordinates.
Matrix constraint_jacobian(const ModelParameters& params, const BasisSystem& basis);

/// Rows spanning the null space of A (orthonormal), via SVD with threshold 1e-10 sigma_max.
Matrix orthogonal_complement(const Matrix& A, int dim);

/// V = B^T (B F0 B^T)^{-1} B with B from orthogonal_complement(A).
Matrix sandwich_covariance(const Matrix& F0, const Matrix& A);
Matrix sandwich_covariance_with(const Matrix& F0, const Matrix& B);

/// Rows are gradients of penalty_vector in full-layout coordinates.
Matrix penalty_jacobian(const ModelParameters& params, const BasisSystem& basis);

/// -V DP^T kappa, the asymptotic bias of sqrt(n)(theta_hat - theta0), kappa = sqrt(n) xi.
Vector asymptotic_bias(const Matrix& V, const Matrix& DP, const Xi& kappa);

struct Correlation {
  std::string name;  // e.g. "corr(U1,V2)", "corr(Z,U1)"
  double value = 0.0;
  double se = 0.0;
};

/// Correlations of the latent scores with delta-method standard errors from a
/// covariance of the reduced coordinates.
std::vector<Correlation> delta_correlations(const ModelParameters& theta, const Matrix& reduced_cov);

struct InferenceOptions {
  bool full = false;
  ScoreMethod method = ScoreMethod::laplace;
  int threads = 1;
  Xi xi{0.0, 0.0, 0.0, 0.0};  // smoothing parameters used in the fit, for the bias term
};

struct InferenceReport {
  int n = 0;
  std::vector<std::string> reduced_names;
  Vector theta_tilde;
  Matrix reduced_cov;  // F~0^{-1} / n
  Vector reduced_se;
  bool has_full = false;
  std::vector<std::string> full_names;
  Vector theta_full;
  Matrix full_cov;  // V / n
  Vector full_se;
  Vector bias;  // -V DP^T kappa / sqrt(n), on the theta scale
  std::vector<Correlation> correlations;
  std::vector<std::string> warnings;
};

InferenceReport infer(const ModelParameters& theta_hat, const BasisSystem& basis,
                      const std::vector<PatternStats>& data, const InferenceOptions& options = {});

}  // namespace stcox

#endif  // STCOX_ASYMPTOTICS_HPP
