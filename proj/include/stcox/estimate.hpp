#ifndef STCOX_ESTIMATE_HPP
#define STCOX_ESTIMATE_HPP

#include "stcox/model.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stcox {

using Xi = std::array<double, 4>;  // (mu, phi, nu, psi) smoothing parameters

struct FitConfig {
  int p1 = 2;
  int p2 = 2;
  Xi xi{1e-5, 1e-5, 1e-5, 1e-5};
  double em_tol = 1e-6;  // relative change of the penalized log-likelihood
  int em_max_iter = 500;
  double newton_tol = 1e-10;
  int newton_max_iter = 50;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

class NewtonFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LaplaceOptions {
  double tol = 1e-10;
  int max_iter = 50;
};

struct PosteriorSummary {
  Vector w_star;
  Matrix S;  // (-H(w*))^{-1}
  double laplace_logf = 0.0;
  int newton_iterations = 0;
};

/// Laplace approximation of log f(x) = log int f(x|w) f(w) dw. Newton from
/// `start` (w = 0 when null) with step halving.
PosteriorSummary laplace_marginal(const CompleteDataEvaluator& ev, const PatternStats& x,
                                  const LaplaceOptions& opt = {}, const Vector* start = nullptr);
PosteriorSummary laplace_marginal(const ModelParameters& params, const BasisSystem& basis,
                                  const PointPattern& pattern, const LaplaceOptions& opt = {});

std::vector<PosteriorSummary> e_step(const CompleteDataEvaluator& ev, const std::vector<PatternStats>& data,
                                     const LaplaceOptions& opt = {},
                                     const std::vector<PosteriorSummary>* warm = nullptr, int threads = 1);
std::vector<PosteriorSummary> e_step(const ModelParameters& params, const BasisSystem& basis,
                                     const std::vector<PointPattern>& patterns, const LaplaceOptions& opt = {});

/// (P(mu), sum_k P(phi_k), P(nu), sum_k P(psi_k)) with P(f) = int (f'')^2.
std::array<double, 4> penalty_vector(const ModelParameters& params, const BasisSystem& basis);
double penalty_value(const ModelParameters& params, const BasisSystem& basis, const Xi& xi);

double penalized_loglik(const std::vector<PosteriorSummary>& posteriors, const ModelParameters& params,
                        const BasisSystem& basis, const Xi& xi);
double penalized_loglik(const ModelParameters& params, const BasisSystem& basis,
                        const std::vector<PointPattern>& patterns, const Xi& xi);

struct MStepInfo {
  bool flagged = false;  // a coefficient block could not be improved
  std::vector<std::string> notes;
};

ModelParameters m_step(const ModelParameters& params, const BasisSystem& basis,
                       const std::vector<PatternStats>& data, const std::vector<PosteriorSummary>& posteriors,
                       const Xi& xi, MStepInfo* info = nullptr);

ModelParameters initialize(const BasisSystem& basis, const std::vector<PatternStats>& data, int p1, int p2,
                           const Xi& xi);

struct FitIteration {
  int iteration = 0;
  double penalized_loglik = 0.0;
  bool flagged = false;
};

struct FitReport {
  ModelParameters theta_hat;
  std::vector<PosteriorSummary> posteriors;
  std::vector<FitIteration> trace;  // entry 0 is the initial value
  bool converged = false;
  FitConfig config;
};

using FitCallback = std::function<void(const FitIteration&, const ModelParameters&)>;

FitReport fit(const std::vector<PatternStats>& data, const BasisSystem& basis, const FitConfig& config,
              const std::optional<ModelParameters>& start = std::nullopt, const FitCallback& callback = {});
FitReport fit(const std::vector<PointPattern>& patterns, const BasisSystem& basis, const FitConfig& config,
              const std::optional<ModelParameters>& start = std::nullopt, const FitCallback& callback = {});

LatentEffects predict_random_effects(const ModelParameters& theta_hat, const BasisSystem& basis,
                                     const PointPattern& pattern);

enum class CvMode { sequential, full };
CvMode parse_cv_mode(const std::string& s);

struct CvCell {
  Xi xi{};
  double score = 0.0;  // sum over replicates of held-out Laplace log-marginals
  bool valid = true;
  std::string error;
};

struct CvResult {
  Xi best{};
  double best_score = 0.0;
  std::vector<CvCell> table;
  std::vector<int> fold_of;  // fold index of each replicate
};

/// Folds from a seeded shuffle; replicate i goes to fold (position of i) mod folds.
std::vector<int> assign_folds(int n, int folds, std::uint64_t seed);

CvResult cross_validate(const std::vector<PatternStats>& data, const BasisSystem& basis, const FitConfig& config,
                        int folds, const std::array<std::vector<double>, 4>& xi_grid, CvMode mode);

struct ComponentSelection {
  std::vector<double> temporal_proportions;
  std::vector<double> spatial_proportions;
  std::vector<bool> temporal_flagged;
  std::vector<bool> spatial_flagged;
  int suggested_p1 = 0;
  int suggested_p2 = 0;
};

std::vector<double> variance_proportions(const Vector& variances);
ComponentSelection select_components(const Vector& sigma_u2, const Vector& sigma_v2, double threshold = 0.05);

}  // namespace stcox

#endif  // STCOX_ESTIMATE_HPP
