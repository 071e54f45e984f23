#ifndef STCOX_STUDY_HPP
#define STCOX_STUDY_HPP

#include "stcox/asymptotics.hpp"
#include "stcox/simulate.hpp"

#include <functional>
#include <string>
#include <vector>

namespace stcox {

struct StudyOptions {
  TauChoice tau = TauChoice::log30;
  std::vector<int> n_list{50, 100, 200, 400};
  int replicates = 100;
  std::uint64_t seed = 1;
  FitConfig fit;  // p1, p2 are taken from the truth
  bool asymptotics = true;
  int threads = 1;
  std::function<void(const std::string&)> progress;
};

/// One simulate -> fit -> score round, components sign-aligned with the truth.
struct ReplicateOutcome {
  int n = 0;
  int index = 0;
  bool ok = false;
  std::string error;
  bool converged = false;
  int iterations = 0;
  Vector estimate;          // scalar_names() order
  Vector functional_sq;     // squared L2 errors, functional_names() order
  Vector effect_mse;        // mean over replicates of squared errors, effect_names() order
  Vector asymptotic_sd;     // cross-covariance block (first 8 of scalar_names for p1 = p2 = 2)
  double corr_u1v1 = 0.0;
};

struct StudyCell {
  int n = 0;
  int attempted = 0;
  int succeeded = 0;
  int converged = 0;
  Vector scalar_rmse;
  Vector functional_rmse;
  Vector effect_rmse;
  Vector median_abs_error;  // scalar parameters
  Vector mc_sd;             // scalar parameters; empty when fewer than 2 successes
  Vector asd_mean;          // cross-covariance block
  Vector asd_sd;            // empty when fewer than 2 successes
  double corr_u1v1_mean = 0.0;
  double corr_u1v1_sd = 0.0;
};

struct StudyResult {
  TauChoice tau = TauChoice::log30;
  Vector truth;  // scalar_names() order
  std::vector<std::string> scalar_names;
  std::vector<std::string> functional_names;
  std::vector<std::string> effect_names;
  int cross_count = 0;  // leading scalars that form the cross-covariance block
  std::vector<StudyCell> cells;
  std::vector<ReplicateOutcome> outcomes;
};

/// Flips loadings to have a positive J-inner product with the truth; the matching
/// covariances and latent scores change sign with them.
void align_signs(ModelParameters& est, std::vector<Vector>* latents, const ModelParameters& truth,
                 const BasisSystem& basis);

StudyResult run_study(const StudyOptions& options);

/// Plot-ready CSV tables: one row per parameter, one column per sample size.
std::string rmse_table_csv(const StudyResult& r);         // parameters
std::string effect_table_csv(const StudyResult& r);       // random effects
std::string asymptotic_table_csv(const StudyResult& r);   // true vs asymptotic sd
std::string outcomes_csv(const StudyResult& r);

}  // namespace stcox

#endif  // STCOX_STUDY_HPP
