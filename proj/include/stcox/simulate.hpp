#ifndef STCOX_SIMULATE_HPP
#define STCOX_SIMULATE_HPP

#include "stcox/model.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace stcox {

/// splitmix64 of (seed, index): independent per-replicate streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// w_i = L eps_i, replicate i drawn from derive_seed(seed, i).
std::vector<Vector> draw_latents(const Matrix& sigma, int n, std::uint64_t seed);

/// Draws point patterns for fixed parameters; the time grid and spatial cell
/// tables are built once.
class PatternSampler {
 public:
  static constexpr int kTimeCells = 4096;
  static constexpr double kMaxExpectedCount = 1e7;

  PatternSampler(const ModelParameters& params, const BasisSystem& basis);

  PointPattern sample(const Vector& w, std::mt19937_64& rng) const;
  double expected_count(const Vector& w) const;

 private:
  ModelParameters params_;
  const BasisSystem* basis_;
  ProcessTables tables_;
  Vector grid_mu_;   // mean log-intensity at the time cell centers
  Matrix grid_phi_;  // components at the time cell centers
};

PointPattern sample_pattern(const ModelParameters& params, const BasisSystem& basis, const LatentEffects& w,
                            std::uint64_t seed);

struct SimulatedData {
  std::vector<PointPattern> patterns;  // ids "1".."n"
  std::vector<Vector> latents;
};

SimulatedData simulate(const ModelParameters& params, const BasisSystem& basis, int n, std::uint64_t seed);

enum class TauChoice { log10, log30 };

TauChoice parse_tau_choice(const std::string& s);
std::string to_string(TauChoice tau);

struct Section5Constants {
  double c1, c2, c3, c4, c5;
};
Section5Constants section5_constants();

/// Analytic truth functions of the simulation study (before basis projection).
namespace section5 {
double mu(double t);
double phi1(double t);
double phi2(double t);
double nu(double x, double y);
double psi1(double x, double y);
double psi2(double x, double y);
}  // namespace section5

struct Section5Truth {
  std::shared_ptr<const BasisSystem> basis;
  ModelParameters params;
  /// L2 norms of (truth - projection) for mu, phi1, phi2, nu, psi1, psi2.
  std::vector<double> projection_residuals;
};

constexpr double kSection5SigmaZ2 = 0.01;

Section5Truth section5_truth(TauChoice tau);

/// Constrained L2 projections onto the temporal / spatial spline spaces
/// (zero integral, periodicity when enabled).
Vector project_temporal_function(const BasisSystem& basis, double (*f)(double));
Vector project_spatial_function(const BasisSystem& basis, double (*f)(double, double));

}  // namespace stcox

#endif  // STCOX_SIMULATE_HPP
