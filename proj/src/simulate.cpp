#include "stcox/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace stcox {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Index of the cell whose cumulative mass first exceeds target.
std::size_t pick_cell(const std::vector<double>& cumulative, double target) {
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  if (it == cumulative.end()) --it;
  return static_cast<std::size_t>(it - cumulative.begin());
}

std::vector<double> cumulative_masses(const Vector& log_mass) {
  const double shift = log_mass.maxCoeff();
  std::vector<double> cum(static_cast<std::size_t>(log_mass.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < log_mass.size(); ++i) {
    acc += std::exp(log_mass[i] - shift);
    cum[static_cast<std::size_t>(i)] = acc;
  }
  return cum;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ (index * 0xD1B54A32D192ED03ULL + 1));
}

std::vector<Vector> draw_latents(const Matrix& sigma, int n, std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("draw_latents: n must be nonnegative");
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success || !sigma.allFinite())
    throw std::domain_error("draw_latents: Sigma is not positive definite");
  const Matrix L = llt.matrixL();
  const Eigen::Index d = sigma.rows();
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> N(0.0, 1.0);
    Vector eps(d);
    for (Eigen::Index k = 0; k < d; ++k) eps[k] = N(rng);
    out.push_back(L * eps);
  }
  return out;
}

PatternSampler::PatternSampler(const ModelParameters& params, const BasisSystem& basis)
    : params_(params), basis_(&basis), tables_(params, basis) {
  const auto& td = basis.spec().temporal_domain;
  const double dt = td.length() / kTimeCells;
  Matrix B(kTimeCells, basis.q1());
  for (int i = 0; i < kTimeCells; ++i) B.row(i) = basis.temporal().evaluate(td.t_lower + (i + 0.5) * dt).transpose();
  grid_mu_ = B * params.c0;
  grid_phi_ = B * params.C;
}

double PatternSampler::expected_count(const Vector& w) const {
  const int p1 = params_.p1();
  const int p2 = params_.p2();
  return std::exp(params_.tau + w[0] + tables_.log_temporal_integral(w.segment(1, p1)) +
                  tables_.log_spatial_integral(w.tail(p2)));
}

PointPattern PatternSampler::sample(const Vector& w, std::mt19937_64& rng) const {
  const int p1 = params_.p1();
  const int p2 = params_.p2();
  if (w.size() != 1 + p1 + p2) throw std::invalid_argument("sample_pattern: latent vector has the wrong length");
  const double rho = expected_count(w);
  if (!(rho <= kMaxExpectedCount)) {
    std::ostringstream msg;
    msg << "sample_pattern: expected count " << rho << " exceeds " << kMaxExpectedCount
        << " events; use a smaller tau";
    throw std::overflow_error(msg.str());
  }
  PointPattern out;
  std::poisson_distribution<long long> P(rho);
  const long long m = rho > 0.0 ? P(rng) : 0;
  if (m == 0) return out;
  out.events.resize(static_cast<std::size_t>(m));

  std::uniform_real_distribution<double> U(0.0, 1.0);
  const auto& td = basis_->spec().temporal_domain;
  const double dt = td.length() / kTimeCells;
  Vector eta_t = grid_mu_;
  if (p1 > 0) eta_t.noalias() += grid_phi_ * w.segment(1, p1);
  const std::vector<double> cum_t = cumulative_masses(eta_t);
  for (auto& e : out.events) {
    const std::size_t cell = pick_cell(cum_t, U(rng) * cum_t.back());
    e.t = std::min(td.t_upper, td.t_lower + (static_cast<double>(cell) + U(rng)) * dt);
  }

  const auto& sb = basis_->spatial();
  const auto& sd = basis_->spec().spatial_domain;
  Vector eta_s = tables_.nu_nodes();
  if (p2 > 0) eta_s.noalias() += tables_.psi_nodes() * w.tail(p2);
  eta_s.array() += sb.quad_weights().array().log();
  const std::vector<double> cum_s = cumulative_masses(eta_s);
  for (auto& e : out.events) {
    for (;;) {
      const std::size_t cell = pick_cell(cum_s, U(rng) * cum_s.back());
      const Point2& c = sb.quad_nodes()[cell];
      const double x = c.x + (U(rng) - 0.5) * sb.cell_width();
      const double y = c.y + (U(rng) - 0.5) * sb.cell_height();
      if (sd.contains(x, y)) {
        e.x = x;
        e.y = y;
        break;
      }
    }
  }
  std::sort(out.events.begin(), out.events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  return out;
}

PointPattern sample_pattern(const ModelParameters& params, const BasisSystem& basis, const LatentEffects& w,
                            std::uint64_t seed) {
  const PatternSampler sampler(params, basis);
  std::mt19937_64 rng(seed);
  return sampler.sample(w.stacked(), rng);
}

SimulatedData simulate(const ModelParameters& params, const BasisSystem& basis, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("simulate: n must be at least 1");
  SimulatedData out;
  out.latents = draw_latents(assemble_sigma(params), n, seed);
  const PatternSampler sampler(params, basis);
  const std::uint64_t pattern_seed = derive_seed(seed, 0xFFFFFFFFULL);
  out.patterns.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(derive_seed(pattern_seed, static_cast<std::uint64_t>(i)));
    PointPattern p = sampler.sample(out.latents[static_cast<std::size_t>(i)], rng);
    p.id = std::to_string(i + 1);
    out.patterns.push_back(std::move(p));
  }
  return out;
}

TauChoice parse_tau_choice(const std::string& s) {
  if (s == "log10") return TauChoice::log10;
  if (s == "log30") return TauChoice::log30;
  throw std::invalid_argument("tau must be log10 or log30, got '" + s + "'");
}

std::string to_string(TauChoice tau) { return tau == TauChoice::log10 ? "log10" : "log30"; }

Section5Constants section5_constants() {
  Section5Constants c{};
  c.c1 = 2.0 / kPi;
  c.c2 = std::sqrt(0.5 - 4.0 / (kPi * kPi));
  c.c3 = -1.0 / 6.0;
  c.c4 = 4.0 / (kPi * kPi);
  c.c5 = std::sqrt(0.25 - 16.0 / std::pow(kPi, 4));
  return c;
}

namespace section5 {
double mu(double t) { return std::sin(kPi * t) - section5_constants().c1; }
double phi1(double t) {
  const auto c = section5_constants();
  return (std::sin(kPi * t) - c.c1) / c.c2;
}
double phi2(double t) { return std::sqrt(2.0) * std::sin(2.0 * kPi * t); }
double nu(double x, double y) { return -(x - 0.5) * (x - 0.5) - (y - 0.5) * (y - 0.5) - section5_constants().c3; }
double psi1(double x, double y) {
  const auto c = section5_constants();
  return (std::sin(kPi * x) * std::sin(kPi * y) - c.c4) / c.c5;
}
double psi2(double x, double y) { return 2.0 * std::sin(2.0 * kPi * x) * std::sin(2.0 * kPi * y); }
}  // namespace section5

namespace {

Vector constrained_projection(const Matrix& nullspace, const Matrix& gram, const Vector& moments) {
  const Matrix NJN = nullspace.transpose() * gram * nullspace;
  return nullspace * NJN.ldlt().solve(nullspace.transpose() * moments);
}

double temporal_residual(const BasisSystem& basis, double (*f)(double), const Vector& c) {
  const auto& tb = basis.temporal();
  const Vector r = tb.quad_basis() * c - tb.quad_nodes().unaryExpr(f);
  return std::sqrt(tb.quad_weights().dot(r.cwiseAbs2()));
}

Vector spatial_values(const BasisSystem& basis, double (*f)(double, double)) {
  const auto& nodes = basis.spatial().quad_nodes();
  Vector v(static_cast<Eigen::Index>(nodes.size()));
  for (std::size_t b = 0; b < nodes.size(); ++b) v[static_cast<Eigen::Index>(b)] = f(nodes[b].x, nodes[b].y);
  return v;
}

double spatial_residual(const BasisSystem& basis, double (*f)(double, double), const Vector& d) {
  const auto& sb = basis.spatial();
  const Vector r = sb.quad_basis() * d - spatial_values(basis, f);
  return std::sqrt(sb.quad_weights().dot(r.cwiseAbs2()));
}

}  // namespace

Vector project_temporal_function(const BasisSystem& basis, double (*f)(double)) {
  const auto& tb = basis.temporal();
  const Vector vals = tb.quad_nodes().unaryExpr(f);
  const Vector moments = tb.quad_basis().transpose() * tb.quad_weights().cwiseProduct(vals);
  return constrained_projection(basis.temporal_nullspace(), tb.gram(), moments);
}

Vector project_spatial_function(const BasisSystem& basis, double (*f)(double, double)) {
  const auto& sb = basis.spatial();
  const Vector moments = sb.quad_basis().transpose() * sb.quad_weights().cwiseProduct(spatial_values(basis, f));
  return constrained_projection(basis.spatial_nullspace(), sb.gram(), moments);
}

Section5Truth section5_truth(TauChoice tau) {
  Section5Truth out;
  out.basis = std::make_shared<const BasisSystem>(BasisSpec{});
  const BasisSystem& basis = *out.basis;

  const Vector c0 = project_temporal_function(basis, section5::mu);
  Matrix C(basis.q1(), 2);
  C.col(0) = project_temporal_function(basis, section5::phi1);
  C.col(1) = project_temporal_function(basis, section5::phi2);
  const Vector d0 = project_spatial_function(basis, section5::nu);
  Matrix D(basis.q2(), 2);
  D.col(0) = project_spatial_function(basis, section5::psi1);
  D.col(1) = project_spatial_function(basis, section5::psi2);

  out.projection_residuals = {temporal_residual(basis, section5::mu, c0),
                              temporal_residual(basis, section5::phi1, C.col(0)),
                              temporal_residual(basis, section5::phi2, C.col(1)),
                              spatial_residual(basis, section5::nu, d0),
                              spatial_residual(basis, section5::psi1, D.col(0)),
                              spatial_residual(basis, section5::psi2, D.col(1))};

  const double su1 = 0.3 * 0.3 * 0.7, su2 = 0.3 * 0.3 * 0.3;
  const double sv1 = 0.7 * 0.7 * 0.7, sv2 = 0.7 * 0.7 * 0.3;
  Matrix S = Matrix::Zero(5, 5);
  S(0, 0) = kSection5SigmaZ2;
  S(1, 1) = su1;
  S(2, 2) = su2;
  S(3, 3) = sv1;
  S(4, 4) = sv2;
  S(1, 3) = S(3, 1) = 0.7 * std::sqrt(su1 * sv1);
  S(2, 4) = S(4, 2) = 0.7 * std::sqrt(su2 * sv2);

  // Symmetric J-orthonormalization keeps the stated score variances; the KL
  // step below then only fixes order and signs.
  auto orthonormalize = [](const Matrix& B, const Matrix& gram) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(B.transpose() * gram * B);
    return Matrix(B * es.operatorInverseSqrt());
  };
  const double tau_value = tau == TauChoice::log10 ? std::log(10.0) : std::log(30.0);
  out.params = restore_kl_form(basis, tau_value, c0, orthonormalize(C, basis.temporal().gram()), d0,
                               orthonormalize(D, basis.spatial().gram()), S);
  return out;
}

}  // namespace stcox
