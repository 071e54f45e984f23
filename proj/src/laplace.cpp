#include "stcox/estimate.hpp"

#include "parallel.hpp"

#include <cmath>
#include <algorithm>
#include <sstream>

namespace stcox {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

PosteriorSummary laplace_marginal(const CompleteDataEvaluator& ev, const PatternStats& x, const LaplaceOptions& opt,
                                  const Vector* start) {
  const int d = ev.params().latent_dim();
  Vector w = start ? *start : Vector::Zero(d);
  if (w.size() != d) w = Vector::Zero(d);

  GradHess gh = ev.grad_hess(x, w);
  int it = 0;
  for (;;) {
    // Gradient entries are sums of O(m + rho) terms; below this floor the
    // residual is rounding noise.
    const double floor = 1e-14 * (1.0 + x.m + gh.hess.cwiseAbs().maxCoeff());
    if (gh.grad.norm() <= std::max(opt.tol, floor)) break;
    if (it >= opt.max_iter) {
      std::ostringstream msg;
      msg << "Laplace Newton iteration did not converge in " << opt.max_iter
          << " steps (gradient norm " << gh.grad.norm() << ")";
      throw NewtonFailure(msg.str());
    }
    ++it;
    Eigen::LLT<Matrix> llt(-gh.hess);
    if (llt.info() != Eigen::Success) throw NewtonFailure("Laplace Newton: Hessian is not negative definite");
    const Vector step = llt.solve(gh.grad);
    double t = 1.0;
    Vector trial = w + step;
    double f = ev.value(x, trial);
    // Inside the quadratic region the predicted gain is below the rounding
    // error of the objective, so a full step is taken regardless.
    const double decrement = gh.grad.dot(step);
    if (decrement < 1e-8 && f >= gh.value - 1e-12 * (1.0 + std::abs(gh.value))) f = gh.value;
    for (int h = 0; h < 60 && !(f >= gh.value); ++h) {
      t *= 0.5;
      trial = w + t * step;
      f = ev.value(x, trial);
    }
    if (!(f >= gh.value)) {
      // no ascent at machine precision: accept if we are at the floor already
      if (gh.grad.norm() <= 1e-8 * (1.0 + x.m)) break;
      throw NewtonFailure("Laplace Newton: line search failed");
    }
    w = trial;
    gh = ev.grad_hess(x, w);
  }

  PosteriorSummary out;
  out.w_star = w;
  out.newton_iterations = it;
  const Matrix negH = -gh.hess;
  Eigen::LLT<Matrix> llt(negH);
  if (llt.info() != Eigen::Success) throw NewtonFailure("Laplace: Hessian at the mode is not negative definite");
  out.S = llt.solve(Matrix::Identity(d, d));
  out.S = (0.5 * (out.S + out.S.transpose())).eval();
  const Matrix L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  out.laplace_logf = gh.value + 0.5 * d * kLog2Pi - 0.5 * logdet;
  return out;
}

PosteriorSummary laplace_marginal(const ModelParameters& params, const BasisSystem& basis,
                                  const PointPattern& pattern, const LaplaceOptions& opt) {
  const CompleteDataEvaluator ev(params, basis);
  return laplace_marginal(ev, pattern_stats(basis, pattern), opt);
}

std::vector<PosteriorSummary> e_step(const CompleteDataEvaluator& ev, const std::vector<PatternStats>& data,
                                     const LaplaceOptions& opt, const std::vector<PosteriorSummary>* warm,
                                     int threads) {
  const std::size_t n = data.size();
  std::vector<PosteriorSummary> out(n);
  detail::parallel_for(n, threads, [&](std::size_t i) {
    const Vector* start = (warm && warm->size() == n) ? &(*warm)[i].w_star : nullptr;
    out[i] = laplace_marginal(ev, data[i], opt, start);
  });
  return out;
}

std::vector<PosteriorSummary> e_step(const ModelParameters& params, const BasisSystem& basis,
                                     const std::vector<PointPattern>& patterns, const LaplaceOptions& opt) {
  const CompleteDataEvaluator ev(params, basis);
  return e_step(ev, pattern_stats(basis, patterns), opt);
}

std::array<double, 4> penalty_vector(const ModelParameters& params, const BasisSystem& basis) {
  const Matrix& Wt = basis.temporal().penalty();
  const Matrix& Ws = basis.spatial().penalty();
  std::array<double, 4> P{};
  P[0] = params.c0.dot(Wt * params.c0);
  P[1] = (params.C.transpose() * Wt * params.C).trace();
  P[2] = params.d0.dot(Ws * params.d0);
  P[3] = (params.D.transpose() * Ws * params.D).trace();
  return P;
}

double penalty_value(const ModelParameters& params, const BasisSystem& basis, const Xi& xi) {
  const auto P = penalty_vector(params, basis);
  return xi[0] * P[0] + xi[1] * P[1] + xi[2] * P[2] + xi[3] * P[3];
}

double penalized_loglik(const std::vector<PosteriorSummary>& posteriors, const ModelParameters& params,
                        const BasisSystem& basis, const Xi& xi) {
  if (posteriors.empty()) throw std::invalid_argument("penalized_loglik: no replicates");
  double s = 0.0;
  for (const auto& p : posteriors) s += p.laplace_logf;
  return s / static_cast<double>(posteriors.size()) - penalty_value(params, basis, xi);
}

double penalized_loglik(const ModelParameters& params, const BasisSystem& basis,
                        const std::vector<PointPattern>& patterns, const Xi& xi) {
  return penalized_loglik(e_step(params, basis, patterns), params, basis, xi);
}

}  // namespace stcox
