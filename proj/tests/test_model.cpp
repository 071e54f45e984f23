#include "doctest.h"
#include "test_util.hpp"

#include "stcox/model.hpp"

#include <algorithm>
#include <cmath>

using namespace stcox;
using testutil::randn;

namespace {

const BasisSystem& default_basis() {
  static const BasisSystem basis{BasisSpec{}};
  return basis;
}

const BasisSystem& periodic_basis() {
  static const BasisSystem basis = [] {
    BasisSpec spec;
    spec.temporal.periodic = true;
    return BasisSystem(spec);
  }();
  return basis;
}

bool has(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

// log f(x|w) + log N(w; 0, Sigma), transcribed event by event.
double loglik_oracle(const ModelParameters& p, const BasisSystem& basis, const PointPattern& x, const Vector& w) {
  const int p1 = p.p1();
  const int p2 = p.p2();
  const Vector u = w.segment(1, p1);
  const Vector v = w.tail(p2);
  double It = 0.0;
  const auto& tb = basis.temporal();
  for (Eigen::Index a = 0; a < tb.quad_nodes().size(); ++a)
    It += tb.quad_weights()[a] * std::exp(tb.evaluate(tb.quad_nodes()[a]).dot(p.c0 + p.C * u));
  double Is = 0.0;
  const auto& sb = basis.spatial();
  for (std::size_t b = 0; b < sb.quad_nodes().size(); ++b) {
    const auto& n = sb.quad_nodes()[b];
    Is += sb.quad_weights()[static_cast<Eigen::Index>(b)] * std::exp(sb.evaluate(n.x, n.y).dot(p.d0 + p.D * v));
  }
  const double r = std::exp(p.tau + w[0]);
  double out = -r * It * Is;
  for (const auto& e : x.events) {
    out += std::log(r);
    out += log_intensity_t(p, basis, u, e.t);
    out += log_intensity_s(p, basis, v, e.x, e.y);
  }
  double logfact = 0.0;
  for (int k = 2; k <= x.size(); ++k) logfact += std::log(static_cast<double>(k));
  out -= logfact;
  const Matrix S = assemble_sigma(p);
  Eigen::FullPivLU<Matrix> lu(S);
  const double quad = w.dot(lu.solve(w));
  out += -0.5 * quad - 0.5 * std::log(lu.determinant()) - 0.5 * w.size() * std::log(2.0 * M_PI);
  return out;
}

}  // namespace

TEST_CASE("assemble_sigma block layout") {
  ModelParameters p = ModelParameters::zeros(default_basis().q1(), default_basis().q2(), 1, 1);
  p.sigma_z2 = 1.0;
  p.sigma_u2 << 0.5;
  p.sigma_v2 << 0.25;
  Matrix expect = Vector(Eigen::Vector3d(1.0, 0.5, 0.25)).asDiagonal();
  CHECK(max_abs_diff(assemble_sigma(p), expect) == 0.0);

  ModelParameters q = ModelParameters::zeros(4, 4, 2, 2);
  q.sigma_z2 = 0.01;
  q.sigma_u2 << 0.3 * 0.3 * 0.7, 0.3 * 0.3 * 0.3;
  q.sigma_v2 << 0.7 * 0.7 * 0.7, 0.7 * 0.7 * 0.3;
  q.Sigma_uv(0, 0) = 0.7 * std::sqrt(q.sigma_u2[0] * q.sigma_v2[0]);
  q.Sigma_uv(1, 1) = 0.7 * std::sqrt(q.sigma_u2[1] * q.sigma_v2[1]);
  q.sigma_zu << 0.001, -0.002;
  q.sigma_zv << 0.003, 0.004;
  q.Sigma_uv(0, 1) = 0.02;
  const Matrix S = assemble_sigma(q);
  CHECK(S(1, 3) == doctest::Approx(0.1029).epsilon(1e-3));
  CHECK(S(3, 1) == S(1, 3));
  CHECK((S - S.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(S(0, 2) == -0.002);
  CHECK(S(4, 0) == 0.004);
  CHECK(S(1, 4) == 0.02);
}

TEST_CASE("check_theta accepts projected parameters and names violations") {
  std::mt19937_64 rng(11);
  for (const BasisSystem* basis : {&default_basis(), &periodic_basis()}) {
    const ModelParameters p = testutil::random_theta(*basis, 2, 2, rng);
    CHECK(check_theta(p, *basis).empty());

    ModelParameters swapped = p;
    swapped.C.col(0).swap(swapped.C.col(1));
    std::swap(swapped.sigma_u2[0], swapped.sigma_u2[1]);
    CHECK(has(check_theta(swapped, *basis), "variance ordering u"));

    ModelParameters flipped = p;
    flipped.D.col(1) *= -1.0;
    CHECK(has(check_theta(flipped, *basis), "sign rule D2"));

    ModelParameters scaled = p;
    scaled.C.col(0) *= 1.01;
    CHECK(has(check_theta(scaled, *basis), "h_C(1,1)"));

    ModelParameters shifted = p;
    shifted.d0 += Vector::Ones(basis->q2()) * 0.1;
    CHECK(has(check_theta(shifted, *basis), "zero integral d0"));

    if (basis->periodic()) {
      ModelParameters aper = p;
      aper.c0[0] += 0.5;
      aper.c0[1] -= 0.5 * basis->temporal().integral()[0] / basis->temporal().integral()[1];
      const auto bad = check_theta(aper, *basis);
      CHECK(has(bad, "periodicity c0"));
      CHECK_FALSE(has(bad, "zero integral c0"));
    }
  }
}

TEST_CASE("check_theta flags a correlation above one") {
  ModelParameters p = ModelParameters::zeros(default_basis().q1(), default_basis().q2(), 2, 2);
  std::mt19937_64 rng(3);
  const ModelParameters base = testutil::random_theta(default_basis(), 2, 2, rng);
  p = base;
  p.sigma_zu.setZero();
  p.sigma_zv.setZero();
  p.Sigma_uv.setZero();
  CHECK(check_theta(p, default_basis()).empty());
  p.Sigma_uv(0, 0) = 1.5 * std::sqrt(p.sigma_u2[0] * p.sigma_v2[0]);
  // Oracle: the (u1, v1) 2x2 principal minor is negative.
  const double minor = p.sigma_u2[0] * p.sigma_v2[0] - p.Sigma_uv(0, 0) * p.Sigma_uv(0, 0);
  REQUIRE(minor < 0.0);
  CHECK(has(check_theta(p, default_basis()), "Sigma positive definite"));
}

TEST_CASE("project_theta is idempotent") {
  std::mt19937_64 rng(5);
  for (const BasisSystem* basis : {&default_basis(), &periodic_basis()}) {
    for (int rep = 0; rep < 5; ++rep) {
      const ModelParameters p = testutil::random_theta(*basis, 2, 2, rng);
      const ModelParameters q = project_theta(p, *basis);
      CHECK(max_abs_diff(q.C, p.C) <= 1e-12);
      CHECK(max_abs_diff(q.D, p.D) <= 1e-12);
      CHECK(max_abs_diff(q.c0, p.c0) <= 1e-12);
      CHECK(max_abs_diff(q.d0, p.d0) <= 1e-12);
      CHECK(max_abs_diff(assemble_sigma(q), assemble_sigma(p)) <= 1e-12);
      CHECK(q.tau == p.tau);
    }
  }
}

TEST_CASE("project_theta is invariant under rotation of the loadings") {
  std::mt19937_64 rng(8);
  const BasisSystem& basis = default_basis();
  const ModelParameters p = testutil::random_theta(basis, 2, 2, rng);
  const Matrix S = assemble_sigma(p);
  // C' = C Q with scores u' = Q^T u keeps C u unchanged.
  const double a = 0.7;
  Matrix Q(2, 2);
  Q << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  Matrix T = Matrix::Identity(5, 5);
  T.block(1, 1, 2, 2) = Q.transpose();
  const Matrix S_rot = T * S * T.transpose();
  const ModelParameters q = restore_kl_form(basis, p.tau, p.c0, p.C * Q, p.d0, p.D, S_rot);
  CHECK(max_abs_diff(q.C, p.C) <= 1e-10);
  CHECK(max_abs_diff(assemble_sigma(q), S) <= 1e-10);
  CHECK(check_theta(q, basis).empty());

  // Non-orthogonal mixing with the matching score transform also round-trips.
  Matrix M(2, 2);
  M << 1.3, 0.4, -0.2, 0.8;
  T.block(1, 1, 2, 2) = M.inverse();
  const ModelParameters r = restore_kl_form(basis, p.tau, p.c0, p.C * M, p.d0, p.D, T * S * T.transpose());
  CHECK(max_abs_diff(r.C, p.C) <= 1e-10);
  CHECK(max_abs_diff(assemble_sigma(r), S) <= 1e-10);
}

TEST_CASE("project_theta restores column order and signs") {
  std::mt19937_64 rng(13);
  const BasisSystem& basis = default_basis();
  const ModelParameters p = testutil::random_theta(basis, 2, 2, rng);
  ModelParameters bad = p;
  // swap and negate the temporal components along with their scores
  bad.C.col(0) = -p.C.col(1);
  bad.C.col(1) = -p.C.col(0);
  bad.sigma_u2 << p.sigma_u2[1], p.sigma_u2[0];
  bad.sigma_zu << -p.sigma_zu[1], -p.sigma_zu[0];
  bad.Sigma_uv.row(0) = -p.Sigma_uv.row(1);
  bad.Sigma_uv.row(1) = -p.Sigma_uv.row(0);
  const auto violations = check_theta(bad, basis);
  CHECK(has(violations, "variance ordering u"));
  const ModelParameters q = project_theta(bad, basis);
  CHECK(max_abs_diff(q.C, p.C) <= 1e-12);
  CHECK(max_abs_diff(assemble_sigma(q), assemble_sigma(p)) <= 1e-12);
}

TEST_CASE("project_theta keeps the implied log-intensities") {
  std::mt19937_64 rng(21);
  const BasisSystem& basis = default_basis();
  const Vector c0 = randn(basis.q1(), rng, 0.3);
  const Vector d0 = randn(basis.q2(), rng, 0.3);
  const Matrix C = randn(basis.q1(), 2, rng);
  const Matrix D = randn(basis.q2(), 2, rng);
  const Vector a = basis.temporal().integral();
  // constrained inputs so only the KL rotation acts
  const Vector c0c = project_onto_constraints(c0, basis.temporal().constraint_rows(), basis.temporal().gram());
  const Matrix Cc = project_onto_constraints(C, basis.temporal().constraint_rows(), basis.temporal().gram());
  const Matrix Dc = project_onto_constraints(D, basis.spatial().constraint_rows(), basis.spatial().gram());
  const Matrix S = testutil::random_spd(5, rng);
  const ModelParameters q = restore_kl_form(basis, 1.0, c0c, Cc, d0, Dc, S);
  CHECK(check_theta(q, basis).empty());
  CHECK(std::abs(a.dot(c0c)) <= 1e-10);

  // Matched random effects: w' = T w with T from the fitted transform; recover T by least squares.
  const Matrix Tu = q.C.colPivHouseholderQr().solve(Cc);
  const Matrix Tv = q.D.colPivHouseholderQr().solve(Dc);
  for (int rep = 0; rep < 10; ++rep) {
    const Vector u = randn(2, rng);
    const Vector v = randn(2, rng);
    const Vector uq = Tu * u;
    const Vector vq = Tv * v;
    for (double t : {0.0, 0.13, 0.5, 0.77, 1.0}) {
      const double before = basis.temporal().evaluate(t).dot(c0c + Cc * u);
      CHECK(std::abs(log_intensity_t(q, basis, uq, t) - before) <= 1e-10);
    }
    const double sb = basis.spatial().evaluate(0.3, 0.6).dot(q.d0 + Dc * v);
    CHECK(std::abs(log_intensity_s(q, basis, vq, 0.3, 0.6) - sb) <= 1e-10);
  }
  // law of the scores: T S T^T equals the projected covariance
  Matrix T = Matrix::Identity(5, 5);
  T.block(1, 1, 2, 2) = Tu;
  T.block(3, 3, 2, 2) = Tv;
  CHECK(max_abs_diff(T * S * T.transpose(), assemble_sigma(q)) <= 1e-10);
}

TEST_CASE("project_theta rejects rank-deficient loadings") {
  std::mt19937_64 rng(4);
  const BasisSystem& basis = default_basis();
  const ModelParameters p = testutil::random_theta(basis, 2, 2, rng);
  ModelParameters bad = p;
  bad.C.col(1) = 2.0 * bad.C.col(0);
  CHECK_THROWS_AS(project_theta(bad, basis), std::domain_error);
}

TEST_CASE("log intensities") {
  std::mt19937_64 rng(2);
  const BasisSystem& basis = default_basis();
  const ModelParameters p = testutil::random_theta(basis, 2, 2, rng);
  const Vector zero = Vector::Zero(2);
  for (double t : {0.0, 0.4, 1.0})
    CHECK(log_intensity_t(p, basis, zero, t) == doctest::Approx(basis.temporal().evaluate(t).dot(p.c0)));
  ModelParameters flat = p;
  flat.c0.setZero();
  flat.d0.setZero();
  const Vector e2 = Vector::Unit(2, 1);
  CHECK(log_intensity_t(flat, basis, e2, 0.3) == doctest::Approx(basis.temporal().evaluate(0.3).dot(p.C.col(1))));
  CHECK(log_intensity_s(flat, basis, e2, 0.2, 0.9) ==
        doctest::Approx(basis.spatial().evaluate(0.2, 0.9).dot(p.D.col(1))));
  CHECK_THROWS_AS(log_intensity_t(p, basis, zero, 1.5), std::out_of_range);
  CHECK_THROWS_AS(log_intensity_s(p, basis, zero, 0.5, -0.1), std::out_of_range);
}

TEST_CASE("intensity integrals") {
  const BasisSystem& basis = default_basis();
  ModelParameters flat = ModelParameters::zeros(basis.q1(), basis.q2(), 2, 2);
  LatentEffects w0{0.0, Vector::Zero(2), Vector::Zero(2)};
  const auto I0 = intensity_integrals(flat, basis, w0);
  CHECK(I0.I_t == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(I0.I_s == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(I0.rho == doctest::Approx(1.0).epsilon(1e-13));

  std::mt19937_64 rng(9);
  const ModelParameters p = testutil::random_theta(basis, 2, 2, rng);
  const LatentEffects w{0.2, randn(2, rng, 0.5), randn(2, rng, 0.5)};
  const auto I = intensity_integrals(p, basis, w);
  const double oracle = testutil::adaptive_simpson(
      [&](double t) { return std::exp(log_intensity_t(p, basis, w.u, t)); }, 0.0, 1.0, 1e-12);
  CHECK(std::abs(I.I_t - oracle) <= 1e-8);
  CHECK(I.rho == doctest::Approx(std::exp(p.tau + w.z) * I.I_t * I.I_s).epsilon(1e-13));

  // same grid: quadrature of exp(log_intensity) equals I_t and I_s
  const auto& tb = basis.temporal();
  double qt = 0.0;
  for (Eigen::Index a = 0; a < tb.quad_nodes().size(); ++a)
    qt += tb.quad_weights()[a] * std::exp(log_intensity_t(p, basis, w.u, tb.quad_nodes()[a]));
  CHECK(std::abs(qt - I.I_t) <= 1e-12 * std::max(1.0, I.I_t));
  const auto& sb = basis.spatial();
  double qs = 0.0;
  for (std::size_t b = 0; b < sb.quad_nodes().size(); ++b)
    qs += sb.quad_weights()[static_cast<Eigen::Index>(b)] *
          std::exp(log_intensity_s(p, basis, w.v, sb.quad_nodes()[b].x, sb.quad_nodes()[b].y));
  CHECK(std::abs(qs - I.I_s) <= 1e-12 * std::max(1.0, I.I_s));

  // huge log-intensity stays finite in log scale (B-splines sum to one: adding 800 to every c0 entry shifts mu by 800)
  ModelParameters big = p;
  big.c0.array() += 800.0;
  const auto Ib = intensity_integrals(big, basis, w);
  CHECK(std::isfinite(Ib.log_I_t));
  CHECK(std::abs(Ib.log_I_t - 800.0 - I.log_I_t) <= 1e-10);
}

TEST_CASE("complete-data log-likelihood") {
  const BasisSystem& basis = default_basis();
  std::mt19937_64 rng(17);

  SUBCASE("empty pattern") {
    const ModelParameters p = testutil::random_theta(basis, 2, 2, rng);
    const LatentEffects w0{0.0, Vector::Zero(2), Vector::Zero(2)};
    const PointPattern empty;
    const auto I = intensity_integrals(p, basis, w0);
    const Matrix S = assemble_sigma(p);
    const double prior = -0.5 * std::log(S.determinant()) - 2.5 * std::log(2.0 * M_PI);
    CHECK(complete_data_loglik(p, basis, empty, w0) ==
          doctest::Approx(-std::exp(p.tau) * I.I_t * I.I_s + prior).epsilon(1e-12));
  }
  SUBCASE("single event, flat model") {
    ModelParameters flat = ModelParameters::zeros(basis.q1(), basis.q2(), 1, 1);
    PointPattern one;
    one.events.push_back({0.5, 0.5, 0.5});
    const LatentEffects w0{0.0, Vector::Zero(1), Vector::Zero(1)};
    const double expect = -1.0 - 1.5 * std::log(2.0 * M_PI);
    CHECK(complete_data_loglik(flat, basis, one, w0) == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("random cases against a direct transcription") {
    for (int rep = 0; rep < 5; ++rep) {
      const ModelParameters p = testutil::random_theta(basis, 2, 2, rng);
      const PointPattern x = testutil::random_pattern(basis, 3 + 7 * rep, rng);
      const Vector w = randn(5, rng, 0.4);
      const double got = complete_data_loglik(p, basis, x, LatentEffects::unstack(w, 2, 2));
      const double want = loglik_oracle(p, basis, x, w);
      CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, std::abs(want)));
    }
  }
  SUBCASE("events outside the domain are rejected") {
    const ModelParameters p = testutil::random_theta(basis, 1, 1, rng);
    PointPattern x;
    x.id = "bad";
    x.events.push_back({0.5, 1.2, 0.5});
    CHECK_THROWS_AS(pattern_stats(basis, x), std::out_of_range);
  }
  SUBCASE("non-PD Sigma is rejected") {
    ModelParameters p = testutil::random_theta(basis, 1, 1, rng);
    p.sigma_z2 = -1.0;
    const PointPattern x;
    CHECK_THROWS_AS(complete_data_loglik(p, basis, x, LatentEffects{0.0, Vector::Zero(1), Vector::Zero(1)}),
                    std::domain_error);
  }
}

TEST_CASE("gradient and Hessian in w match finite differences") {
  const BasisSystem& basis = default_basis();
  std::mt19937_64 rng(23);
  const double h = 1e-5;
  for (int rep = 0; rep < 20; ++rep) {
    const int p1 = 1 + rep % 3;
    const int p2 = 1 + (rep / 3) % 2;
    const ModelParameters p = testutil::random_theta(basis, p1, p2, rng);
    const CompleteDataEvaluator ev(p, basis);
    const PatternStats x = pattern_stats(basis, testutil::random_pattern(basis, rep * 4, rng));
    const int d = 1 + p1 + p2;
    const Vector w = randn(d, rng, 0.5);
    const GradHess gh = ev.grad_hess(x, w);
    CHECK(gh.value == doctest::Approx(ev.value(x, w)).epsilon(1e-13));
    Vector fd(d);
    Matrix fdh(d, d);
    for (int k = 0; k < d; ++k) {
      Vector wp = w, wm = w;
      wp[k] += h;
      wm[k] -= h;
      fd[k] = (ev.value(x, wp) - ev.value(x, wm)) / (2 * h);
      fdh.col(k) = (ev.grad_hess(x, wp).grad - ev.grad_hess(x, wm).grad) / (2 * h);
    }
    CHECK((fd - gh.grad).norm() <= 1e-5 * std::max(1.0, gh.grad.norm()));
    CHECK((fdh - gh.hess).norm() <= 1e-5 * std::max(1.0, gh.hess.norm()));
  }
}

TEST_CASE("Hessian in w is negative definite") {
  std::mt19937_64 rng(29);
  int checked = 0;
  for (const BasisSystem* basis : {&default_basis(), &periodic_basis()}) {
    for (int rep = 0; rep < 50; ++rep) {
      const int p1 = 1 + rep % 3;
      const int p2 = 1 + rep % 2;
      const ModelParameters p = testutil::random_theta(*basis, p1, p2, rng, 0.6);
      const CompleteDataEvaluator ev(p, *basis);
      std::uniform_int_distribution<int> M(0, 80);
      const PatternStats x = pattern_stats(*basis, testutil::random_pattern(*basis, M(rng), rng));
      const Vector w = randn(1 + p1 + p2, rng, 1.0);
      const Matrix H = ev.grad_hess(x, w).hess;
      Eigen::SelfAdjointEigenSolver<Matrix> es(H);
      CHECK(es.eigenvalues().maxCoeff() < 0.0);
      ++checked;
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("pure prior limit") {
  const BasisSystem& basis = default_basis();
  std::mt19937_64 rng(31);
  ModelParameters p = testutil::random_theta(basis, 2, 2, rng);
  p.tau = -200.0;
  const CompleteDataEvaluator ev(p, basis);
  const PatternStats x = pattern_stats(basis, PointPattern{});
  const Vector w = randn(5, rng);
  const Vector g = ev.grad_hess(x, w).grad;
  CHECK((g + ev.sigma_inverse() * w).norm() <= 1e-12);
}

TEST_CASE("directional derivatives of the data term") {
  const BasisSystem& basis = default_basis();
  std::mt19937_64 rng(37);
  const double h = 1e-6;
  for (int rep = 0; rep < 6; ++rep) {
    const int p1 = 2;
    const int p2 = 1 + rep % 2;
    const ModelParameters p = testutil::random_theta(basis, p1, p2, rng);
    const PatternStats x = pattern_stats(basis, testutil::random_pattern(basis, 10 + rep, rng));
    const Vector w = randn(1 + p1 + p2, rng, 0.5);
    const CompleteDataEvaluator ev(p, basis);

    const double dtau = rep % 3 == 0 ? 0.7 : 0.0;
    const Vector dw = rep % 2 == 0 ? randn(1 + p1 + p2, rng) : Vector();
    const Matrix dc = rep != 1 ? randn(basis.q1(), 1 + p1, rng) : Matrix();
    const Matrix dd = rep != 2 ? randn(basis.q2(), 1 + p2, rng) : Matrix();
    const Direction dir = ev.make_direction(dtau, dw, dc, dd);
    const GradHess tan = ev.data_tangent(x, ev.state(w), dir);

    auto moved = [&](double s) {
      ModelParameters q = p;
      q.tau += s * dtau;
      if (dc.size() > 0) {
        q.c0 += s * dc.col(0);
        q.C += s * dc.rightCols(p1);
      }
      if (dd.size() > 0) {
        q.d0 += s * dd.col(0);
        q.D += s * dd.rightCols(p2);
      }
      const CompleteDataEvaluator e2(q, basis);
      const Vector ws = dw.size() > 0 ? Vector(w + s * dw) : w;
      return e2.data_grad_hess(x, ws);
    };
    const GradHess plus = moved(h);
    const GradHess minus = moved(-h);
    const double fv = (plus.value - minus.value) / (2 * h);
    const Vector fg = (plus.grad - minus.grad) / (2 * h);
    const Matrix fh = (plus.hess - minus.hess) / (2 * h);
    CHECK(std::abs(fv - tan.value) <= 1e-6 * std::max(1.0, std::abs(fv)));
    CHECK((fg - tan.grad).norm() <= 1e-6 * std::max(1.0, fg.norm()));
    CHECK((fh - tan.hess).norm() <= 1e-6 * std::max(1.0, fh.norm()));
  }
}
