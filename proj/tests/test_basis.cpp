#include "doctest.h"
#include "stcox/basis.hpp"

#include <cmath>
#include <random>

using namespace stcox;

namespace {

BasisSpec unit_spec(bool periodic = false) {
  BasisSpec spec;
  spec.temporal.periodic = periodic;
  return spec;
}

// Composite Simpson on each knot span; independent of the Gauss-Legendre path.
template <class F>
double simpson(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

Vector greville_line(const TemporalBasis& basis, double intercept, double slope) {
  const auto& k = basis.knots();
  Vector c(basis.size());
  for (int i = 0; i < basis.size(); ++i) c[i] = intercept + slope * (k[i + 1] + k[i + 2] + k[i + 3]) / 3.0;
  return c;
}

}  // namespace

TEST_CASE("temporal basis dimension and partition of unity") {
  BasisSystem sys(unit_spec());
  CHECK(sys.q1() == 14);
  CHECK(sys.temporal().integral().sum() == doctest::Approx(1.0).epsilon(1e-14));
  for (double t : {0.0, 0.123, 0.5, 0.77, 1.0}) CHECK(sys.temporal().evaluate(t).sum() == doctest::Approx(1.0));

  TemporalBasis other({2.0, 26.0}, {10, false, 77});
  CHECK(other.integral().sum() == doctest::Approx(24.0).epsilon(1e-13));
}

TEST_CASE("straight lines carry zero roughness") {
  BasisSystem sys(unit_spec());
  const auto& tb = sys.temporal();
  const Vector c = greville_line(tb, 0.3, -1.7);
  for (double t : {0.05, 0.4, 0.93}) CHECK(tb.evaluate(t).dot(c) == doctest::Approx(0.3 - 1.7 * t).epsilon(1e-12));
  CHECK(std::abs(c.dot(tb.penalty() * c)) < 1e-10 * tb.penalty().norm());
}

TEST_CASE("temporal Gram, integral and penalty agree with Simpson per span") {
  BasisSystem sys(unit_spec());
  const auto& tb = sys.temporal();
  const auto& k = tb.knots();
  Matrix gram = Matrix::Zero(14, 14);
  Matrix pen = Matrix::Zero(14, 14);
  for (int s = 0; s < tb.span_count(); ++s) {
    const double a = k[3 + s], b = k[3 + s + 1];
    const int n = 512;
    const double h = (b - a) / n;
    for (int i = 0; i <= n; ++i) {
      const double w = h / 3.0 * ((i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0));
      const Vector v = tb.evaluate(a + i * h);
      const Vector d2 = tb.evaluate(a + i * h, 2);
      gram += w * v * v.transpose();
      pen += w * d2 * d2.transpose();
    }
  }
  CHECK((gram - tb.gram()).cwiseAbs().maxCoeff() <= 1e-10 * gram.cwiseAbs().maxCoeff());
  CHECK((pen - tb.penalty()).cwiseAbs().maxCoeff() <= 1e-10 * pen.cwiseAbs().maxCoeff());
}

TEST_CASE("B-spline derivatives match finite differences") {
  BasisSystem sys(unit_spec());
  const auto& tb = sys.temporal();
  const double h = 1e-6;
  for (double t : {0.21, 0.5001, 0.87}) {
    const Vector fd1 = (tb.evaluate(t + h) - tb.evaluate(t - h)) / (2 * h);
    const Vector fd2 = (tb.evaluate(t + h, 1) - tb.evaluate(t - h, 1)) / (2 * h);
    CHECK((fd1 - tb.evaluate(t, 1)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((fd2 - tb.evaluate(t, 2)).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("zero-integral coefficients integrate to zero") {
  BasisSystem sys(unit_spec(true));
  const auto& tb = sys.temporal();
  const Matrix& N = sys.temporal_nullspace();
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 5; ++rep) {
    Vector g(N.cols());
    for (auto& x : g) x = nd(rng);
    const Vector c = N * g;
    double integral = 0.0;
    const auto& k = tb.knots();
    for (int s = 0; s < tb.span_count(); ++s)
      integral += simpson([&](double t) { return tb.evaluate(t).dot(c); }, k[3 + s], k[4 + s], 16);
    CHECK(std::abs(integral) < 1e-10);
    CHECK(tb.evaluate(0.0).dot(c) == doctest::Approx(tb.evaluate(1.0).dot(c)).epsilon(1e-10));
    CHECK(tb.evaluate(0.0, 1).dot(c) == doctest::Approx(tb.evaluate(1.0, 1).dot(c)).epsilon(1e-10));
  }
}

TEST_CASE("penalties are positive semidefinite") {
  BasisSystem sys(unit_spec());
  for (const Matrix* m : {&sys.temporal().penalty(), &sys.spatial().penalty()}) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(*m);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * eig.eigenvalues().maxCoeff());
  }
  Eigen::SelfAdjointEigenSolver<Matrix> jt(sys.temporal().gram());
  Eigen::SelfAdjointEigenSolver<Matrix> js(sys.spatial().gram());
  CHECK(jt.eigenvalues().minCoeff() > 0);
  CHECK(js.eigenvalues().minCoeff() > 0);
}

TEST_CASE("spatial kernels: 5x5 layout, unit norms, quadrature weights") {
  BasisSystem sys(unit_spec());
  const auto& sb = sys.spatial();
  CHECK(sys.q2() == 25);
  CHECK(sb.bandwidth() == doctest::Approx(0.2));
  CHECK(sb.centroids().front().x == doctest::Approx(0.1));
  for (int j = 0; j < 25; ++j) CHECK(sb.gram()(j, j) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sb.quad_weights().sum() == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(sb.quad_weights().minCoeff() > 0);
  CHECK(static_cast<int>(sb.quad_nodes().size()) == 3600);
}

TEST_CASE("kernel second partials match finite differences") {
  BasisSystem sys(unit_spec());
  const auto& sb = sys.spatial();
  const double h = 1e-4, x = 0.37, y = 0.61;
  const auto an = sb.second_partials(x, y);
  const Vector fxx = (sb.evaluate(x + h, y) - 2 * sb.evaluate(x, y) + sb.evaluate(x - h, y)) / (h * h);
  const Vector fyy = (sb.evaluate(x, y + h) - 2 * sb.evaluate(x, y) + sb.evaluate(x, y - h)) / (h * h);
  const Vector fxy = (sb.evaluate(x + h, y + h) - sb.evaluate(x + h, y - h) - sb.evaluate(x - h, y + h) +
                      sb.evaluate(x - h, y - h)) / (4 * h * h);
  CHECK((fxx - an.row(0).transpose()).cwiseAbs().maxCoeff() < 1e-4);
  CHECK((fxy - an.row(1).transpose()).cwiseAbs().maxCoeff() < 1e-4);
  CHECK((fyy - an.row(2).transpose()).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("spatial quadrature converges when the grid is doubled") {
  BasisSpec coarse = unit_spec();
  BasisSpec fine = unit_spec();
  fine.spatial.n_quad_per_axis = 120;
  BasisSystem a(coarse), b(fine);
  auto rel = [](const Matrix& x, const Matrix& y) { return (x - y).cwiseAbs().maxCoeff() / y.cwiseAbs().maxCoeff(); };
  CHECK(rel(a.spatial().gram(), b.spatial().gram()) <= 1e-4);
  CHECK(rel(a.spatial().integral(), b.spatial().integral()) <= 1e-4);
  CHECK(rel(a.spatial().penalty(), b.spatial().penalty()) <= 1e-4);
}

TEST_CASE("polygon mask restricts centroids and quadrature") {
  BasisSpec spec = unit_spec();
  spec.spatial_domain.polygon = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  spec.spatial.centroids_x = 10;
  spec.spatial.centroids_y = 10;
  BasisSystem sys(spec);
  int expected = 0;
  for (int j = 0; j < 10; ++j)
    for (int i = 0; i < 10; ++i)
      if ((i + 0.5) / 10 + (j + 0.5) / 10 <= 1.0) ++expected;
  CHECK(sys.q2() == expected);
  CHECK(sys.spatial().quad_weights().sum() == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(spec.spatial_domain.contains(0.5, 0.5));  // boundary counts as inside
  CHECK_FALSE(spec.spatial_domain.contains(0.6, 0.5));

  BasisSpec cw = unit_spec();
  cw.spatial_domain.polygon = {{0.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}};
  CHECK_THROWS_AS(BasisSystem{cw}, std::invalid_argument);
  BasisSpec bow = unit_spec();
  bow.spatial_domain.polygon = {{0.0, 0.0}, {1.0, 1.0}, {1.0, 0.0}, {0.0, 1.0}};
  CHECK_THROWS_AS(BasisSystem{bow}, std::invalid_argument);
  BasisSpec outside = unit_spec();
  outside.spatial_domain.polygon = {{0.9, 0.9}, {0.95, 0.9}, {0.95, 0.95}};
  outside.spatial.centroids_x = outside.spatial.centroids_y = 2;
  CHECK_THROWS_AS(BasisSystem{outside}, std::invalid_argument);
}

TEST_CASE("invalid configurations are rejected") {
  CHECK_THROWS_AS(TemporalBasis({1.0, 1.0}, {}), std::invalid_argument);
  CHECK_THROWS_AS(TemporalBasis({0.0, 1.0}, {0, false, 77}), std::invalid_argument);
  CHECK_THROWS_AS(TemporalBasis({0.0, 1.0}, {10, false, 20}), std::invalid_argument);
  SpatialBasisSpec zero_bw;
  zero_bw.bandwidth_factor = 0.0;
  CHECK_THROWS_AS(SpatialBasis({}, zero_bw), std::invalid_argument);
  SpatialBasisSpec crowded;
  crowded.centroids_x = crowded.centroids_y = 12;
  crowded.bandwidth_factor = 4.0;
  CHECK_THROWS_AS(SpatialBasis({}, crowded), std::invalid_argument);
}

TEST_CASE("constraint null space") {
  Matrix row(1, 2);
  row << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  const Matrix n = constraint_nullspace(row);
  REQUIRE(n.cols() == 1);
  CHECK(std::abs(std::abs(n(0, 0)) - 1.0 / std::sqrt(2.0)) < 1e-14);
  CHECK(n(0, 0) == doctest::Approx(-n(1, 0)));

  CHECK(constraint_nullspace(Matrix::Zero(2, 4)).isApprox(Matrix::Identity(4, 4)));

  BasisSystem sys(unit_spec(true));
  const Matrix rows = sys.temporal().constraint_rows();
  Eigen::FullPivLU<Matrix> lu(rows);  // independent rank oracle
  CHECK(lu.rank() == 3);
  const Matrix nt = sys.temporal_nullspace();
  CHECK(nt.cols() == 14 - 3);
  CHECK((rows * nt).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((nt.transpose() * nt - Matrix::Identity(11, 11)).cwiseAbs().maxCoeff() < 1e-12);

  Matrix dup(3, 4);
  dup << 1, 2, 3, 4, 2, 4, 6, 8, 0, 1, 0, 0;
  const auto res = constraint_nullspace_ex(dup);
  CHECK(res.rank == 2);
  CHECK(res.dropped_rows == 1);
  CHECK(res.basis.cols() == 2);
}
