#include "stcox/basis.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <stdexcept>
#include <string>

namespace stcox {

namespace {

constexpr int kDegree = 3;
constexpr int kGramPointsPerSpan = 7;

// Signed area of a closed vertex list (positive when counterclockwise).
double signed_area(const std::vector<Point2>& poly) {
  double a = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& p = poly[i];
    const Point2& q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(const Point2& a, const Point2& b, const Point2& p, double tol) {
  if (std::abs(cross(a, b, p)) > tol) return false;
  return p.x >= std::min(a.x, b.x) - tol && p.x <= std::max(a.x, b.x) + tol &&
         p.y >= std::min(a.y, b.y) - tol && p.y <= std::max(a.y, b.y) + tol;
}

bool segments_intersect(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const double d1 = cross(c, d, a);
  const double d2 = cross(c, d, b);
  const double d3 = cross(a, b, c);
  const double d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  return on_segment(c, d, a, 0.0) || on_segment(c, d, b, 0.0) || on_segment(a, b, c, 0.0) ||
         on_segment(a, b, d, 0.0);
}

}  // namespace

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  if (n == 1) {
    weights[0] = 2.0;
    return;
  }
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    weights[i] = w;
    weights[n - 1 - i] = w;
  }
}

// ---------------------------------------------------------------------------
// Domains

void TemporalDomain::validate() const {
  if (!(t_upper > t_lower) || !std::isfinite(t_lower) || !std::isfinite(t_upper))
    throw std::invalid_argument("temporal domain: t_upper must exceed t_lower");
}

bool SpatialDomain::contains(double x, double y) const {
  if (x < x_lower || x > x_upper || y < y_lower || y > y_upper) return false;
  if (polygon.empty()) return true;
  const Point2 p{x, y};
  const std::size_t n = polygon.size();
  const double tol = 1e-12 * std::max(1.0, std::max(std::abs(x_upper - x_lower), std::abs(y_upper - y_lower)));
  for (std::size_t i = 0; i < n; ++i) {
    if (on_segment(polygon[i], polygon[(i + 1) % n], p, tol)) return true;
  }
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2& a = polygon[i];
    const Point2& b = polygon[j];
    if ((a.y > y) != (b.y > y)) {
      const double xc = (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x;
      if (x < xc) inside = !inside;
    }
  }
  return inside;
}

double SpatialDomain::area() const {
  return polygon.empty() ? rectangle_area() : std::abs(signed_area(polygon));
}

void SpatialDomain::validate() const {
  if (!(x_upper > x_lower) || !(y_upper > y_lower))
    throw std::invalid_argument("spatial domain: degenerate bounding rectangle");
  if (polygon.empty()) return;
  if (polygon.size() < 3) throw std::invalid_argument("spatial domain: polygon needs at least 3 vertices");
  if (signed_area(polygon) <= 0.0)
    throw std::invalid_argument("spatial domain: polygon must be counterclockwise with positive area");
  for (const auto& v : polygon) {
    if (v.x < x_lower || v.x > x_upper || v.y < y_lower || v.y > y_upper)
      throw std::invalid_argument("spatial domain: polygon vertex outside bounding rectangle");
  }
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;  // adjacent edges share a vertex
      if (segments_intersect(polygon[i], polygon[(i + 1) % n], polygon[j], polygon[(j + 1) % n]))
        throw std::invalid_argument("spatial domain: polygon is not simple");
    }
  }
}

// ---------------------------------------------------------------------------
// Temporal B-splines

TemporalBasis::TemporalBasis(const TemporalDomain& domain, const TemporalBasisSpec& spec)
    : domain_(domain), spec_(spec) {
  domain_.validate();
  const int k = spec_.n_interior_knots;
  if (k < 1) throw std::invalid_argument("temporal basis: need at least one interior knot");
  size_ = k + kDegree + 1;
  if (spec_.n_quad < 4 * size_)
    throw std::invalid_argument("temporal basis: n_quad must be at least 4*(n_interior_knots+4)");

  const double tl = domain_.t_lower;
  const double tu = domain_.t_upper;
  knots_.clear();
  for (int i = 0; i <= kDegree; ++i) knots_.push_back(tl);
  for (int i = 1; i <= k; ++i) knots_.push_back(tl + (tu - tl) * i / (k + 1));
  for (int i = 0; i <= kDegree; ++i) knots_.push_back(tu);

  const int spans = span_count();
  std::vector<double> gx, gw;
  gauss_legendre(kGramPointsPerSpan, gx, gw);

  gram_ = Matrix::Zero(size_, size_);
  penalty_ = Matrix::Zero(size_, size_);
  integral_ = Vector::Zero(size_);
  for (int s = 0; s < spans; ++s) {
    const double a = knots_[kDegree + s];
    const double b = knots_[kDegree + s + 1];
    const double half = 0.5 * (b - a);
    for (int g = 0; g < kGramPointsPerSpan; ++g) {
      const double t = a + half * (gx[g] + 1.0);
      const double w = half * gw[g];
      const Vector v = evaluate(t, 0);
      const Vector d2 = evaluate(t, 2);
      gram_.noalias() += w * v * v.transpose();
      penalty_.noalias() += w * d2 * d2.transpose();
      integral_ += w * v;
    }
  }
  gram_ = 0.5 * (gram_ + gram_.transpose()).eval();
  penalty_ = 0.5 * (penalty_ + penalty_.transpose()).eval();

  if (spec_.periodic) {
    periodicity_.resize(2, size_);
    periodicity_.row(0) = (evaluate(tu, 0) - evaluate(tl, 0)).transpose();
    periodicity_.row(1) = (evaluate(tu, 1) - evaluate(tl, 1)).transpose();
  } else {
    periodicity_.resize(0, size_);
  }

  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram_);
  if (eig.eigenvalues().minCoeff() <= 1e-13 * eig.eigenvalues().maxCoeff())
    throw std::invalid_argument("temporal basis: singular Gram matrix");

  const int per_span = std::max(kGramPointsPerSpan, (spec_.n_quad + spans - 1) / spans);
  std::vector<double> qx, qw;
  gauss_legendre(per_span, qx, qw);
  quad_nodes_.resize(spans * per_span);
  quad_weights_.resize(spans * per_span);
  quad_basis_.resize(spans * per_span, size_);
  int idx = 0;
  for (int s = 0; s < spans; ++s) {
    const double a = knots_[kDegree + s];
    const double b = knots_[kDegree + s + 1];
    const double half = 0.5 * (b - a);
    for (int g = 0; g < per_span; ++g, ++idx) {
      quad_nodes_[idx] = a + half * (qx[g] + 1.0);
      quad_weights_[idx] = half * qw[g];
      quad_basis_.row(idx) = evaluate(quad_nodes_[idx], 0).transpose();
    }
  }
}

int TemporalBasis::span_of(double t) const {
  const int k = spec_.n_interior_knots;
  const int last = kDegree + k;  // index of last non-empty span
  if (t >= knots_[last + 1]) return last;
  if (t <= knots_[kDegree]) return kDegree;
  auto it = std::upper_bound(knots_.begin() + kDegree, knots_.begin() + last + 1, t);
  return static_cast<int>(it - knots_.begin()) - 1;
}

Vector TemporalBasis::evaluate(double t, int derivative) const {
  if (derivative < 0 || derivative > 2) throw std::invalid_argument("temporal basis: derivative order 0..2");
  if (!domain_.contains(t)) throw std::out_of_range("temporal basis: t outside domain");
  // Derivatives of the non-zero basis functions (Piegl & Tiller, A2.3).
  const int p = kDegree;
  const int i = span_of(t);
  double ndu[p + 1][p + 1];
  double left[p + 1], right[p + 1];
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - knots_[i + 1 - j];
    right[j] = knots_[i + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  double ders[3][p + 1];
  for (int j = 0; j <= p; ++j) ders[0][j] = ndu[j][p];
  double a[2][p + 1];
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int kk = 1; kk <= 2; ++kk) {
      double d = 0.0;
      const int rk = r - kk;
      const int pk = p - kk;
      if (r >= kk) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = (rk >= -1) ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? kk - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][kk] = -a[s1][kk - 1] / ndu[pk + 1][r];
        d += a[s2][kk] * ndu[r][pk];
      }
      ders[kk][r] = d;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int kk = 1; kk <= 2; ++kk) {
    for (int j = 0; j <= p; ++j) ders[kk][j] *= factor;
    factor *= (p - kk);
  }
  Vector out = Vector::Zero(size_);
  for (int j = 0; j <= p; ++j) out[i - p + j] = ders[derivative][j];
  return out;
}

Matrix TemporalBasis::constraint_rows() const {
  Matrix rows(1 + periodicity_.rows(), size_);
  rows.row(0) = integral_.transpose();
  if (periodicity_.rows() > 0) rows.bottomRows(periodicity_.rows()) = periodicity_;
  return rows;
}

// ---------------------------------------------------------------------------
// Spatial kernels

SpatialBasis::SpatialBasis(const SpatialDomain& domain, const SpatialBasisSpec& spec)
    : domain_(domain), spec_(spec) {
  domain_.validate();
  if (spec_.centroids_x < 1 || spec_.centroids_y < 1)
    throw std::invalid_argument("spatial basis: centroid grid must be at least 1x1");
  if (spec_.n_quad_per_axis < 2) throw std::invalid_argument("spatial basis: n_quad_per_axis must be >= 2");
  const double wx = domain_.x_upper - domain_.x_lower;
  const double wy = domain_.y_upper - domain_.y_lower;
  const double dx = wx / spec_.centroids_x;
  const double dy = wy / spec_.centroids_y;
  bandwidth_ = spec_.bandwidth_factor * std::sqrt(dx * dy);
  if (!(bandwidth_ > 0.0)) throw std::invalid_argument("spatial basis: bandwidth must be positive");

  for (int j = 0; j < spec_.centroids_y; ++j) {
    for (int i = 0; i < spec_.centroids_x; ++i) {
      const double x = domain_.x_lower + (i + 0.5) * dx;
      const double y = domain_.y_lower + (j + 0.5) * dy;
      if (domain_.contains(x, y)) centroids_.push_back({x, y});
    }
  }
  if (centroids_.empty()) throw std::invalid_argument("spatial basis: every centroid falls outside the mask");

  const int n = spec_.n_quad_per_axis;
  cell_w_ = wx / n;
  cell_h_ = wy / n;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double x = domain_.x_lower + (i + 0.5) * cell_w_;
      const double y = domain_.y_lower + (j + 0.5) * cell_h_;
      if (domain_.contains(x, y)) quad_nodes_.push_back({x, y});
    }
  }
  if (quad_nodes_.empty()) throw std::invalid_argument("spatial basis: no quadrature node inside the mask");
  const int ns = static_cast<int>(quad_nodes_.size());
  const double cell_area = cell_w_ * cell_h_;
  quad_weights_ = Vector::Constant(ns, cell_area);
  if (domain_.has_mask()) quad_weights_ *= domain_.area() / quad_weights_.sum();

  const int q = size();
  norms_ = Vector::Ones(q);
  // Raw kernels first; the norms come from the same quadrature.
  Matrix raw(ns, q);
  for (int b = 0; b < ns; ++b) raw.row(b) = evaluate(quad_nodes_[b].x, quad_nodes_[b].y).transpose();
  for (int j = 0; j < q; ++j) norms_[j] = std::sqrt((raw.col(j).array().square() * quad_weights_.array()).sum());
  quad_basis_ = raw * norms_.cwiseInverse().asDiagonal();

  gram_ = quad_basis_.transpose() * quad_weights_.asDiagonal() * quad_basis_;
  gram_ = 0.5 * (gram_ + gram_.transpose()).eval();
  integral_ = quad_basis_.transpose() * quad_weights_;
  penalty_ = Matrix::Zero(q, q);
  for (int b = 0; b < ns; ++b) {
    const auto h = second_partials(quad_nodes_[b].x, quad_nodes_[b].y);
    const double w = quad_weights_[b];
    penalty_.noalias() += w * (h.row(0).transpose() * h.row(0) + 2.0 * h.row(1).transpose() * h.row(1) +
                               h.row(2).transpose() * h.row(2));
  }
  penalty_ = 0.5 * (penalty_ + penalty_.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram_);
  if (eig.eigenvalues().minCoeff() <= 1e-12 * eig.eigenvalues().maxCoeff())
    throw std::invalid_argument(
        "spatial basis: singular Gram matrix; centroids too close for the bandwidth, use a larger spacing or "
        "smaller bandwidth factor");
}

Vector SpatialBasis::evaluate(double x, double y) const {
  const int q = size();
  Vector out(q);
  const double inv2h2 = 1.0 / (2.0 * bandwidth_ * bandwidth_);
  for (int j = 0; j < q; ++j) {
    const double ex = x - centroids_[j].x;
    const double ey = y - centroids_[j].y;
    out[j] = std::exp(-(ex * ex + ey * ey) * inv2h2) / norms_[j];
  }
  return out;
}

Eigen::Matrix<double, 3, Eigen::Dynamic> SpatialBasis::second_partials(double x, double y) const {
  const int q = size();
  Eigen::Matrix<double, 3, Eigen::Dynamic> out(3, q);
  const double h2 = bandwidth_ * bandwidth_;
  const double h4 = h2 * h2;
  for (int j = 0; j < q; ++j) {
    const double ex = x - centroids_[j].x;
    const double ey = y - centroids_[j].y;
    const double g = std::exp(-(ex * ex + ey * ey) / (2.0 * h2)) / norms_[j];
    out(0, j) = g * (ex * ex / h4 - 1.0 / h2);
    out(1, j) = g * ex * ey / h4;
    out(2, j) = g * (ey * ey / h4 - 1.0 / h2);
  }
  return out;
}

// ---------------------------------------------------------------------------

BasisSystem::BasisSystem(const BasisSpec& spec)
    : spec_(spec),
      temporal_(spec.temporal_domain, spec.temporal),
      spatial_(spec.spatial_domain, spec.spatial) {
  temporal_null_ = constraint_nullspace(temporal_.constraint_rows());
  spatial_null_ = constraint_nullspace(spatial_.constraint_rows());
}

NullspaceResult constraint_nullspace_ex(const Matrix& rows) {
  const Eigen::Index q = rows.cols();
  NullspaceResult out;
  if (rows.rows() == 0 || rows.cwiseAbs().maxCoeff() == 0.0) {
    out.basis = Matrix::Identity(q, q);
    out.rank = 0;
    out.dropped_rows = static_cast<int>(rows.rows());
    return out;
  }
  Eigen::JacobiSVD<Matrix> svd(rows, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double thresh = 1e-10 * sv[0];
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > thresh) ++rank;
  out.rank = rank;
  out.dropped_rows = static_cast<int>(rows.rows()) - rank;
  if (out.dropped_rows > 0)
    std::clog << "warning: constraint_nullspace dropped " << out.dropped_rows << " dependent constraint row(s)\n";
  out.basis = svd.matrixV().rightCols(q - rank);
  for (Eigen::Index j = 0; j < out.basis.cols(); ++j) {
    Eigen::Index imax = 0;
    out.basis.col(j).cwiseAbs().maxCoeff(&imax);
    if (out.basis(imax, j) < 0) out.basis.col(j) *= -1.0;
  }
  return out;
}

Matrix constraint_nullspace(const Matrix& rows) { return constraint_nullspace_ex(rows).basis; }

}  // namespace stcox
