#ifndef STCOX_BASIS_HPP
#define STCOX_BASIS_HPP

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <vector>

namespace stcox {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct TemporalDomain {
  double t_lower = 0.0;
  double t_upper = 1.0;

  double length() const { return t_upper - t_lower; }
  bool contains(double t) const { return t >= t_lower && t <= t_upper; }
  void validate() const;
};

/// Rectangle with an optional polygon mask. Points on the polygon boundary
/// count as inside.
struct SpatialDomain {
  double x_lower = 0.0;
  double x_upper = 1.0;
  double y_lower = 0.0;
  double y_upper = 1.0;
  std::vector<Point2> polygon;  // empty: no mask

  bool has_mask() const { return !polygon.empty(); }
  bool contains(double x, double y) const;
  double rectangle_area() const { return (x_upper - x_lower) * (y_upper - y_lower); }
  /// |B_s|: polygon area when masked, rectangle area otherwise.
  double area() const;
  void validate() const;
};

struct TemporalBasisSpec {
  int n_interior_knots = 10;
  bool periodic = false;
  int n_quad = 77;  // total likelihood quadrature nodes, spread evenly over spans
};

struct SpatialBasisSpec {
  int centroids_x = 5;
  int centroids_y = 5;
  double bandwidth_factor = 1.0;
  int n_quad_per_axis = 60;
};

struct BasisSpec {
  TemporalDomain temporal_domain;
  SpatialDomain spatial_domain;
  TemporalBasisSpec temporal;
  SpatialBasisSpec spatial;
};

/// Cubic B-splines on a clamped, uniform knot vector.
class TemporalBasis {
 public:
  TemporalBasis(const TemporalDomain& domain, const TemporalBasisSpec& spec);

  int size() const { return size_; }
  const TemporalDomain& domain() const { return domain_; }
  const TemporalBasisSpec& spec() const { return spec_; }
  const std::vector<double>& knots() const { return knots_; }
  int span_count() const { return spec_.n_interior_knots + 1; }

  /// Values (derivative = 0), first or second derivatives at t.
  Vector evaluate(double t, int derivative = 0) const;

  const Matrix& gram() const { return gram_; }            // J_t
  const Vector& integral() const { return integral_; }    // a_t0
  const Matrix& penalty() const { return penalty_; }      // Omega_t
  /// 2 x q1 periodicity rows; empty (0 x q1) when not periodic.
  const Matrix& periodicity() const { return periodicity_; }
  /// Rows of all linear constraints on c_k: [a_t0^T; A_P].
  Matrix constraint_rows() const;

  const Vector& quad_nodes() const { return quad_nodes_; }
  const Vector& quad_weights() const { return quad_weights_; }
  /// n_t x q1 basis values at the quadrature nodes.
  const Matrix& quad_basis() const { return quad_basis_; }

 private:
  int span_of(double t) const;

  TemporalDomain domain_;
  TemporalBasisSpec spec_;
  int size_ = 0;
  std::vector<double> knots_;
  Matrix gram_;
  Vector integral_;
  Matrix penalty_;
  Matrix periodicity_;
  Vector quad_nodes_;
  Vector quad_weights_;
  Matrix quad_basis_;
};

/// Gaussian radial kernels renormalized to unit L2(B_s) norm.
class SpatialBasis {
 public:
  SpatialBasis(const SpatialDomain& domain, const SpatialBasisSpec& spec);

  int size() const { return static_cast<int>(centroids_.size()); }
  const SpatialDomain& domain() const { return domain_; }
  const SpatialBasisSpec& spec() const { return spec_; }
  const std::vector<Point2>& centroids() const { return centroids_; }
  double bandwidth() const { return bandwidth_; }
  const Vector& norms() const { return norms_; }

  Vector evaluate(double x, double y) const;
  /// Rows: d2/dx2, d2/dxdy, d2/dy2 of every basis function.
  Eigen::Matrix<double, 3, Eigen::Dynamic> second_partials(double x, double y) const;

  const Matrix& gram() const { return gram_; }          // J_s
  const Vector& integral() const { return integral_; }  // a_s0
  const Matrix& penalty() const { return penalty_; }    // Omega_s
  Matrix constraint_rows() const { return integral_.transpose(); }

  /// Midpoint nodes inside the mask; weights sum to |B_s|.
  const std::vector<Point2>& quad_nodes() const { return quad_nodes_; }
  const Vector& quad_weights() const { return quad_weights_; }
  const Matrix& quad_basis() const { return quad_basis_; }  // n_s x q2
  double cell_width() const { return cell_w_; }
  double cell_height() const { return cell_h_; }

 private:
  SpatialDomain domain_;
  SpatialBasisSpec spec_;
  std::vector<Point2> centroids_;
  double bandwidth_ = 0.0;
  Vector norms_;
  Matrix gram_;
  Vector integral_;
  Matrix penalty_;
  std::vector<Point2> quad_nodes_;
  Vector quad_weights_;
  Matrix quad_basis_;
  double cell_w_ = 0.0;
  double cell_h_ = 0.0;
};

/// Immutable after construction; safe to share across threads.
class BasisSystem {
 public:
  explicit BasisSystem(const BasisSpec& spec);

  const BasisSpec& spec() const { return spec_; }
  const TemporalBasis& temporal() const { return temporal_; }
  const SpatialBasis& spatial() const { return spatial_; }
  int q1() const { return temporal_.size(); }
  int q2() const { return spatial_.size(); }
  bool periodic() const { return spec_.temporal.periodic; }

  /// Orthonormal null-space bases of the linear coefficient constraints.
  const Matrix& temporal_nullspace() const { return temporal_null_; }
  const Matrix& spatial_nullspace() const { return spatial_null_; }

 private:
  BasisSpec spec_;
  TemporalBasis temporal_;
  SpatialBasis spatial_;
  Matrix temporal_null_;
  Matrix spatial_null_;
};

struct NullspaceResult {
  Matrix basis;       // q x (q - rank), orthonormal columns
  int rank = 0;
  int dropped_rows = 0;  // dependent constraint rows that were ignored
};

/// Null space of the constraint rows via SVD (threshold 1e-10 * sigma_max).
/// Dependent rows are dropped with a warning on std::clog.
NullspaceResult constraint_nullspace_ex(const Matrix& constraint_rows);
Matrix constraint_nullspace(const Matrix& constraint_rows);

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace stcox

#endif  // STCOX_BASIS_HPP
