#pragma once

#include <Eigen/Dense>
#include <vector>

namespace jumplab::matops {

// Dense symmetric matrix with single-triangle storage, so symmetry holds by
// construction rather than by tolerance.
class SymmetricMatrix {
 public:
  explicit SymmetricMatrix(int dim);
  static SymmetricMatrix identity(int dim);
  static SymmetricMatrix diagonal(const Eigen::VectorXd& d);
  // Averages the two triangles; throws precondition_error if they disagree
  // by more than sym_tol * max(1, |M|_HS).
  static SymmetricMatrix from_dense(const Eigen::MatrixXd& m,
                                    double sym_tol = 1e-9);

  int dim() const { return dim_; }
  double operator()(int i, int j) const { return tri_[index(i, j)]; }
  double& at(int i, int j) { return tri_[index(i, j)]; }

  Eigen::MatrixXd dense() const;
  // Eigenvalues sorted ascending.
  Eigen::VectorXd eigenvalues() const;

 private:
  std::size_t index(int i, int j) const {
    if (i < j) std::swap(i, j);
    return static_cast<std::size_t>(i) * (i + 1) / 2 + j;
  }
  int dim_;
  std::vector<double> tri_;  // lower triangle, row-major
};

double hs_norm(const Eigen::MatrixXd& m);
double hs_norm(const SymmetricMatrix& m);

// Default clip tolerance for the PSD square root: eigenvalues in
// [-clip_tol, 0) are treated as exact zeros. sigma*sigma^T - lambda2*I sits
// at the PSD boundary when the ellipticity constant is tight.
double default_clip_tol(double hs_norm_of_m);

// Unique symmetric PSD S with S*S = M (after clipping); throws not_psd_error
// when an eigenvalue is below -clip_tol.
SymmetricMatrix sqrt_psd(const SymmetricMatrix& m, double clip_tol);
SymmetricMatrix sqrt_psd(const SymmetricMatrix& m);

// Same contract on plain dense symmetric input (used for the 2d x 2d coupled
// covariance blocks); has a closed-form fast path for 1x1 / strictly PSD 2x2.
Eigen::MatrixXd sqrt_psd_dense(const Eigen::MatrixXd& m, double clip_tol);

// sqrt_psd(sigma * sigma^T - lambda2 * I); a not_psd_error here signals that
// the claimed ellipticity constant lambda2 fails at this point.
SymmetricMatrix sigma_lambda(const Eigen::MatrixXd& sigma, double lambda2);

struct SqrtGapResult {
  double lhs = 0.0;  // |A - B|_HS
  double rhs = 0.0;  // |A_lambda - B_lambda|_HS, A_lambda = sqrt(A^2 - lambda I)
  bool holds = false;
};

// Norm gap for commuting SPD pairs with eigenvalues >= sqrt(lambda):
// |A - B| <= |A_lambda - B_lambda|. Non-commuting or under-elliptic inputs
// are rejected (the comparison is only proved via simultaneous
// diagonalization).
SqrtGapResult sqrt_gap(const SymmetricMatrix& a, const SymmetricMatrix& b,
                       double lambda);

// Both sides of the trace identity behind sqrt_gap:
// |A-B|^2 - |A_l-B_l|^2  ==  2*(tr(A_l B_l) - tr(A B) + lambda*d).
struct TraceIdentity {
  double norm_side = 0.0;
  double trace_side = 0.0;
};
TraceIdentity sqrt_gap_trace_identity(const SymmetricMatrix& a,
                                      const SymmetricMatrix& b, double lambda);

}  // namespace jumplab::matops
