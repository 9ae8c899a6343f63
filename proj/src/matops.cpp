#include "jumplab/matops.hpp"

#include <cmath>
#include <sstream>

#include "jumplab/errors.hpp"

namespace jumplab::matops {

SymmetricMatrix::SymmetricMatrix(int dim)
    : dim_(dim), tri_(static_cast<std::size_t>(dim) * (dim + 1) / 2, 0.0) {
  if (dim < 1) throw precondition_error("SymmetricMatrix: dim must be >= 1");
}

SymmetricMatrix SymmetricMatrix::identity(int dim) {
  SymmetricMatrix m(dim);
  for (int i = 0; i < dim; ++i) m.at(i, i) = 1.0;
  return m;
}

SymmetricMatrix SymmetricMatrix::diagonal(const Eigen::VectorXd& d) {
  SymmetricMatrix m(static_cast<int>(d.size()));
  for (int i = 0; i < d.size(); ++i) m.at(i, i) = d[i];
  return m;
}

SymmetricMatrix SymmetricMatrix::from_dense(const Eigen::MatrixXd& m,
                                            double sym_tol) {
  if (m.rows() != m.cols())
    throw precondition_error("SymmetricMatrix::from_dense: not square");
  const double scale = std::max(1.0, m.norm());
  SymmetricMatrix out(static_cast<int>(m.rows()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j <= i; ++j) {
      if (std::abs(m(i, j) - m(j, i)) > sym_tol * scale) {
        std::ostringstream os;
        os << "SymmetricMatrix::from_dense: asymmetry at (" << i << "," << j
           << "): " << m(i, j) << " vs " << m(j, i);
        throw precondition_error(os.str());
      }
      out.at(i, j) = 0.5 * (m(i, j) + m(j, i));
    }
  return out;
}

Eigen::MatrixXd SymmetricMatrix::dense() const {
  Eigen::MatrixXd m(dim_, dim_);
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j <= i; ++j) m(i, j) = m(j, i) = (*this)(i, j);
  return m;
}

Eigen::VectorXd SymmetricMatrix::eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense(),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues();  // ascending
}

double hs_norm(const Eigen::MatrixXd& m) { return m.norm(); }
double hs_norm(const SymmetricMatrix& m) { return m.dense().norm(); }

double default_clip_tol(double hs_norm_of_m) {
  return 1e-10 * std::max(1.0, hs_norm_of_m);
}

Eigen::MatrixXd sqrt_psd_dense(const Eigen::MatrixXd& m, double clip_tol) {
  const int d = static_cast<int>(m.rows());
  if (d == 1) {
    const double v = m(0, 0);
    if (v < -clip_tol)
      throw not_psd_error("sqrt_psd: negative 1x1 entry", v);
    return Eigen::MatrixXd::Constant(1, 1, std::sqrt(std::max(0.0, v)));
  }
  if (d == 2) {
    // closed form when strictly PSD: S = (M + sqrt(det) I) / sqrt(tr + 2 sqrt(det))
    const double tr = m(0, 0) + m(1, 1);
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    const double disc = tr * tr - 4.0 * det;
    const double root = std::sqrt(std::max(0.0, disc));
    const double eig_min = 0.5 * (tr - root);
    if (eig_min >= 0.0 && tr > 0.0) {
      const double s = std::sqrt(std::max(0.0, det));
      const double t = std::sqrt(tr + 2.0 * s);
      Eigen::MatrixXd out = m;
      out(0, 0) += s;
      out(1, 1) += s;
      out /= t;
      return out;
    }
    if (tr == 0.0 && det == 0.0 && m(0, 1) == 0.0 && m(0, 0) == 0.0 &&
        m(1, 1) == 0.0)
      return Eigen::MatrixXd::Zero(2, 2);
    // fall through to the eigen path, which also handles the clip window
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success)
    throw precondition_error("sqrt_psd: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < d; ++i) {
    if (ev[i] < -clip_tol) {
      std::ostringstream os;
      os << "sqrt_psd: eigenvalue " << ev[i] << " below -clip_tol ("
         << -clip_tol << ")";
      throw not_psd_error(os.str(), ev[i]);
    }
    ev[i] = std::sqrt(std::max(0.0, ev[i]));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

SymmetricMatrix sqrt_psd(const SymmetricMatrix& m, double clip_tol) {
  // loose symmetrization tolerance: the product is symmetric up to rounding
  return SymmetricMatrix::from_dense(sqrt_psd_dense(m.dense(), clip_tol), 1e-9);
}

SymmetricMatrix sqrt_psd(const SymmetricMatrix& m) {
  return sqrt_psd(m, default_clip_tol(hs_norm(m)));
}

SymmetricMatrix sigma_lambda(const Eigen::MatrixXd& sigma, double lambda2) {
  if (lambda2 <= 0.0)
    throw precondition_error("sigma_lambda: lambda2 must be > 0");
  if (sigma.rows() != sigma.cols())
    throw precondition_error("sigma_lambda: sigma must be square");
  Eigen::MatrixXd a = sigma * sigma.transpose();
  a.diagonal().array() -= lambda2;
  const double tol = default_clip_tol(a.norm());
  return SymmetricMatrix::from_dense(sqrt_psd_dense(a, tol), 1e-9);
}

namespace {

void require_sqrt_gap_preconditions(const SymmetricMatrix& a,
                                    const SymmetricMatrix& b, double lambda) {
  if (lambda <= 0.0) throw precondition_error("sqrt_gap: lambda must be > 0");
  if (a.dim() != b.dim())
    throw precondition_error("sqrt_gap: dimension mismatch");
  const Eigen::MatrixXd ad = a.dense(), bd = b.dense();
  const double comm = (ad * bd - bd * ad).norm();
  const double comm_tol = 1e-9 * std::max(1e-300, ad.norm() * bd.norm());
  if (comm > comm_tol) {
    std::ostringstream os;
    os << "sqrt_gap: inputs do not commute (|AB-BA| = " << comm
       << " > " << comm_tol << ")";
    throw precondition_error(os.str());
  }
  const double floor = std::sqrt(lambda);
  const double tol = 1e-12 * std::max(1.0, floor);
  for (const auto* m : {&a, &b}) {
    const Eigen::VectorXd ev = m->eigenvalues();
    if (ev[0] < floor - tol) {
      std::ostringstream os;
      os << "sqrt_gap: eigenvalue " << ev[0] << " below sqrt(lambda) = "
         << floor;
      throw precondition_error(os.str());
    }
  }
}

SymmetricMatrix shifted_sqrt(const SymmetricMatrix& m, double lambda) {
  const Eigen::MatrixXd md = m.dense();
  Eigen::MatrixXd sq = md * md;
  sq.diagonal().array() -= lambda;
  return SymmetricMatrix::from_dense(
      sqrt_psd_dense(sq, default_clip_tol(sq.norm())), 1e-9);
}

}  // namespace

SqrtGapResult sqrt_gap(const SymmetricMatrix& a, const SymmetricMatrix& b,
                       double lambda) {
  require_sqrt_gap_preconditions(a, b, lambda);
  const SymmetricMatrix al = shifted_sqrt(a, lambda);
  const SymmetricMatrix bl = shifted_sqrt(b, lambda);
  SqrtGapResult r;
  r.lhs = (a.dense() - b.dense()).norm();
  r.rhs = (al.dense() - bl.dense()).norm();
  r.holds = r.lhs <= r.rhs + 1e-9;
  return r;
}

TraceIdentity sqrt_gap_trace_identity(const SymmetricMatrix& a,
                                      const SymmetricMatrix& b,
                                      double lambda) {
  require_sqrt_gap_preconditions(a, b, lambda);
  const Eigen::MatrixXd ad = a.dense(), bd = b.dense();
  const Eigen::MatrixXd al = shifted_sqrt(a, lambda).dense();
  const Eigen::MatrixXd bl = shifted_sqrt(b, lambda).dense();
  TraceIdentity t;
  t.norm_side = (ad - bd).squaredNorm() - (al - bl).squaredNorm();
  t.trace_side = 2.0 * ((al * bl).trace() - (ad * bd).trace() +
                        lambda * static_cast<double>(a.dim()));
  return t;
}

}  // namespace jumplab::matops
