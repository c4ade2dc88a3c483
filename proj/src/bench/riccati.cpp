#include "gpcert/bench/riccati.hpp"

#include <Eigen/Eigenvalues>

namespace gpcert::bench {

MatrixXd solve_care(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                    const MatrixXd& R) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != B.cols() || R.cols() != B.cols()) {
    throw UsageError("solve_care: dimension mismatch");
  }

  const MatrixXd Rinv = R.inverse();
  MatrixXd H(2 * n, 2 * n);
  H.topLeftCorner(n, n) = A;
  H.topRightCorner(n, n) = -B * Rinv * B.transpose();
  H.bottomLeftCorner(n, n) = -Q;
  H.bottomRightCorner(n, n) = -A.transpose();

  Eigen::ComplexEigenSolver<MatrixXd> es(H);
  if (es.info() != Eigen::Success) {
    throw SetupError("solve_care: Hamiltonian eigendecomposition failed");
  }

  // Stack the eigenvectors of the n stable eigenvalues; P = X2 X1^{-1}.
  Eigen::MatrixXcd basis(2 * n, n);
  Eigen::Index found = 0;
  for (Eigen::Index k = 0; k < 2 * n && found < n; ++k) {
    if (es.eigenvalues()[k].real() < 0.0) {
      basis.col(found++) = es.eigenvectors().col(k);
    }
  }
  if (found != n) {
    throw SetupError("solve_care: stable subspace has wrong dimension");
  }

  const Eigen::MatrixXcd X1 = basis.topRows(n);
  const Eigen::MatrixXcd X2 = basis.bottomRows(n);
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(X1);
  if (!lu.isInvertible()) {
    throw SetupError("solve_care: stable subspace is degenerate");
  }
  MatrixXd P = (X2 * lu.inverse()).real();
  P = 0.5 * (P + P.transpose()).eval();

  const MatrixXd residual =
      A.transpose() * P + P * A - P * B * Rinv * B.transpose() * P + Q;
  if (residual.cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, P.cwiseAbs().maxCoeff())) {
    throw SetupError("solve_care: residual too large");
  }
  Eigen::LLT<MatrixXd> llt(P);
  if (llt.info() != Eigen::Success) {
    throw SetupError("solve_care: solution is not positive definite");
  }
  return P;
}

MatrixXd lqr_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                  const MatrixXd& R) {
  const MatrixXd P = solve_care(A, B, Q, R);
  return R.inverse() * B.transpose() * P;
}

}  // namespace gpcert::bench
