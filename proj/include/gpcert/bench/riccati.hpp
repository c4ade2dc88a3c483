#pragma once

#include "gpcert/common.hpp"

namespace gpcert::bench {

// Stabilizing solution P of A'P + PA - PBR^{-1}B'P + Q = 0 via the stable
// invariant subspace of the Hamiltonian pencil.  Throws SetupError when no
// symmetric positive-definite solution with small residual exists.
MatrixXd solve_care(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                    const MatrixXd& R);

// LQR gain K = R^{-1} B' P for u = -K x.
MatrixXd lqr_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                  const MatrixXd& R);

}  // namespace gpcert::bench
