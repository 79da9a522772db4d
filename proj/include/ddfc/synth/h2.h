#pragma once

#include <Eigen/Dense>

namespace ddfc::synth {

/// Solves A P Aᵀ − P + Q = 0 for Schur-stable A.
Eigen::MatrixXd DiscreteLyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

/// Squared H2 norm of x⁺ = (A + BK)x + B_d d, e = (C_e + D_eu K)x:
/// trace(C_cl P_c C_clᵀ) with P_c the controllability Gramian. Throws
/// NumericalError when A + BK is not Schur stable.
double ClosedLoopH2Squared(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Bd, const Eigen::MatrixXd& Ce,
                           const Eigen::MatrixXd& Deu, const Eigen::MatrixXd& K);

}  // namespace ddfc::synth
