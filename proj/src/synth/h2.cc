#include "ddfc/synth/h2.h"

#include <fmt/format.h>

#include "ddfc/common/errors.h"
#include "ddfc/grid/model.h"

namespace ddfc::synth {

using Eigen::MatrixXd;

MatrixXd DiscreteLyapunov(const MatrixXd& A, const MatrixXd& Q) {
  const auto n = A.rows();
  if (A.cols() != n || Q.rows() != n || Q.cols() != n) {
    throw ConfigError("DiscreteLyapunov: dimension mismatch");
  }
  if (n == 0) return MatrixXd(0, 0);
  const double rho = grid::SpectralRadius(A);
  if (!(rho < 1.0)) {
    throw NumericalError(fmt::format("Lyapunov equation needs a stable matrix (spectral radius {})",
                                     rho));
  }
  MatrixXd p;
  if (n <= 80) {
    // (I − A ⊗ A) vec(P) = vec(Q), column-major vec.
    const auto nn = n * n;
    MatrixXd k = MatrixXd::Identity(nn, nn);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        k.block(i * n, j * n, n, n) -= A(i, j) * A;
      }
    }
    const Eigen::VectorXd vq = Eigen::Map<const Eigen::VectorXd>(Q.data(), nn);
    const Eigen::VectorXd vp = k.partialPivLu().solve(vq);
    p = Eigen::Map<const MatrixXd>(vp.data(), n, n);
  } else {
    // Squared Smith iteration: P_{k+1} = P_k + A_k P_k A_kᵀ, A_{k+1} = A_k².
    p = Q;
    MatrixXd ak = A;
    for (int it = 0; it < 200; ++it) {
      const MatrixXd inc = ak * p * ak.transpose();
      p += inc;
      ak = ak * ak;
      if (inc.norm() <= 1e-16 * p.norm()) break;
    }
  }
  return 0.5 * (p + p.transpose());
}

double ClosedLoopH2Squared(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Bd,
                           const MatrixXd& Ce, const MatrixXd& Deu, const MatrixXd& K) {
  const MatrixXd acl = A + B * K;
  const MatrixXd ccl = Ce + Deu * K;
  const MatrixXd pc = DiscreteLyapunov(acl, Bd * Bd.transpose());
  return (ccl * pc * ccl.transpose()).trace();
}

}  // namespace ddfc::synth
