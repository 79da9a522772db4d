#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ddfc/common/json.h"
#include "ddfc/grid/case.h"
#include "ddfc/grid/model.h"

namespace ddfc::synth {

struct WeightConfig {
  double q_ia_scale = 0.2;  ///< angle (frequency-integral) penalty
  double q2_scale = 0.8;    ///< frequency penalty
  double r_bar = 1e3;       ///< cap on input weights
  double jitter = 1e-9;     ///< added to the angle block before factoring
  std::vector<int> penalized_lines;  ///< indices into GridCase::lines
};

/// Performance output e = C_e x + D_eu u with C_e = [Q_r; 0],
/// D_eu = [0; R_r], Q = Q_rᵀQ_r, R = R_rᵀR_r.
struct Weights {
  Eigen::MatrixXd Ce;
  Eigen::MatrixXd Deu;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::VectorXd alpha;  ///< participation factors, empty if R was given
  double jitter = 0.0;

  int outputs() const { return static_cast<int>(Ce.rows()); }
  Json ToJson() const;
  static Weights FromJson(const Json& j);
};

/// r_i = min(1/α_i, r̄) with α = reserves / Σ reserves;
/// Q = diag(Q₁ + Q_IA, Q₂, 0), Q₁ = Q_{1,r}ᵀQ_{1,r}, Q_{1,r} = −T_p B_ℓ T_ℓ [I; F].
Weights BuildWeights(const grid::GridCase& grid_case, const Eigen::VectorXd& reserves,
                     const WeightConfig& config = {});

/// Factors given Q ⪰ 0 and R ≻ 0. Q_r keeps only the range of Q, so zero
/// blocks of Q stay exactly unpenalized.
Weights WeightsFromQR(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

}  // namespace ddfc::synth
