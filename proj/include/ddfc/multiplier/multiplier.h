#pragma once

#include <Eigen/Dense>

#include "ddfc/common/json.h"
#include "ddfc/data/dataset.h"

namespace ddfc::multiplier {

/// Quadratic-constraint bases over [Ψ I]: every system matrix Ψ = [A B]
/// consistent with the information satisfies [Ψ I]·base·[Ψ I]ᵀ ⪰ 0.
/// Both are stored without their scalar multipliers τ_d, τ_pr.
struct MultiplierTemplate {
  int n = 0;
  int m = 0;
  Eigen::MatrixXd learned_base;  ///< (2n+m)², empty when inactive
  Eigen::MatrixXd prior_base;    ///< (2n+m)², empty when inactive
  double psi_bar = 0.0;

  bool use_learned() const { return learned_base.size() != 0; }
  bool use_prior() const { return prior_base.size() != 0; }
  int dim() const { return 2 * n + m; }
  Json ToJson() const;
};

/// [[−ZZᵀ, ZWᵀ], [WZᵀ, d̄I − WWᵀ]].
Eigen::MatrixXd BuildLearned(const data::DataSet& data);

/// blkdiag(−I_{n+m}, ψ̄ I_n) encoding ΨΨᵀ ⪯ ψ̄ I.
Eigen::MatrixXd BuildPrior(int n, int m, double psi_bar);

/// τ_d·learned + τ_pr·prior; either base may be empty.
Eigen::MatrixXd Combine(const Eigen::MatrixXd& learned, const Eigen::MatrixXd& prior,
                        double tau_d, double tau_pr);

/// Learned part always; prior part when psi_bar > 0.
MultiplierTemplate MakeTemplate(const data::DataSet& data, double psi_bar = 0.0);

/// λ_min([Ψ I]·base·[Ψ I]ᵀ); nonnegative iff Ψ satisfies the constraint.
double ConstraintMargin(const Eigen::MatrixXd& base, const Eigen::MatrixXd& psi);

}  // namespace ddfc::multiplier
