#pragma once

/// @file
/// Linearized frequency model: Kron reduction onto inertia buses, the
/// continuous state-space model and its zero-order-hold discretization.
///
/// State ordering is x = [Δθ; Δω; Δp_sec (IBRs); Δp_slow (SGs)], input u is
/// the secondary power reference of the device at each inertia bus, and the
/// disturbance Δp_dist enters the swing equation of each inertia bus.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddfc/common/json.h"
#include "ddfc/grid/case.h"

namespace ddfc::grid {

struct ReducedNetwork {
  Eigen::MatrixXd J;       ///< N_I × N_I effective susceptance
  Eigen::MatrixXd L;       ///< N_I × N_L load mapping B_NL B_LL⁻¹
  Eigen::MatrixXd F;       ///< N_L × N_I angle mapping −B_LL⁻¹ B_LN
  Eigen::MatrixXd D_tilde; ///< D − L diag(μ) F
};

/// Throws NumericalError when B_LL is singular.
ReducedNetwork KronReduce(const GridCase& grid_case);

/// Named slices of the state vector and device bookkeeping.
struct StateMap {
  int n_inertia = 0;
  int n_ibr = 0;
  int n_sg = 0;
  /// Per inertia bus: position among IBRs or SGs (−1 when not that kind).
  std::vector<int> ibr_index;
  std::vector<int> sg_index;

  int num_states() const { return 2 * n_inertia + n_ibr + n_sg; }
  int theta(int bus) const { return bus; }
  int omega(int bus) const { return n_inertia + bus; }
  int p_sec(int ibr) const { return 2 * n_inertia + ibr; }
  int p_slow(int sg) const { return 2 * n_inertia + n_ibr + sg; }
  /// Device state of the unit at an inertia bus.
  int device_state(int bus) const;
  /// States owned by the agent at an inertia bus: θ, ω and the device state.
  std::vector<int> agent_states(int bus) const;
  bool is_sg(int bus) const { return sg_index[bus] >= 0; }

  static StateMap FromCase(const GridCase& grid_case);
  Json ToJson() const;
  static StateMap FromJson(const Json& j);
};

struct ContinuousModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd Bd;
  StateMap state_map;
};

ContinuousModel BuildContinuous(const GridCase& grid_case, const ReducedNetwork& net);
inline ContinuousModel BuildContinuous(const GridCase& grid_case) {
  return BuildContinuous(grid_case, KronReduce(grid_case));
}

struct LtiModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd Bd;
  double Ts = 1.0;
  StateMap state_map;
  Eigen::MatrixXd Ac;
  Eigen::MatrixXd Bc;
  Eigen::MatrixXd Bcd;

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  Json ToJson() const;
  static LtiModel FromJson(const Json& j);
};

/// Exact discretization for piecewise-constant inputs via the exponential
/// of the augmented matrix [[Ac, Bc, Bcd], [0, 0, 0]]·Ts.
LtiModel DiscretizeZoh(const Eigen::MatrixXd& Ac, const Eigen::MatrixXd& Bc,
                       const Eigen::MatrixXd& Bcd, double Ts);
LtiModel DiscretizeZoh(const ContinuousModel& model, double Ts);

/// The Laplacian coupling makes a uniform angle shift an equilibrium, so A
/// always has the eigenvalue 1 along [1; 0; 0; 0]. Stability of the
/// frequency dynamics is judged on the quotient that removes this mode.
struct StabilityReport {
  double spectral_radius = 0.0;          ///< ρ(A)
  double reduced_spectral_radius = 0.0;  ///< ρ of A on the quotient
  bool common_mode_invariant = false;    ///< A·[1;0;0;0] = [1;0;0;0]
  bool stable = false;  ///< reduced radius < 1 (or ρ(A) < 1 if no such mode)
};

StabilityReport AnalyzeOpenLoop(const LtiModel& model);

/// Frequency offset reached after a constant injection ε (sum over buses)
/// with no secondary control: ε / (Σd + Σμ + Σ_SG k).
double DroopFrequencyOffset(const GridCase& grid_case, double total_injection);

double SpectralRadius(const Eigen::MatrixXd& a);

}  // namespace ddfc::grid
