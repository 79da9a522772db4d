#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddfc/common/json.h"
#include "ddfc/grid/model.h"
#include "ddfc/grid/simulate.h"

namespace ddfc::data {

/// Input/state snapshots of one or more experiments, X⁺ = X shifted by one
/// step within each trajectory.
struct DataSet {
  Eigen::MatrixXd U;      ///< m × T
  Eigen::MatrixXd X;      ///< n × T
  Eigen::MatrixXd Xplus;  ///< n × T
  Eigen::MatrixXd A_known;  ///< n × n, empty means zero
  Eigen::MatrixXd B_known;  ///< n × m, empty means zero

  /// Energy bound on the process noise w^k entering x^{k+1} = Ψ z^k + w^k,
  /// summed over the T transitions. Used directly by the data multiplier.
  double d_bar = 0.0;
  /// Per-state split Σ_k (w_i^k)² of the bound before inflation; empty when
  /// unknown.
  Eigen::VectorXd noise_energy;
  /// Σ_k ‖Δp_dist^k‖² of the injected power disturbance (diagnostic).
  double disturbance_energy = 0.0;
  double inflation = 1.0;

  double Ts = 1.0;
  std::uint64_t seed = 0;
  int trajectories = 1;

  int n() const { return static_cast<int>(X.rows()); }
  int m() const { return static_cast<int>(U.rows()); }
  int transitions() const { return static_cast<int>(X.cols()); }
  /// State samples across all trajectories, counting each final state.
  int samples() const { return transitions() + trajectories; }

  /// Z = [X; U].
  Eigen::MatrixXd Z() const;
  /// W = X⁺ − A′X − B′U.
  Eigen::MatrixXd W() const;

  void Validate() const;
  Json MetaJson() const;
};

/// i.i.d. uniform samples on [−amplitude, amplitude], m × length.
Eigen::MatrixXd GeneratePeSignal(int m, int length, double amplitude, std::uint64_t seed);

struct CollectOptions {
  double inflation = 1.0;      ///< multiplies the exact noise energy
  Eigen::VectorXd x0;          ///< empty means the equilibrium
  bool require_stable = true;  ///< refuse open-loop unstable plants
};

/// Runs the open-loop experiment u^k = signal(:, k) and assembles the data
/// matrices. The noise bound is the exact energy of B_d Δp_dist^k.
DataSet Collect(const grid::LtiModel& model, const Eigen::MatrixXd& signal,
                const grid::DisturbanceSpec& disturbance, const CollectOptions& options = {});
DataSet Collect(const grid::LtiModel& model, const Eigen::MatrixXd& signal,
                const Eigen::MatrixXd& disturbance, const CollectOptions& options = {});

/// Several short experiments from random initial states, concatenated.
/// Short runs keep the free bus-angle mode from drifting, and random starts
/// excite the stiff inter-bus angle differences that probing alone barely
/// moves.
struct ExperimentDesign {
  int trajectories = 40;
  int length = 10;                ///< transitions per trajectory
  double probe_amplitude = 1.0;   ///< uniform input probe on [−a, a]
  double x0_amplitude = 1.0;      ///< x0 uniform on [−a, a]ⁿ; 0 starts at rest
  double noise_amplitude = 1e-4;  ///< uniform d^k at every inertia bus
  double inflation = 1.0;
  std::uint64_t seed = 1;

  void Validate() const;
  Json ToJson() const;
  static ExperimentDesign FromJson(const Json& j);
};

DataSet CollectExperiments(const grid::LtiModel& model, const ExperimentDesign& design);

struct PersistencyReport {
  int rank = 0;
  int required = 0;
  double sigma_max = 0.0;
  double sigma_min = 0.0;  ///< smallest of the first `required` singular values
  bool pass = false;
};

/// rank(Z) with threshold 1e-8·σ_max; passes iff rank = n + m.
PersistencyReport CheckPersistency(const DataSet& data);

/// Column-wise concatenation; noise bounds add.
DataSet Concatenate(const std::vector<DataSet>& sets);

/// U.csv, X.csv, Xplus.csv (one row per transition) and meta.json.
void SaveBundle(const DataSet& data, const std::string& dir);
DataSet LoadBundle(const std::string& dir);

}  // namespace ddfc::data
