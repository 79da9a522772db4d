#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddfc/common/json.h"
#include "ddfc/data/dataset.h"
#include "ddfc/grid/case.h"
#include "ddfc/grid/model.h"
#include "ddfc/grid/simulate.h"
#include "ddfc/harness/ieee39.h"
#include "ddfc/synth/structure.h"
#include "ddfc/synth/synthesis.h"
#include "ddfc/synth/weights.h"
#include "ddfc/topo/topology.h"

namespace ddfc::harness {

struct StepSpec {
  int bus = 31;             ///< bus label (case numbering)
  double magnitude = -2.0;  ///< p.u.
  int step = 10;
};

struct ExperimentConfig {
  std::string case_path;  ///< empty: generate the 39-bus case from `seed`
  std::uint64_t seed = 1;
  CaseBounds bounds;
  double Ts = 1.0;
  data::ExperimentDesign collection;  ///< its seed is replaced by `seed`
  StepSpec step;
  int activation_step = 25;
  int horizon = 300;
  int stochastic_horizon = 500;
  double stochastic_amplitude = 0.5;
  /// Reserves the weights are built from; empty means 1 p.u. per device.
  Eigen::VectorXd reserves;
  /// Reserves that bound the devices in the saturation and stochastic runs;
  /// empty means equal to `reserves`.
  Eigen::VectorXd actual_reserves;
  synth::WeightConfig weights;
  std::vector<double> sweep_costs{0.0, 0.5, 1.0, 1.5, 2.0, 3.0};
  double big_m = 1e8;
  double psi_bar = 0.0;  ///< 0 disables the norm-bound prior
  double bisection_tol = 1e-2;
  double level_time_limit = 150.0;  ///< seconds per sweep level
  int node_budget = 200;
  int max_swap_solves = 60;
  bool verbose = false;

  void Validate() const;
  Json ToJson() const;
  /// Missing keys keep their defaults.
  static ExperimentConfig FromJson(const Json& j);
};

/// Believed reserves of 1 p.u. everywhere, but the first inverter (bus 30)
/// holds 0.05 p.u. and the SG (bus 31) 0.3 p.u.
Eigen::VectorXd MismatchedIeee39Reserves();

/// Trajectory summary. Recovery counts steps from activation until every
/// |Δω| stays within 10 % of |nadir|.
struct Metrics {
  double nadir = 0.0;
  std::optional<int> recovery_steps;  ///< only when nadir < 0 and reached
  double steady_state_error = 0.0;    ///< max |Δω| over the last 50 states
  double trailing_mean_abs = 0.0;     ///< mean |Δω| over the last 100 states
  double peak_after_activation = 0.0; ///< max Δω from activation on
  bool overshoot = false;             ///< Δω exceeds 10 % of |nadir| upwards
  std::optional<double> closed_loop_h2_sq;
  std::optional<int> link_count;
  std::optional<double> gamma;
  std::optional<double> objective;

  Json ToJson() const;
};

/// omega: N_I × (steps + 1) frequency deviations.
Metrics ComputeMetrics(const Eigen::MatrixXd& omega, int activation_step,
                       int steady_window = 50, int trailing_window = 100);

/// Δω rows of a trajectory.
Eigen::MatrixXd FrequencyDeviations(const grid::Trajectory& t, const grid::StateMap& map);

/// Everything the experiments share for one case and reserve vector.
struct Prepared {
  grid::GridCase grid;
  Json case_json;
  grid::LtiModel model;
  data::DataSet data;
  synth::Weights weights;
  synth::SynthesisSpec spec;
  synth::AgentPartition partition;
};

grid::GridCase LoadOrBuildCase(const ExperimentConfig& config, Json* case_json = nullptr);

/// Case → model → data → weights (from `config.reserves`).
Prepared Prepare(const ExperimentConfig& config);
/// Same model and data with weights built from other reserves.
Prepared Reweight(const Prepared& base, const ExperimentConfig& config,
                  const Eigen::VectorXd& reserves);

synth::BisectionOptions BisectionFor(const ExperimentConfig& config);

/// Minimum-γ controller with the given structure (dense when empty).
synth::SynthesisResult Design(const Prepared& p, const ExperimentConfig& config,
                              const std::optional<synth::Adjacency>& delta = std::nullopt);

struct ExperimentRun {
  grid::Trajectory trajectory;
  Metrics metrics;
  /// Saturation runs: the actual reserves cannot cover the step.
  bool reserve_shortfall = false;
  bool diverged = false;  ///< the state became non-finite; no trajectory
};

/// Step at `config.step`, feedback from `config.activation_step`, no
/// saturation. `magnitude_scale` multiplies the step.
ExperimentRun RunStepExperiment(const Prepared& p, const Eigen::MatrixXd& K,
                                const ExperimentConfig& config, double magnitude_scale = 1.0);

/// Same step with inputs clamped to `actual` reserves (SG limit reduced by
/// its primary output).
ExperimentRun RunSaturationExperiment(const Prepared& p, const Eigen::MatrixXd& K,
                                      const ExperimentConfig& config,
                                      const Eigen::VectorXd& actual);

/// Step plus i.i.d. uniform disturbance at every inertia bus, saturation on.
/// `control = false` keeps the secondary loop open throughout.
ExperimentRun RunStochasticExperiment(const Prepared& p, const Eigen::MatrixXd& K,
                                      const ExperimentConfig& config,
                                      const Eigen::VectorXd& actual, std::uint64_t noise_seed,
                                      bool control = true);

struct TradeoffRow {
  double c = 0.0;
  bool feasible = false;
  std::string status;
  int links = 0;
  bool optimal = false;
  double objective = 0.0;
  double bound = 0.0;
  double gamma = 0.0;
  double h2_sq = 0.0;
  double max_forbidden_gain = 0.0;
  double topo_seconds = 0.0;
  double synth_seconds = 0.0;
  synth::Adjacency delta;
  Eigen::MatrixXd K;

  Json ToJson() const;
};

/// Per cost level: topology, structured minimum-γ synthesis, closed-loop
/// H2². Infeasible levels are recorded and the sweep continues.
std::vector<TradeoffRow> RunTradeoffSweep(const Prepared& p, const ExperimentConfig& config);

/// step, then one column per inertia bus labelled by bus number.
void WriteFrequencyCsv(const std::string& path, const grid::Trajectory& t,
                       const grid::StateMap& map, const grid::GridCase& grid_case);
/// step, then one column per input.
void WriteInputCsv(const std::string& path, const grid::Trajectory& t,
                   const grid::GridCase& grid_case);
void WriteTradeoffCsv(const std::string& path, const std::vector<TradeoffRow>& rows);
/// gnuplot script plotting freq_/input_ CSVs for the tags and tradeoff.csv
/// when present.
void WriteGnuplotScript(const std::string& path, const std::vector<std::string>& tags,
                        bool tradeoff, int n_inertia);

}  // namespace ddfc::harness
