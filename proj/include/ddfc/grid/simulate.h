#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ddfc/common/errors.h"
#include "ddfc/grid/case.h"
#include "ddfc/grid/model.h"

namespace ddfc::grid {

/// Thrown when a simulated state becomes non-finite.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, int step) : NumericalError(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct StepDisturbance {
  int bus = 0;             ///< internal inertia-bus index
  double magnitude = 0.0;  ///< p.u., held from start_step on
  int start_step = 0;
};

/// Δp_dist^k = ε^k + d^k with step components ε and i.i.d. uniform d on
/// [−a, a] at every inertia bus.
struct DisturbanceSpec {
  std::vector<StepDisturbance> steps;
  double stochastic_amplitude = 0.0;
  std::uint64_t seed = 0;
};

struct DisturbanceSequence {
  Eigen::MatrixXd total;       ///< N_I × steps
  Eigen::MatrixXd stochastic;  ///< the d^k part alone
};

DisturbanceSequence GenerateDisturbance(const DisturbanceSpec& spec, int n_inertia,
                                        int steps);

/// Per-input clamp. SG limits shrink by the unit's current primary output
/// so primary plus secondary never exceeds the reserve; the remaining range
/// always contains 0.
struct Saturation {
  Eigen::VectorXd upper;
  Eigen::VectorXd lower;
  struct SgUnit {
    int input = 0;
    int sg = 0;  ///< position among SG states
    double k = 0.0;
    double lambda = 0.0;
    double nu = 0.0;
  };
  std::vector<SgUnit> sg_units;

  /// Symmetric limits ±reserve; SG units take their governor data from the
  /// case so their primary output can be tracked.
  static Saturation FromReserves(const GridCase& grid_case, const Eigen::VectorXd& reserves);
};

struct InputPolicy {
  Eigen::MatrixXd open_loop;  ///< m × steps; empty means zero
  Eigen::MatrixXd K;          ///< m × n; empty means no feedback
  int activation_step = 0;    ///< feedback acts for k ≥ activation_step
  std::optional<Saturation> saturation;

  static InputPolicy OpenLoop(const Eigen::MatrixXd& u);
  static InputPolicy Feedback(const Eigen::MatrixXd& K, int activation_step = 0);
};

struct Trajectory {
  Eigen::MatrixXd x;     ///< n × (steps + 1)
  Eigen::MatrixXd u;     ///< m × steps, inputs actually applied
  Eigen::MatrixXd dist;  ///< N_I × steps
  double Ts = 1.0;
  int steps() const { return static_cast<int>(u.cols()); }
};

/// x^{k+1} = A x^k + B u^k + B_d Δp_dist^k.
Trajectory Simulate(const LtiModel& model, const InputPolicy& policy,
                    const Eigen::MatrixXd& disturbance, int steps,
                    const Eigen::VectorXd& x0 = {});
Trajectory Simulate(const LtiModel& model, const InputPolicy& policy,
                    const DisturbanceSpec& disturbance, int steps,
                    const Eigen::VectorXd& x0 = {});

}  // namespace ddfc::grid
