#include "ddfc/grid/simulate.h"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

namespace ddfc::grid {

using Eigen::MatrixXd;
using Eigen::VectorXd;

DisturbanceSequence GenerateDisturbance(const DisturbanceSpec& spec, int n_inertia,
                                        int steps) {
  DisturbanceSequence out;
  out.stochastic = MatrixXd::Zero(n_inertia, steps);
  if (spec.stochastic_amplitude < 0.0) {
    throw ConfigError("stochastic amplitude must be >= 0");
  }
  if (spec.stochastic_amplitude > 0.0) {
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uni(-spec.stochastic_amplitude,
                                               spec.stochastic_amplitude);
    for (int k = 0; k < steps; ++k) {
      for (int i = 0; i < n_inertia; ++i) out.stochastic(i, k) = uni(rng);
    }
  }
  out.total = out.stochastic;
  for (const StepDisturbance& s : spec.steps) {
    if (s.bus < 0 || s.bus >= n_inertia) {
      throw ConfigError(fmt::format("step disturbance at invalid bus {}", s.bus));
    }
    for (int k = std::max(0, s.start_step); k < steps; ++k) out.total(s.bus, k) += s.magnitude;
  }
  return out;
}

Saturation Saturation::FromReserves(const GridCase& gc, const VectorXd& reserves) {
  if (reserves.size() != gc.n_inertia) {
    throw ConfigError(fmt::format("{} reserves for {} devices", reserves.size(), gc.n_inertia));
  }
  Saturation s;
  s.upper = reserves;
  s.lower = -reserves;
  int sg = 0;
  for (int i = 0; i < gc.n_inertia; ++i) {
    const DeviceParams& d = gc.devices[i];
    if (!d.is_sg()) continue;
    s.sg_units.push_back(SgUnit{i, sg++, d.k, d.lambda, d.nu});
  }
  return s;
}

InputPolicy InputPolicy::OpenLoop(const MatrixXd& u) {
  InputPolicy p;
  p.open_loop = u;
  return p;
}

InputPolicy InputPolicy::Feedback(const MatrixXd& K, int activation_step) {
  InputPolicy p;
  p.K = K;
  p.activation_step = activation_step;
  return p;
}

Trajectory Simulate(const LtiModel& model, const InputPolicy& policy,
                    const MatrixXd& disturbance, int steps, const VectorXd& x0) {
  const int n = model.n();
  const int m = model.m();
  const int q = static_cast<int>(model.Bd.cols());
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (disturbance.size() != 0 && (disturbance.rows() != q || disturbance.cols() < steps)) {
    throw ConfigError(fmt::format("disturbance is {}x{}, need {}x{}", disturbance.rows(),
                                  disturbance.cols(), q, steps));
  }
  if (policy.open_loop.size() != 0 &&
      (policy.open_loop.rows() != m || policy.open_loop.cols() < steps)) {
    throw ConfigError("open-loop input has the wrong shape");
  }
  if (policy.K.size() != 0 && (policy.K.rows() != m || policy.K.cols() != n)) {
    throw ConfigError("feedback gain has the wrong shape");
  }
  Trajectory t;
  t.Ts = model.Ts;
  t.x.resize(n, steps + 1);
  t.u.resize(m, steps);
  t.dist = disturbance.size() ? MatrixXd(disturbance.leftCols(steps)) : MatrixXd::Zero(q, steps);
  if (x0.size() != 0 && x0.size() != n) throw ConfigError("x0 has the wrong size");
  t.x.col(0) = x0.size() ? x0 : VectorXd::Zero(n);

  const Saturation* sat = policy.saturation ? &*policy.saturation : nullptr;
  if (sat && (sat->upper.size() != m || sat->lower.size() != m)) {
    throw ConfigError("saturation limits have the wrong size");
  }
  // Secondary contribution to each SG's slow reheat state, tracked so the
  // primary part can be separated out.
  VectorXd sg_sec = VectorXd::Zero(sat ? static_cast<int>(sat->sg_units.size()) : 0);
  const StateMap& sm = model.state_map;

  for (int k = 0; k < steps; ++k) {
    const auto xk = t.x.col(k);
    VectorXd u = policy.open_loop.size() ? VectorXd(policy.open_loop.col(k)) : VectorXd::Zero(m);
    if (policy.K.size() && k >= policy.activation_step) u += policy.K * xk;
    if (sat) {
      VectorXd hi = sat->upper;
      VectorXd lo = sat->lower;
      for (std::size_t g = 0; g < sat->sg_units.size(); ++g) {
        const auto& unit = sat->sg_units[g];
        const int bus = unit.input;
        const double p_pri = -unit.lambda * unit.k * xk(sm.omega(bus)) +
                             (xk(sm.p_slow(unit.sg)) - sg_sec(g));
        // Remaining secondary capacity, never below zero: a governor already
        // past its reserve does not force the secondary command negative.
        hi(unit.input) = std::max(hi(unit.input) - p_pri, 0.0);
        lo(unit.input) = std::min(lo(unit.input) - p_pri, 0.0);
      }
      for (int i = 0; i < m; ++i) u(i) = std::min(std::max(u(i), lo(i)), hi(i));
      for (std::size_t g = 0; g < sat->sg_units.size(); ++g) {
        const auto& unit = sat->sg_units[g];
        const double a = std::exp(-model.Ts / unit.nu);
        sg_sec(g) = a * sg_sec(g) + (1.0 - a) * (1.0 - unit.lambda) * u(unit.input);
      }
    }
    t.u.col(k) = u;
    t.x.col(k + 1) = model.A * xk + model.B * u + model.Bd * t.dist.col(k);
    if (!t.x.col(k + 1).allFinite()) {
      throw DivergenceError(fmt::format("simulation diverged at step {}", k + 1), k + 1);
    }
  }
  return t;
}

Trajectory Simulate(const LtiModel& model, const InputPolicy& policy,
                    const DisturbanceSpec& disturbance, int steps, const VectorXd& x0) {
  const DisturbanceSequence seq =
      GenerateDisturbance(disturbance, static_cast<int>(model.Bd.cols()), steps);
  return Simulate(model, policy, seq.total, steps, x0);
}

}  // namespace ddfc::grid
