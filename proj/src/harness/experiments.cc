#include "ddfc/harness/experiments.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "ddfc/common/csv.h"
#include "ddfc/common/errors.h"
#include "ddfc/synth/h2.h"

namespace ddfc::harness {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kRecoveryBand = 0.1;

Json WeightConfigToJson(const synth::WeightConfig& w) {
  return {{"q_ia_scale", w.q_ia_scale},
          {"q2_scale", w.q2_scale},
          {"r_bar", w.r_bar},
          {"jitter", w.jitter},
          {"penalized_lines", w.penalized_lines}};
}

synth::WeightConfig WeightConfigFromJson(const Json& j) {
  synth::WeightConfig w;
  w.q_ia_scale = j.value("q_ia_scale", w.q_ia_scale);
  w.q2_scale = j.value("q2_scale", w.q2_scale);
  w.r_bar = j.value("r_bar", w.r_bar);
  w.jitter = j.value("jitter", w.jitter);
  w.penalized_lines = j.value("penalized_lines", w.penalized_lines);
  return w;
}

VectorXd ReservesOrOnes(const VectorXd& r, int m) { return r.size() ? r : VectorXd::Ones(m); }

double Elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string Num(double v) { return fmt::format("{}", v); }

}  // namespace

void ExperimentConfig::Validate() const {
  collection.Validate();
  if (!(Ts > 0.0)) throw ConfigError("Ts must be > 0");
  if (step.step < 0) throw ConfigError("step index must be >= 0");
  if (activation_step < step.step) {
    throw ConfigError("activation step must not precede the disturbance step");
  }
  if (horizon <= activation_step || stochastic_horizon <= activation_step) {
    throw ConfigError("horizon must extend past the activation step");
  }
  if (!(stochastic_amplitude >= 0.0)) throw ConfigError("stochastic amplitude must be >= 0");
  if ((reserves.array() <= 0.0).any() || (actual_reserves.array() < 0.0).any()) {
    throw ConfigError("reserves must be positive");
  }
  for (double c : sweep_costs) {
    if (!(c >= 0.0)) throw ConfigError("sweep costs must be >= 0");
  }
  if (!(big_m > 0.0)) throw ConfigError("big-M constant must be > 0");
  if (psi_bar < 0.0) throw ConfigError("psi_bar must be >= 0");
  if (!(bisection_tol > 0.0 && bisection_tol < 1.0)) throw ConfigError("bisection tol in (0, 1)");
  if (node_budget < 1) throw ConfigError("node budget must be >= 1");
}

Json ExperimentConfig::ToJson() const {
  Json j;
  j["case_path"] = case_path;
  j["seed"] = seed;
  j["bounds"] = bounds.ToJson();
  j["Ts"] = Ts;
  j["collection"] = collection.ToJson();
  j["step"] = {{"bus", step.bus}, {"magnitude", step.magnitude}, {"step", step.step}};
  j["activation_step"] = activation_step;
  j["horizon"] = horizon;
  j["stochastic_horizon"] = stochastic_horizon;
  j["stochastic_amplitude"] = stochastic_amplitude;
  j["reserves"] = VectorToJson(reserves);
  j["actual_reserves"] = VectorToJson(actual_reserves);
  j["weights"] = WeightConfigToJson(weights);
  j["sweep_costs"] = sweep_costs;
  j["big_m"] = big_m;
  j["psi_bar"] = psi_bar;
  j["bisection_tol"] = bisection_tol;
  j["level_time_limit"] = level_time_limit;
  j["node_budget"] = node_budget;
  j["max_swap_solves"] = max_swap_solves;
  return j;
}

ExperimentConfig ExperimentConfig::FromJson(const Json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  c.case_path = j.value("case_path", c.case_path);
  c.seed = j.value("seed", c.seed);
  if (j.contains("bounds")) c.bounds = CaseBounds::FromJson(j.at("bounds"));
  c.Ts = j.value("Ts", c.Ts);
  if (j.contains("collection")) {
    Json merged = c.collection.ToJson();
    merged.update(j.at("collection"));
    c.collection = data::ExperimentDesign::FromJson(merged);
  }
  if (j.contains("step")) {
    const Json& s = j.at("step");
    c.step.bus = s.value("bus", c.step.bus);
    c.step.magnitude = s.value("magnitude", c.step.magnitude);
    c.step.step = s.value("step", c.step.step);
  }
  c.activation_step = j.value("activation_step", c.activation_step);
  c.horizon = j.value("horizon", c.horizon);
  c.stochastic_horizon = j.value("stochastic_horizon", c.stochastic_horizon);
  c.stochastic_amplitude = j.value("stochastic_amplitude", c.stochastic_amplitude);
  if (j.contains("reserves")) c.reserves = VectorFromJson(j.at("reserves"));
  if (j.contains("actual_reserves")) c.actual_reserves = VectorFromJson(j.at("actual_reserves"));
  if (j.contains("weights")) c.weights = WeightConfigFromJson(j.at("weights"));
  c.sweep_costs = j.value("sweep_costs", c.sweep_costs);
  c.big_m = j.value("big_m", c.big_m);
  c.psi_bar = j.value("psi_bar", c.psi_bar);
  c.bisection_tol = j.value("bisection_tol", c.bisection_tol);
  c.level_time_limit = j.value("level_time_limit", c.level_time_limit);
  c.node_budget = j.value("node_budget", c.node_budget);
  c.max_swap_solves = j.value("max_swap_solves", c.max_swap_solves);
  c.Validate();
  return c;
}

VectorXd MismatchedIeee39Reserves() {
  VectorXd r = VectorXd::Ones(10);
  r(0) = 0.05;
  r(1) = 0.3;
  return r;
}

// ---- Metrics ------------------------------------------------------------------

Json Metrics::ToJson() const {
  auto opt = [](const auto& v) { return v ? Json(*v) : Json(nullptr); };
  Json j;
  j["nadir"] = nadir;
  j["recovery_steps"] = opt(recovery_steps);
  j["steady_state_error"] = steady_state_error;
  j["trailing_mean_abs"] = trailing_mean_abs;
  j["peak_after_activation"] = peak_after_activation;
  j["overshoot"] = overshoot;
  j["closed_loop_h2_sq"] = opt(closed_loop_h2_sq);
  j["link_count"] = opt(link_count);
  j["gamma"] = opt(gamma);
  j["objective"] = opt(objective);
  return j;
}

Metrics ComputeMetrics(const MatrixXd& omega, int activation_step, int steady_window,
                       int trailing_window) {
  const int cols = static_cast<int>(omega.cols());
  if (cols == 0 || omega.rows() == 0) throw ConfigError("empty frequency trajectory");
  if (activation_step < 0 || activation_step >= cols) {
    throw ConfigError("activation step outside the trajectory");
  }
  Metrics m;
  m.nadir = std::min(0.0, omega.minCoeff());
  const VectorXd worst = omega.cwiseAbs().colwise().maxCoeff().transpose();
  const int sw = std::min(steady_window, cols);
  m.steady_state_error = worst.tail(sw).maxCoeff();
  const int tw = std::min(trailing_window, cols);
  m.trailing_mean_abs = omega.rightCols(tw).cwiseAbs().mean();
  m.peak_after_activation = omega.rightCols(cols - activation_step).maxCoeff();
  if (m.nadir < 0.0) {
    const double band = kRecoveryBand * std::abs(m.nadir);
    m.overshoot = m.peak_after_activation > band;
    int last_out = -1;
    for (int k = cols - 1; k >= activation_step; --k) {
      if (worst(k) > band) {
        last_out = k;
        break;
      }
    }
    // Recovered only if the band holds through the end of the record.
    if (last_out < cols - 1) m.recovery_steps = last_out < 0 ? 0 : last_out + 1 - activation_step;
  }
  return m;
}

MatrixXd FrequencyDeviations(const grid::Trajectory& t, const grid::StateMap& map) {
  MatrixXd w(map.n_inertia, t.x.cols());
  for (int b = 0; b < map.n_inertia; ++b) w.row(b) = t.x.row(map.omega(b));
  return w;
}

// ---- Pipeline -------------------------------------------------------------------

grid::GridCase LoadOrBuildCase(const ExperimentConfig& config, Json* case_json) {
  if (!config.case_path.empty()) {
    const Json j = ReadJsonFile(config.case_path);
    if (case_json) *case_json = j;
    return grid::GridCase::FromJson(j);
  }
  const GeneratedCase g = BuildIeee39Case(config.seed, config.bounds, config.Ts);
  if (case_json) *case_json = g.ToJson();
  return g.grid;
}

Prepared Prepare(const ExperimentConfig& config) {
  config.Validate();
  Prepared p;
  p.grid = LoadOrBuildCase(config, &p.case_json);
  p.model = grid::DiscretizeZoh(grid::BuildContinuous(p.grid), config.Ts);
  const int n = p.model.n();
  const int m = p.model.m();
  data::ExperimentDesign design = config.collection;
  design.seed = config.seed;
  if (design.trajectories * design.length - 1 < n + m) {
    throw ConfigError(fmt::format("{} transitions cannot excite n + m = {}",
                                  design.trajectories * design.length, n + m));
  }
  p.data = data::CollectExperiments(p.model, design);
  p.partition = synth::AgentPartition::FromStateMap(p.model.state_map);
  return Reweight(p, config, ReservesOrOnes(config.reserves, m));
}

Prepared Reweight(const Prepared& base, const ExperimentConfig& config, const VectorXd& reserves) {
  Prepared p = base;
  if (reserves.size() != p.model.m()) {
    throw ConfigError(fmt::format("expected {} reserves, got {}", p.model.m(), reserves.size()));
  }
  p.weights = synth::BuildWeights(p.grid, reserves, config.weights);
  p.spec = synth::MakeSpec(p.data, p.weights, p.model.Bd, config.psi_bar);
  return p;
}

synth::BisectionOptions BisectionFor(const ExperimentConfig& config) {
  synth::BisectionOptions o;
  o.tol = config.bisection_tol;
  o.seed = config.seed;
  o.solver.verbose = config.verbose;
  return o;
}

synth::SynthesisResult Design(const Prepared& p, const ExperimentConfig& config,
                              const std::optional<synth::Adjacency>& delta) {
  synth::SynthesisSpec spec = p.spec;
  if (delta) spec.structure = synth::Structure{p.partition, *delta};
  return synth::BisectGamma(spec, BisectionFor(config));
}

namespace {

grid::DisturbanceSpec StepDisturbance(const Prepared& p, const ExperimentConfig& config,
                                      double scale) {
  const int bus = p.grid.bus_labels.empty() ? config.step.bus
                                            : p.grid.IndexOfLabel(config.step.bus);
  if (bus < 0 || bus >= p.grid.n_inertia) {
    throw ConfigError(fmt::format("step bus {} has no inertia", config.step.bus));
  }
  grid::DisturbanceSpec d;
  d.steps.push_back({bus, scale * config.step.magnitude, config.step.step});
  return d;
}

ExperimentRun Run(const Prepared& p, const grid::InputPolicy& policy,
                  const grid::DisturbanceSpec& dist, int steps, int activation) {
  ExperimentRun r;
  try {
    r.trajectory = grid::Simulate(p.model, policy, dist, steps);
  } catch (const grid::DivergenceError&) {
    r.diverged = true;
    return r;
  }
  r.metrics = ComputeMetrics(FrequencyDeviations(r.trajectory, p.model.state_map), activation);
  return r;
}

}  // namespace

ExperimentRun RunStepExperiment(const Prepared& p, const MatrixXd& K,
                                const ExperimentConfig& config, double magnitude_scale) {
  const grid::InputPolicy policy = grid::InputPolicy::Feedback(K, config.activation_step);
  return Run(p, policy, StepDisturbance(p, config, magnitude_scale), config.horizon,
             config.activation_step);
}

ExperimentRun RunSaturationExperiment(const Prepared& p, const MatrixXd& K,
                                      const ExperimentConfig& config, const VectorXd& actual) {
  if (actual.size() != p.model.m()) throw ConfigError("actual reserves have the wrong size");
  grid::InputPolicy policy = grid::InputPolicy::Feedback(K, config.activation_step);
  policy.saturation = grid::Saturation::FromReserves(p.grid, actual);
  ExperimentRun r = Run(p, policy, StepDisturbance(p, config, 1.0), config.horizon,
                        config.activation_step);
  r.reserve_shortfall = actual.sum() < std::abs(config.step.magnitude);
  return r;
}

ExperimentRun RunStochasticExperiment(const Prepared& p, const MatrixXd& K,
                                      const ExperimentConfig& config, const VectorXd& actual,
                                      std::uint64_t noise_seed, bool control) {
  if (actual.size() != p.model.m()) throw ConfigError("actual reserves have the wrong size");
  grid::InputPolicy policy = control ? grid::InputPolicy::Feedback(K, config.activation_step)
                                     : grid::InputPolicy{};
  policy.saturation = grid::Saturation::FromReserves(p.grid, actual);
  grid::DisturbanceSpec dist = StepDisturbance(p, config, 1.0);
  dist.stochastic_amplitude = config.stochastic_amplitude;
  dist.seed = noise_seed;
  ExperimentRun r = Run(p, policy, dist, config.stochastic_horizon, config.activation_step);
  r.reserve_shortfall = actual.sum() < std::abs(config.step.magnitude);
  return r;
}

// ---- Trade-off sweep --------------------------------------------------------------

Json TradeoffRow::ToJson() const {
  Json j;
  j["c"] = c;
  j["feasible"] = feasible;
  j["status"] = status;
  j["links"] = links;
  j["optimal"] = optimal;
  j["objective"] = objective;
  j["bound"] = bound;
  j["gamma"] = gamma;
  j["h2_sq"] = h2_sq;
  j["max_forbidden_gain"] = max_forbidden_gain;
  j["topo_seconds"] = topo_seconds;
  j["synth_seconds"] = synth_seconds;
  if (delta.size()) j["topology"] = synth::AdjacencyToJson(delta);
  if (K.size()) j["K"] = MatrixToJson(K);
  return j;
}

std::vector<TradeoffRow> RunTradeoffSweep(const Prepared& p, const ExperimentConfig& config) {
  const MatrixXd eta = topo::EstimateLinkBenefits(p.data, p.partition);
  topo::TopologyOptions opt;
  opt.big_m = config.big_m;
  opt.node_budget = config.node_budget;
  opt.time_limit = config.level_time_limit;
  opt.max_swap_solves = config.max_swap_solves;
  opt.verbose = config.verbose;

  std::vector<TradeoffRow> rows;
  std::vector<topo::SweepLevel> levels;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    levels = topo::SweepCosts(p.spec, p.partition, config.sweep_costs, eta, opt);
  } catch (const InfeasibleError& e) {
    for (double c : config.sweep_costs) {
      TradeoffRow r;
      r.c = c;
      r.status = fmt::format("infeasible: {}", e.what());
      rows.push_back(r);
    }
    return rows;
  }
  const double topo_total = Elapsed(t0);
  for (const topo::SweepLevel& l : levels) {
    TradeoffRow r;
    r.c = l.c;
    r.delta = l.result.delta;
    r.links = synth::OffDiagonalLinks(r.delta);
    r.optimal = l.result.optimal;
    r.objective = l.result.objective;
    r.bound = l.result.bound;
    r.topo_seconds = l.result.seconds;
    const auto t1 = std::chrono::steady_clock::now();
    try {
      const synth::SynthesisResult s = Design(p, config, r.delta);
      r.K = s.K;
      r.gamma = s.gamma;
      r.h2_sq = synth::ClosedLoopH2Squared(p.model.A, p.model.B, p.model.Bd, p.weights.Ce,
                                           p.weights.Deu, s.K);
      r.max_forbidden_gain = synth::MaxForbiddenGain(s.K, p.partition, r.delta);
      r.feasible = true;
      r.status = l.result.termination;
    } catch (const InfeasibleError& e) {
      r.status = fmt::format("synthesis infeasible: {}", e.what());
    } catch (const NumericalError& e) {
      r.status = fmt::format("numerical failure: {}", e.what());
    }
    r.synth_seconds = Elapsed(t1);
    rows.push_back(std::move(r));
  }
  if (config.verbose) fmt::print(stderr, "sweep: topology stage {:.1f}s\n", topo_total);
  return rows;
}

// ---- Output -----------------------------------------------------------------------

void WriteFrequencyCsv(const std::string& path, const grid::Trajectory& t,
                       const grid::StateMap& map, const grid::GridCase& grid_case) {
  const MatrixXd w = FrequencyDeviations(t, map);
  MatrixXd table(w.cols(), w.rows() + 1);
  std::vector<std::string> header{"step"};
  for (int b = 0; b < w.rows(); ++b) {
    header.push_back(fmt::format(
        "bus{}", grid_case.bus_labels.empty() ? b : grid_case.bus_labels[static_cast<std::size_t>(b)]));
  }
  for (Eigen::Index k = 0; k < w.cols(); ++k) {
    table(k, 0) = static_cast<double>(k);
    table.row(k).tail(w.rows()) = w.col(k).transpose();
  }
  WriteCsv(path, table, header);
}

void WriteInputCsv(const std::string& path, const grid::Trajectory& t,
                   const grid::GridCase& grid_case) {
  MatrixXd table(t.u.cols(), t.u.rows() + 1);
  std::vector<std::string> header{"step"};
  for (int i = 0; i < t.u.rows(); ++i) {
    header.push_back(fmt::format(
        "u_bus{}", grid_case.bus_labels.empty() ? i : grid_case.bus_labels[static_cast<std::size_t>(i)]));
  }
  for (Eigen::Index k = 0; k < t.u.cols(); ++k) {
    table(k, 0) = static_cast<double>(k);
    table.row(k).tail(t.u.rows()) = t.u.col(k).transpose();
  }
  WriteCsv(path, table, header);
}

void WriteTradeoffCsv(const std::string& path, const std::vector<TradeoffRow>& rows) {
  MatrixXd table(static_cast<Eigen::Index>(rows.size()), 7);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const TradeoffRow& r = rows[k];
    table.row(static_cast<Eigen::Index>(k)) << r.c, r.feasible ? 1.0 : 0.0, r.links,
        r.feasible ? r.gamma : NAN, r.feasible ? r.h2_sq : NAN, r.objective, r.optimal ? 1.0 : 0.0;
  }
  WriteCsv(path, table, {"c", "feasible", "links", "gamma", "h2_sq", "objective", "optimal"});
}

void WriteGnuplotScript(const std::string& path, const std::vector<std::string>& tags,
                        bool tradeoff, int n_inertia) {
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("cannot write {}", path));
  out << "set datafile separator ','\n"
      << "set key autotitle columnhead outside\n"
      << "set terminal pngcairo size 900,500\n";
  const std::string cols = Num(n_inertia + 1);
  for (const std::string& tag : tags) {
    out << "set output 'freq_" << tag << ".png'\n"
        << "set xlabel 'time step'\nset ylabel 'frequency deviation (p.u.)'\n"
        << "plot for [i=2:" << cols << "] 'freq_" << tag << ".csv' using 1:i with lines\n"
        << "set output 'input_" << tag << ".png'\n"
        << "set ylabel 'secondary input (p.u.)'\n"
        << "plot for [i=2:" << cols << "] 'input_" << tag << ".csv' using 1:i with lines\n";
  }
  if (tradeoff) {
    out << "set output 'tradeoff_cost.png'\n"
        << "set xlabel 'link cost c'\nset ylabel 'closed-loop H2 squared'\n"
        << "set y2label 'links'\nset y2tics\n"
        << "plot 'tradeoff.csv' using 1:5 with linespoints title 'H2^2', "
           "'' using 1:3 axes x1y2 with linespoints title 'links'\n"
        << "unset y2tics\nunset y2label\n"
        << "set output 'tradeoff_links.png'\n"
        << "set xlabel 'links'\nset ylabel 'closed-loop H2 squared'\n"
        << "plot 'tradeoff.csv' using 3:5 with points pt 7 title 'H2^2'\n";
  }
}

}  // namespace ddfc::harness
