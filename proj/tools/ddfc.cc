// Command-line front end for the case studies.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "ddfc/common/errors.h"
#include "ddfc/common/json.h"
#include "ddfc/data/dataset.h"
#include "ddfc/harness/experiments.h"
#include "ddfc/synth/h2.h"
#include "ddfc/topo/topology.h"

namespace fs = std::filesystem;
using namespace ddfc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kInfeasible = 2, kNumerical = 3 };

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string data_dir;
  std::optional<double> inflation;
  bool verbose = false;
};

void AddCommon(CLI::App* app, Common* c) {
  app->add_option("-c,--config", c->config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
  app->add_option("-s,--seed", c->seed, "case and data seed");
  app->add_option("-o,--out-dir", c->out_dir, "output directory");
  app->add_flag("-v,--verbose", c->verbose, "solver progress on stderr");
}

harness::ExperimentConfig LoadConfig(const Common& c) {
  harness::ExperimentConfig cfg;
  if (!c.config_path.empty()) cfg = harness::ExperimentConfig::FromJson(ReadJsonFile(c.config_path));
  if (c.seed) cfg.seed = *c.seed;
  if (c.inflation) cfg.collection.inflation = *c.inflation;
  cfg.verbose = c.verbose;
  cfg.Validate();
  return cfg;
}

harness::Prepared PrepareWith(const harness::ExperimentConfig& cfg, const Common& c) {
  harness::Prepared p = harness::Prepare(cfg);
  if (!c.data_dir.empty()) {
    p.data = data::LoadBundle(c.data_dir);
    if (p.data.n() != p.model.n() || p.data.m() != p.model.m()) {
      throw ConfigError("data bundle does not match the case");
    }
    if (c.inflation) {
      p.data.d_bar *= *c.inflation / p.data.inflation;
      p.data.inflation = *c.inflation;
    }
    p = harness::Reweight(p, cfg, cfg.reserves.size() ? cfg.reserves : VectorXd::Ones(p.model.m()));
  }
  return p;
}

fs::path OutPath(const Common& c, const std::string& name) {
  fs::create_directories(c.out_dir);
  return fs::path(c.out_dir) / name;
}

VectorXd ActualReserves(const harness::ExperimentConfig& cfg, int m) {
  if (cfg.actual_reserves.size()) return cfg.actual_reserves;
  if (cfg.reserves.size()) return cfg.reserves;
  return m == 10 ? harness::MismatchedIeee39Reserves() : VectorXd::Ones(m);
}

void Emit(const Common& c, const std::string& tag, const harness::Prepared& p,
          const harness::ExperimentRun& run, Json extra = Json::object()) {
  if (run.diverged) throw grid::DivergenceError(fmt::format("{} run diverged", tag), 0);
  harness::WriteFrequencyCsv(OutPath(c, "freq_" + tag + ".csv").string(), run.trajectory,
                             p.model.state_map, p.grid);
  harness::WriteInputCsv(OutPath(c, "input_" + tag + ".csv").string(), run.trajectory, p.grid);
  Json j = run.metrics.ToJson();
  j["reserve_shortfall"] = run.reserve_shortfall;
  for (auto& [k, v] : extra.items()) j[k] = v;
  WriteJsonFile(OutPath(c, "metrics_" + tag + ".json").string(), j);
  fmt::print("{}: nadir {:.4f}, recovery {}, steady-state error {:.2e}\n", tag, run.metrics.nadir,
             run.metrics.recovery_steps ? std::to_string(*run.metrics.recovery_steps) : "none",
             run.metrics.steady_state_error);
}

synth::SynthesisResult LoadController(const std::string& path) {
  return synth::SynthesisResult::FromJson(ReadJsonFile(path));
}

Json DesignSummary(const harness::Prepared& p, const synth::SynthesisResult& r) {
  Json j;
  j["gamma"] = r.gamma;
  j["closed_loop_h2_sq"] = synth::ClosedLoopH2Squared(p.model.A, p.model.B, p.model.Bd,
                                                      p.weights.Ce, p.weights.Deu, r.K);
  j["spectral_radius"] = grid::SpectralRadius(p.model.A + p.model.B * r.K);
  if (r.delta) j["link_count"] = synth::OffDiagonalLinks(*r.delta);
  return j;
}

int Run(int argc, char** argv) {
  CLI::App app{"Data-driven distributed secondary frequency control"};
  app.require_subcommand(1);
  Common c;

  auto* cmd_case = app.add_subcommand("case", "generate the randomized 39-bus case");
  AddCommon(cmd_case, &c);

  auto* cmd_collect = app.add_subcommand("collect", "simulate the probing experiments");
  AddCommon(cmd_collect, &c);
  cmd_collect->add_option("--inflate", c.inflation, "multiply the noise bound d̄ (>= 1)");

  std::string topology_path;
  auto* cmd_synth = app.add_subcommand("synth", "minimum-γ robust H2 controller");
  AddCommon(cmd_synth, &c);
  cmd_synth->add_option("-d,--data", c.data_dir, "data bundle directory")->check(CLI::ExistingDirectory);
  cmd_synth->add_option("--inflate", c.inflation, "multiply the noise bound d̄ (>= 1)");
  cmd_synth->add_option("-t,--topology", topology_path, "topology JSON from `topo`")
      ->check(CLI::ExistingFile);

  double cost = 1.0;
  auto* cmd_topo = app.add_subcommand("topo", "communication topology for a uniform link cost");
  AddCommon(cmd_topo, &c);
  cmd_topo->add_option("-d,--data", c.data_dir, "data bundle directory")->check(CLI::ExistingDirectory);
  cmd_topo->add_option("--cost", cost, "link cost c")->check(CLI::NonNegativeNumber);

  std::string controller_path;
  std::string experiment = "step";
  std::string tag;
  std::uint64_t noise_seed = 1;
  auto* cmd_sim = app.add_subcommand("simulate", "run one experiment with a stored controller");
  AddCommon(cmd_sim, &c);
  cmd_sim->add_option("-k,--controller", controller_path, "controller JSON from `synth`")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_sim->add_option("-e,--experiment", experiment, "step | saturation | stochastic")
      ->check(CLI::IsMember({"step", "saturation", "stochastic"}));
  cmd_sim->add_option("--tag", tag, "output tag (default: experiment name)");
  cmd_sim->add_option("--noise-seed", noise_seed, "stochastic disturbance seed");

  auto* cmd_sweep = app.add_subcommand("sweep", "topology/performance trade-off over the cost grid");
  AddCommon(cmd_sweep, &c);

  bool with_sweep = false;
  int noise_seeds = 20;
  auto* cmd_report = app.add_subcommand("report", "full case study: design, experiments, plots");
  AddCommon(cmd_report, &c);
  cmd_report->add_flag("--sweep", with_sweep, "include the trade-off sweep");
  cmd_report->add_option("--noise-seeds", noise_seeds, "stochastic runs")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  if (cmd_case->parsed()) {
    const harness::ExperimentConfig cfg = LoadConfig(c);
    Json j;
    harness::LoadOrBuildCase(cfg, &j);
    WriteJsonFile(OutPath(c, "case.json").string(), j);
    return kOk;
  }

  const harness::ExperimentConfig cfg = LoadConfig(c);

  if (cmd_collect->parsed()) {
    const harness::Prepared p = harness::Prepare(cfg);
    data::SaveBundle(p.data, OutPath(c, "data").string());
    WriteJsonFile(OutPath(c, "model.json").string(), p.model.ToJson());
    WriteJsonFile(OutPath(c, "case.json").string(), p.case_json);
    const data::PersistencyReport pe = data::CheckPersistency(p.data);
    fmt::print("{} transitions, rank {} of {}, d_bar {:.4e}\n", p.data.transitions(), pe.rank,
               p.data.n() + p.data.m(), p.data.d_bar);
    return kOk;
  }

  if (cmd_synth->parsed()) {
    const harness::Prepared p = PrepareWith(cfg, c);
    std::optional<synth::Adjacency> delta;
    if (!topology_path.empty()) {
      delta = synth::AdjacencyFromJson(ReadJsonFile(topology_path).at("topology"),
                                       p.partition.agents());
    }
    const synth::SynthesisResult r = harness::Design(p, cfg, delta);
    WriteJsonFile(OutPath(c, "controller.json").string(), r.ToJson());
    const Json s = DesignSummary(p, r);
    fmt::print("gamma {:.6g}, closed-loop H2^2 {:.6g}, spectral radius {:.6f}\n",
               s["gamma"].get<double>(), s["closed_loop_h2_sq"].get<double>(),
               s["spectral_radius"].get<double>());
    return kOk;
  }

  if (cmd_topo->parsed()) {
    const harness::Prepared p = PrepareWith(cfg, c);
    const MatrixXd eta = topo::EstimateLinkBenefits(p.data, p.partition);
    MatrixXd costs = MatrixXd::Constant(eta.rows(), eta.cols(), cost);
    costs.diagonal().setZero();
    topo::TopologyOptions opt;
    opt.big_m = cfg.big_m;
    opt.node_budget = cfg.node_budget;
    opt.time_limit = cfg.level_time_limit;
    opt.max_swap_solves = cfg.max_swap_solves;
    opt.verbose = cfg.verbose;
    const topo::TopologyResult r = topo::SolveTopology(p.spec, p.partition, costs, eta, opt);
    Json j = r.ToJson();
    j["c"] = cost;
    j["eta"] = MatrixToJson(eta);
    WriteJsonFile(OutPath(c, "topology.json").string(), j);
    fmt::print("{} links, objective {:.6g}, gap {:.3g} ({})\n", synth::OffDiagonalLinks(r.delta),
               r.objective, r.gap, r.termination);
    return kOk;
  }

  if (cmd_sim->parsed()) {
    const synth::SynthesisResult k = LoadController(controller_path);
    harness::Prepared p = harness::Prepare(cfg);
    if (tag.empty()) tag = experiment;
    harness::ExperimentRun run;
    if (experiment == "step") {
      run = harness::RunStepExperiment(p, k.K, cfg);
    } else if (experiment == "saturation") {
      run = harness::RunSaturationExperiment(p, k.K, cfg, ActualReserves(cfg, p.model.m()));
    } else {
      run = harness::RunStochasticExperiment(p, k.K, cfg, ActualReserves(cfg, p.model.m()),
                                             noise_seed);
    }
    Emit(c, tag, p, run, DesignSummary(p, k));
    return kOk;
  }

  if (cmd_sweep->parsed()) {
    const harness::Prepared p = harness::Prepare(cfg);
    const std::vector<harness::TradeoffRow> rows = harness::RunTradeoffSweep(p, cfg);
    harness::WriteTradeoffCsv(OutPath(c, "tradeoff.csv").string(), rows);
    Json j = Json::array();
    for (const auto& r : rows) j.push_back(r.ToJson());
    WriteJsonFile(OutPath(c, "tradeoff.json").string(), j);
    for (const auto& r : rows) {
      fmt::print("c = {:g}: {} links, gamma {:.4g}, H2^2 {:.4g} ({})\n", r.c, r.links, r.gamma,
                 r.h2_sq, r.status);
    }
    return kOk;
  }

  // report
  harness::Prepared p = harness::Prepare(cfg);
  WriteJsonFile(OutPath(c, "config.json").string(), cfg.ToJson());
  WriteJsonFile(OutPath(c, "case.json").string(), p.case_json);
  const synth::SynthesisResult dense = harness::Design(p, cfg);
  WriteJsonFile(OutPath(c, "controller.json").string(), dense.ToJson());
  const Json summary = DesignSummary(p, dense);
  Emit(c, "step", p, harness::RunStepExperiment(p, dense.K, cfg), summary);
  const VectorXd actual = ActualReserves(cfg, p.model.m());
  Emit(c, "saturation", p, harness::RunSaturationExperiment(p, dense.K, cfg, actual), summary);
  for (int s = 1; s <= noise_seeds; ++s) {
    Emit(c, fmt::format("stochastic_{}", s), p,
         harness::RunStochasticExperiment(p, dense.K, cfg, actual, static_cast<std::uint64_t>(s)),
         summary);
  }
  if (with_sweep) {
    const std::vector<harness::TradeoffRow> rows = harness::RunTradeoffSweep(p, cfg);
    harness::WriteTradeoffCsv(OutPath(c, "tradeoff.csv").string(), rows);
    Json j = Json::array();
    for (const auto& r : rows) j.push_back(r.ToJson());
    WriteJsonFile(OutPath(c, "tradeoff.json").string(), j);
  }
  harness::WriteGnuplotScript(OutPath(c, "plots.gp").string(),
                              {"step", "saturation", "stochastic_1"}, with_sweep,
                              p.grid.n_inertia);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return Run(argc, argv);
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}
