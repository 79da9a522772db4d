#include "ddfc/data/dataset.h"

#include <filesystem>
#include <random>

#include <fmt/format.h>

#include "ddfc/common/csv.h"
#include "ddfc/common/errors.h"

namespace ddfc::data {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd DataSet::Z() const {
  MatrixXd z(n() + m(), transitions());
  z << X, U;
  return z;
}

MatrixXd DataSet::W() const {
  MatrixXd w = Xplus;
  if (A_known.size()) w -= A_known * X;
  if (B_known.size()) w -= B_known * U;
  return w;
}

void DataSet::Validate() const {
  const auto t = X.cols();
  if (U.cols() != t || Xplus.cols() != t || Xplus.rows() != X.rows()) {
    throw ConfigError(fmt::format("dataset shapes disagree: U {}x{}, X {}x{}, X+ {}x{}", U.rows(),
                                  U.cols(), X.rows(), X.cols(), Xplus.rows(), Xplus.cols()));
  }
  if (A_known.size() && (A_known.rows() != n() || A_known.cols() != n())) {
    throw ConfigError("known A part has the wrong shape");
  }
  if (B_known.size() && (B_known.rows() != n() || B_known.cols() != m())) {
    throw ConfigError("known B part has the wrong shape");
  }
  if (!(d_bar >= 0.0)) throw ConfigError("noise bound must be >= 0");
  if (noise_energy.size() != 0 && noise_energy.size() != n()) {
    throw ConfigError("per-state noise energy has the wrong size");
  }
}

Json DataSet::MetaJson() const {
  Json j;
  j["n"] = n();
  j["m"] = m();
  j["transitions"] = transitions();
  j["trajectories"] = trajectories;
  j["d_bar"] = d_bar;
  j["inflation"] = inflation;
  j["disturbance_energy"] = disturbance_energy;
  j["noise_energy"] = VectorToJson(noise_energy);
  j["Ts"] = Ts;
  j["seed"] = seed;
  if (A_known.size()) j["A_known"] = MatrixToJson(A_known);
  if (B_known.size()) j["B_known"] = MatrixToJson(B_known);
  return j;
}

MatrixXd GeneratePeSignal(int m, int length, double amplitude, std::uint64_t seed) {
  if (!(amplitude > 0.0)) throw ConfigError("probing amplitude must be > 0");
  if (m < 0 || length < 0) throw ConfigError("signal dimensions must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-amplitude, amplitude);
  MatrixXd u(m, length);
  for (int k = 0; k < length; ++k) {
    for (int i = 0; i < m; ++i) u(i, k) = uni(rng);
  }
  return u;
}

DataSet Collect(const grid::LtiModel& model, const MatrixXd& signal, const MatrixXd& disturbance,
                const CollectOptions& options) {
  if (options.require_stable) {
    const grid::StabilityReport st = grid::AnalyzeOpenLoop(model);
    if (!st.stable) {
      throw ConfigError(fmt::format(
          "open-loop plant is unstable (spectral radius {:.6f}, {:.6f} without the common "
          "angle mode); data collection refused",
          st.spectral_radius, st.reduced_spectral_radius));
    }
  }
  if (!(options.inflation >= 1.0)) throw ConfigError("noise-bound inflation must be >= 1");
  const int steps = static_cast<int>(signal.cols());
  const grid::Trajectory t =
      grid::Simulate(model, grid::InputPolicy::OpenLoop(signal), disturbance, steps, options.x0);
  DataSet d;
  d.U = t.u;
  d.X = t.x.leftCols(steps);
  d.Xplus = t.x.rightCols(steps);
  const MatrixXd w = model.Bd * t.dist;
  d.noise_energy = w.rowwise().squaredNorm();
  d.inflation = options.inflation;
  d.d_bar = options.inflation * d.noise_energy.sum();
  d.disturbance_energy = t.dist.squaredNorm();
  d.Ts = model.Ts;
  return d;
}

DataSet Collect(const grid::LtiModel& model, const MatrixXd& signal,
                const grid::DisturbanceSpec& disturbance, const CollectOptions& options) {
  const grid::DisturbanceSequence seq = grid::GenerateDisturbance(
      disturbance, static_cast<int>(model.Bd.cols()), static_cast<int>(signal.cols()));
  DataSet d = Collect(model, signal, seq.total, options);
  d.seed = disturbance.seed;
  return d;
}

void ExperimentDesign::Validate() const {
  if (trajectories < 1 || length < 1) {
    throw ConfigError("experiment design needs at least one trajectory of length >= 1");
  }
  if (!(probe_amplitude > 0.0)) throw ConfigError("probing amplitude must be > 0");
  if (!(x0_amplitude >= 0.0) || !(noise_amplitude >= 0.0)) {
    throw ConfigError("initial-state and noise amplitudes must be >= 0");
  }
  if (!(inflation >= 1.0)) throw ConfigError("noise-bound inflation must be >= 1");
}

Json ExperimentDesign::ToJson() const {
  Json j;
  j["trajectories"] = trajectories;
  j["length"] = length;
  j["probe_amplitude"] = probe_amplitude;
  j["x0_amplitude"] = x0_amplitude;
  j["noise_amplitude"] = noise_amplitude;
  j["inflation"] = inflation;
  j["seed"] = seed;
  return j;
}

ExperimentDesign ExperimentDesign::FromJson(const Json& j) {
  ExperimentDesign d;
  d.trajectories = j.value("trajectories", d.trajectories);
  d.length = j.value("length", d.length);
  d.probe_amplitude = j.value("probe_amplitude", d.probe_amplitude);
  d.x0_amplitude = j.value("x0_amplitude", d.x0_amplitude);
  d.noise_amplitude = j.value("noise_amplitude", d.noise_amplitude);
  d.inflation = j.value("inflation", d.inflation);
  d.seed = j.value("seed", d.seed);
  d.Validate();
  return d;
}

DataSet CollectExperiments(const grid::LtiModel& model, const ExperimentDesign& design) {
  design.Validate();
  const int n = static_cast<int>(model.A.rows());
  const int m = static_cast<int>(model.B.cols());
  std::mt19937_64 rng(design.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  CollectOptions options;
  options.inflation = design.inflation;
  std::vector<DataSet> sets;
  for (int t = 0; t < design.trajectories; ++t) {
    options.x0 = VectorXd::Zero(n);
    if (design.x0_amplitude > 0.0) {
      for (int i = 0; i < n; ++i) options.x0(i) = design.x0_amplitude * uni(rng);
    }
    grid::DisturbanceSpec dist;
    dist.stochastic_amplitude = design.noise_amplitude;
    dist.seed = rng();
    const MatrixXd probe = GeneratePeSignal(m, design.length, design.probe_amplitude, rng());
    sets.push_back(Collect(model, probe, dist, options));
    // Stability is a property of the model; check it once.
    options.require_stable = false;
  }
  DataSet d = Concatenate(sets);
  d.seed = design.seed;
  return d;
}

PersistencyReport CheckPersistency(const DataSet& data) {
  PersistencyReport r;
  r.required = data.n() + data.m();
  if (data.transitions() == 0 || r.required == 0) return r;
  Eigen::BDCSVD<MatrixXd> svd(data.Z());
  const VectorXd& sv = svd.singularValues();
  r.sigma_max = sv(0);
  const double thresh = 1e-8 * r.sigma_max;
  for (Eigen::Index i = 0; i < sv.size(); ++i) r.rank += sv(i) > thresh;
  r.sigma_min = r.required <= sv.size() ? sv(r.required - 1) : 0.0;
  r.pass = r.sigma_max > 0.0 && r.rank == r.required;
  return r;
}

DataSet Concatenate(const std::vector<DataSet>& sets) {
  const DataSet* ref = nullptr;
  for (const DataSet& s : sets) {
    s.Validate();
    if (s.transitions() == 0 && s.n() == 0) continue;
    if (!ref) {
      ref = &s;
    } else if (s.n() != ref->n() || s.m() != ref->m()) {
      throw ConfigError(fmt::format("cannot concatenate datasets with (n, m) = ({}, {}) and "
                                    "({}, {})",
                                    ref->n(), ref->m(), s.n(), s.m()));
    }
  }
  if (!ref) return sets.empty() ? DataSet{} : sets.front();
  DataSet out = *ref;
  int total = 0;
  for (const DataSet& s : sets) total += s.transitions();
  out.U.resize(ref->m(), total);
  out.X.resize(ref->n(), total);
  out.Xplus.resize(ref->n(), total);
  out.d_bar = 0.0;
  out.disturbance_energy = 0.0;
  out.trajectories = 0;
  bool split_known = true;
  VectorXd energy = VectorXd::Zero(ref->n());
  int col = 0;
  for (const DataSet& s : sets) {
    if (s.n() != ref->n() || s.m() != ref->m()) continue;
    const int t = s.transitions();
    out.U.middleCols(col, t) = s.U;
    out.X.middleCols(col, t) = s.X;
    out.Xplus.middleCols(col, t) = s.Xplus;
    col += t;
    out.d_bar += s.d_bar;
    out.disturbance_energy += s.disturbance_energy;
    out.trajectories += s.trajectories;
    if (s.noise_energy.size() == ref->n() && s.inflation == ref->inflation) {
      energy += s.noise_energy;
    } else {
      split_known = false;
    }
  }
  out.noise_energy = split_known ? energy : VectorXd();
  return out;
}

namespace {

std::vector<std::string> Names(const char* prefix, int count) {
  std::vector<std::string> h;
  for (int i = 0; i < count; ++i) h.push_back(fmt::format("{}{}", prefix, i));
  return h;
}

MatrixXd ReadBlock(const std::string& path, int rows, int cols) {
  if (cols == 0 || rows == 0) return MatrixXd(rows, cols);
  const MatrixXd m = ReadCsv(path);
  if (m.rows() != cols || m.cols() != rows) {
    throw ConfigError(fmt::format("{}: expected {}x{} table, found {}x{}", path, cols, rows,
                                  m.rows(), m.cols()));
  }
  return m.transpose();
}

}  // namespace

void SaveBundle(const DataSet& data, const std::string& dir) {
  data.Validate();
  std::filesystem::create_directories(dir);
  const std::filesystem::path p(dir);
  WriteCsv((p / "U.csv").string(), data.U.transpose(), Names("u", data.m()));
  WriteCsv((p / "X.csv").string(), data.X.transpose(), Names("x", data.n()));
  WriteCsv((p / "Xplus.csv").string(), data.Xplus.transpose(), Names("x", data.n()));
  WriteJsonFile((p / "meta.json").string(), data.MetaJson());
}

DataSet LoadBundle(const std::string& dir) {
  const std::filesystem::path p(dir);
  const Json meta = ReadJsonFile((p / "meta.json").string());
  DataSet d;
  const int n = meta.at("n");
  const int m = meta.at("m");
  const int t = meta.at("transitions");
  d.U = ReadBlock((p / "U.csv").string(), m, t);
  d.X = ReadBlock((p / "X.csv").string(), n, t);
  d.Xplus = ReadBlock((p / "Xplus.csv").string(), n, t);
  d.trajectories = meta.value("trajectories", 1);
  d.d_bar = meta.at("d_bar");
  d.inflation = meta.value("inflation", 1.0);
  d.disturbance_energy = meta.value("disturbance_energy", 0.0);
  if (meta.contains("noise_energy")) d.noise_energy = VectorFromJson(meta["noise_energy"]);
  d.Ts = meta.value("Ts", 1.0);
  d.seed = meta.value("seed", std::uint64_t{0});
  if (meta.contains("A_known")) d.A_known = MatrixFromJson(meta["A_known"]);
  if (meta.contains("B_known")) d.B_known = MatrixFromJson(meta["B_known"]);
  d.Validate();
  return d;
}

}  // namespace ddfc::data
