#include "ddfc/synth/synthesis.h"

#include <chrono>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "ddfc/common/errors.h"

namespace ddfc::synth {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using sdp::AffineMatrix;
using sdp::BlockLmiBuilder;
using sdp::LinearExpr;

void SynthesisSpec::Validate() const {
  const int nn = n();
  const int mm = m();
  if (!multiplier.use_learned() && !multiplier.use_prior()) {
    throw ConfigError("synthesis needs at least one active multiplier");
  }
  for (const MatrixXd* b : {&multiplier.learned_base, &multiplier.prior_base}) {
    if (b->size() && (b->rows() != 2 * nn + mm || b->cols() != 2 * nn + mm)) {
      throw ConfigError("multiplier size does not match (n, m)");
    }
  }
  if (Ce.cols() != nn || Deu.cols() != mm || Ce.rows() != Deu.rows() || Ce.rows() == 0) {
    throw ConfigError(fmt::format("weights: Ce {}x{}, Deu {}x{} for n={}, m={}", Ce.rows(),
                                  Ce.cols(), Deu.rows(), Deu.cols(), nn, mm));
  }
  if (Bd.rows() != nn) throw ConfigError("disturbance matrix has the wrong row count");
  if (state_scaling.size() && (state_scaling.size() != nn || !(state_scaling.array() > 0).all())) {
    throw ConfigError("state scaling must be positive with n entries");
  }
  if (structure) {
    structure->partition.Validate();
    if (structure->partition.num_states() != nn || structure->partition.num_inputs() != mm) {
      throw ConfigError("agent partition does not match (n, m)");
    }
  }
}

VectorXd DataStateScaling(const data::DataSet& data) {
  VectorXd s = VectorXd::Ones(data.n());
  if (data.transitions() == 0) return s;
  for (int i = 0; i < data.n(); ++i) {
    const double rms = data.X.row(i).norm() / std::sqrt(double(data.transitions()));
    if (rms > 0.0 && std::isfinite(rms)) s(i) = 1.0 / rms;
  }
  return s;
}

SynthesisSpec MakeSpec(const data::DataSet& data, const Weights& weights, const MatrixXd& Bd,
                       double psi_bar) {
  SynthesisSpec spec;
  spec.multiplier = multiplier::MakeTemplate(data, psi_bar);
  spec.Ce = weights.Ce;
  spec.Deu = weights.Deu;
  spec.Bd = Bd;
  spec.state_scaling = DataStateScaling(data);
  spec.Validate();
  return spec;
}

namespace {

struct Scaled {
  MatrixXd learned, prior, Ce, Bd;
  VectorXd s;
};

Scaled ScaleSpec(const SynthesisSpec& spec) {
  const int n = spec.n();
  const int m = spec.m();
  Scaled out;
  out.s = spec.state_scaling.size() ? spec.state_scaling : VectorXd::Ones(n);
  VectorXd d(2 * n + m);
  d << out.s, VectorXd::Ones(m), out.s;
  if (spec.multiplier.use_learned()) {
    out.learned = d.asDiagonal() * spec.multiplier.learned_base * d.asDiagonal();
  }
  if (spec.multiplier.use_prior()) {
    out.prior = d.asDiagonal() * spec.multiplier.prior_base * d.asDiagonal();
  }
  out.Ce = spec.Ce * out.s.cwiseInverse().asDiagonal();
  out.Bd = out.s.asDiagonal() * spec.Bd;
  return out;
}

// Blocks of Πᵀ·base·Π, Π swapping the (n+m) and n partitions.
void AddMultiplierBlocks(const MatrixXd& base, const std::string& tau, int n, int m,
                         AffineMatrix* b00, AffineMatrix* b01, AffineMatrix* b11) {
  b00->AddScaled(tau, base.bottomRightCorner(n, n));
  b01->AddScaled(tau, base.topRightCorner(n + m, n).transpose());
  b11->AddScaled(tau, base.topLeftCorner(n + m, n + m));
}

}  // namespace

namespace {

// P, G, Y, the multiplier scalings, the stability LMI, P ≻ 0 and the
// structural equalities. Returns H = G + Gᵀ − P for the caller.
AffineMatrix AddStabilityPart(const SynthesisSpec& spec, const Scaled& sc, sdp::SdpProblem* prob) {
  const int n = spec.n();
  const int m = spec.m();
  prob->AddSymmetricMatrix("P", n);
  prob->AddGeneralMatrix("G", n, n);
  prob->AddGeneralMatrix("Y", m, n);
  if (spec.multiplier.use_learned()) prob->AddScalar("tau_d", true);
  if (spec.multiplier.use_prior()) prob->AddScalar("tau_pr", true);

  AffineMatrix h(n, n);
  h.AddVariable("G").AddVariable("G", 1.0, true).AddVariable("P", -1.0);

  // [[Φ, [0; G; Y]], [*, −H]] ≺ 0 with Φ = blkdiag(B_dB_dᵀ − P, 0) + Πᵀ P_com Π.
  AffineMatrix b00(n, n), b01(n, n + m), b11(n + m, n + m);
  b00.AddConstant(sc.Bd * sc.Bd.transpose()).AddVariable("P", -1.0);
  if (spec.multiplier.use_learned()) {
    AddMultiplierBlocks(sc.learned, "tau_d", n, m, &b00, &b01, &b11);
  }
  if (spec.multiplier.use_prior()) {
    AddMultiplierBlocks(sc.prior, "tau_pr", n, m, &b00, &b01, &b11);
  }
  AffineMatrix gy(n + m, n);
  MatrixXd top = MatrixXd::Zero(n + m, n);
  top.topRows(n).setIdentity();
  MatrixXd bottom = MatrixXd::Zero(n + m, m);
  bottom.bottomRows(m).setIdentity();
  gy.AddProduct(top, "G", MatrixXd::Identity(n, n));
  gy.AddProduct(bottom, "Y", MatrixXd::Identity(n, n));
  AffineMatrix neg_h = h;
  neg_h.Scale(-1.0);
  BlockLmiBuilder b({n, n + m, n});
  b.Set(0, 0, b00);
  b.Set(0, 1, b01);
  b.Set(1, 1, b11);
  b.Set(1, 2, gy);
  b.Set(2, 2, neg_h);
  prob->AddLmi("stability", b.Build(), sdp::LmiSense::kNegative);
  prob->AddLmi("P_pos", AffineMatrix(n, n).AddVariable("P"), sdp::LmiSense::kPositive);

  if (spec.structure) {
    const StructuralZeros z = StructuralEqualities(spec.structure->partition, spec.structure->delta);
    for (const auto& [a, c] : z.y) {
      prob->AddEquality(fmt::format("Y({},{})=0", a, c), LinearExpr().Add("Y", a, c, 1.0));
    }
    for (const auto& [a, c] : z.g) {
      prob->AddEquality(fmt::format("G({},{})=0", a, c), LinearExpr().Add("G", a, c, 1.0));
    }
  }
  return h;
}

}  // namespace

sdp::SdpProblem AssembleStabilityLmis(const SynthesisSpec& spec) {
  spec.Validate();
  sdp::SdpProblem prob;
  AddStabilityPart(spec, ScaleSpec(spec), &prob);
  return prob;
}

sdp::SdpProblem AssembleH2Lmis(const SynthesisSpec& spec, std::optional<double> gamma) {
  spec.Validate();
  if (gamma && !(*gamma > 0.0)) throw ConfigError("gamma must be > 0");
  const int n = spec.n();
  const int pe = static_cast<int>(spec.Ce.rows());
  const Scaled sc = ScaleSpec(spec);

  sdp::SdpProblem prob;
  prob.AddSymmetricMatrix("Gamma", pe);
  const AffineMatrix h = AddStabilityPart(spec, sc, &prob);

  if (gamma) {
    LinearExpr tr(*gamma * *gamma);
    tr.AddTrace("Gamma", pe, -1.0);
    prob.AddInequality("trace_bound", tr);
  }

  // [[Γ, C_e G + D_eu Y], [*, H]] ≻ 0.
  BlockLmiBuilder b({pe, n});
  b.Set(0, 0, AffineMatrix(pe, pe).AddVariable("Gamma"));
  AffineMatrix off(pe, n);
  off.AddProduct(sc.Ce, "G", MatrixXd::Identity(n, n));
  off.AddProduct(spec.Deu, "Y", MatrixXd::Identity(n, n));
  b.Set(0, 1, off);
  b.Set(1, 1, h);
  prob.AddLmi("performance", b.Build(), sdp::LmiSense::kPositive);
  prob.AddLmi("Gamma_pos", AffineMatrix(pe, pe).AddVariable("Gamma"), sdp::LmiSense::kPositive);
  return prob;
}

MatrixXd RecoverController(const MatrixXd& Y, const MatrixXd& G) {
  if (G.rows() != G.cols() || Y.cols() != G.rows()) {
    throw ConfigError("RecoverController: dimension mismatch");
  }
  Eigen::JacobiSVD<MatrixXd> svd(G);
  const VectorXd& sv = svd.singularValues();
  if (sv.size() && !(sv(sv.size() - 1) > 1e-9 * sv(0))) {
    throw NumericalError(fmt::format(
        "G is near singular (singular values {:.3e} .. {:.3e}, condition {:.3e})",
        sv(sv.size() - 1), sv(0), sv(0) / sv(sv.size() - 1)));
  }
  const MatrixXd K = G.transpose().partialPivLu().solve(Y.transpose()).transpose();
  const double res = (Y - K * G).norm();
  if (res > 1e-8 * std::max(Y.norm(), 1e-300)) {
    throw NumericalError(fmt::format("K = Y G^-1 residual {:.3e} too large", res));
  }
  return K;
}

namespace {

std::optional<SynthesisResult> RunSolve(const SynthesisSpec& spec, std::optional<double> gamma,
                                        const sdp::SolverOptions& options,
                                        std::vector<SolveAttempt>* log) {
  sdp::SdpProblem prob = AssembleH2Lmis(spec, gamma);
  if (!gamma) {
    prob.SetObjective(LinearExpr().AddTrace("Gamma", static_cast<int>(spec.Ce.rows()), 1.0));
  }
  const sdp::SdpSolution sol = sdp::Solve(prob, options);
  SolveAttempt at;
  at.gamma = gamma.value_or(0.0);
  at.status = sdp::ToString(sol.status);
  at.seconds = sol.stats.seconds;
  at.iterations = sol.stats.phase1_iterations + sol.stats.phase2_iterations;
  std::optional<SynthesisResult> out;
  if (sol.status == sdp::SolveStatus::kOptimal) {
    SynthesisResult r;
    r.Gamma = sol.Matrix("Gamma");
    r.P = sol.Matrix("P");
    r.G = sol.Matrix("G");
    r.Y = sol.Matrix("Y");
    r.tau_d = spec.multiplier.use_learned() ? sol.Scalar("tau_d") : 0.0;
    r.tau_pr = spec.multiplier.use_prior() ? sol.Scalar("tau_pr") : 0.0;
    r.state_scaling = spec.state_scaling.size() ? spec.state_scaling : VectorXd::Ones(spec.n());
    try {
      r.K = RecoverController(r.Y, r.G) * r.state_scaling.asDiagonal();
      r.trace_gamma = r.Gamma.trace();
      r.gamma = std::max(gamma.value_or(0.0), std::sqrt(std::max(r.trace_gamma, 0.0)));
      if (spec.structure) r.delta = spec.structure->delta;
      out = std::move(r);
    } catch (const NumericalError& e) {
      at.status = std::string("numerical-failure: ") + e.what();
    }
  }
  if (log) log->push_back(at);
  return out;
}

}  // namespace

std::optional<SynthesisResult> SolveAtGamma(const SynthesisSpec& spec, double gamma,
                                            const sdp::SolverOptions& options,
                                            std::vector<SolveAttempt>* log) {
  return RunSolve(spec, gamma, options, log);
}

std::optional<SynthesisResult> MinimizeTrace(const SynthesisSpec& spec,
                                             const sdp::SolverOptions& options,
                                             std::vector<SolveAttempt>* log) {
  return RunSolve(spec, std::nullopt, options, log);
}

namespace {

bool IsNumericalFailure(const SolveAttempt& a) {
  return a.status.rfind("numerical-failure", 0) == 0;
}

}  // namespace

SynthesisResult BisectGamma(const SynthesisSpec& spec, const BisectionOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  if (!(options.tol > 0.0) || !(options.gamma_hi > 0.0) || options.gamma_lo < 0.0 ||
      options.gamma_lo >= options.gamma_hi) {
    throw ConfigError("bisection needs 0 <= gamma_lo < gamma_hi and tol > 0");
  }
  std::vector<SolveAttempt> log;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> jitter(0.0, 0.1);

  auto finish = [&](SynthesisResult r) {
    r.attempts = log;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  };

  // Feasibility at g with perturbed retries on numerical failure inside (lo, hi).
  auto probe = [&](double g, double lo, double hi) -> std::optional<SynthesisResult> {
    auto r = SolveAtGamma(spec, g, options.solver, &log);
    for (int t = 0; !r && IsNumericalFailure(log.back()) && t < options.retries; ++t) {
      const double sign = (rng() & 1u) ? 1.0 : -1.0;
      double g2 = g + sign * jitter(rng) * (hi - lo);
      if (!(g2 > lo && g2 < hi)) g2 = g - sign * (g2 - g);
      r = SolveAtGamma(spec, g2, options.solver, &log);
    }
    return r;
  };

  double lo = options.gamma_lo;
  double hi = options.gamma_hi;
  std::optional<SynthesisResult> best;

  if (options.seed_with_min_trace) {
    if (auto mt = MinimizeTrace(spec, options.solver, &log)) {
      const double g = std::sqrt(std::max(mt->trace_gamma, 0.0));
      // The min-trace value is a lower bracket up to the interior-point gap,
      // which may be loose when the objective settled before full convergence.
      const double seed_lo = g * (1.0 - 0.5 * options.tol);
      double cand = g * (1.0 + 0.25 * options.tol);
      for (int t = 0; t < 4 && !best && cand < options.gamma_cap; ++t) {
        best = SolveAtGamma(spec, cand, options.solver, &log);
        if (best) {
          hi = cand;
          lo = std::max(lo, std::min(seed_lo, hi));
        } else {
          cand *= 1.0 + options.tol;
        }
      }
    }
  }

  if (!best) {
    best = probe(hi, lo, hi);
    while (!best) {
      lo = std::max(lo, hi);
      hi *= 2.0;
      if (hi > options.gamma_cap) {
        throw InfeasibleError(fmt::format(
            "robust H2 synthesis infeasible for every gamma up to {:.3e} ({} solves)",
            options.gamma_cap, log.size()));
      }
      best = probe(hi, lo, hi);
    }
    if (lo > 0.0 && lo == options.gamma_lo) {
      if (auto r = probe(lo, 0.0, lo)) return finish(*r);
    }
  }

  for (int it = 0; it < options.max_iter && hi - lo > options.tol * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (auto r = probe(mid, lo, hi)) {
      hi = r->gamma;
      best = std::move(r);
    } else {
      lo = mid;
    }
  }
  return finish(*best);
}

Json SynthesisResult::ToJson() const {
  Json j;
  j["gamma"] = gamma;
  j["trace_gamma"] = trace_gamma;
  j["K"] = MatrixToJson(K);
  j["tau_d"] = tau_d;
  j["tau_pr"] = tau_pr;
  j["state_scaling"] = VectorToJson(state_scaling);
  if (delta) j["topology"] = AdjacencyToJson(*delta);
  j["seconds"] = seconds;
  Json at = Json::array();
  for (const SolveAttempt& a : attempts) {
    at.push_back({{"gamma", a.gamma},
                  {"status", a.status},
                  {"seconds", a.seconds},
                  {"iterations", a.iterations}});
  }
  j["attempts"] = std::move(at);
  Json cert;
  cert["Gamma"] = MatrixToJson(Gamma);
  cert["P"] = MatrixToJson(P);
  cert["G"] = MatrixToJson(G);
  cert["Y"] = MatrixToJson(Y);
  j["certificate"] = std::move(cert);
  return j;
}

SynthesisResult SynthesisResult::FromJson(const Json& j) {
  SynthesisResult r;
  r.gamma = j.at("gamma");
  r.trace_gamma = j.value("trace_gamma", 0.0);
  r.K = MatrixFromJson(j.at("K"));
  r.tau_d = j.value("tau_d", 0.0);
  r.tau_pr = j.value("tau_pr", 0.0);
  if (j.contains("state_scaling")) r.state_scaling = VectorFromJson(j["state_scaling"]);
  if (j.contains("topology")) r.delta = AdjacencyFromJson(j["topology"], -1);
  r.seconds = j.value("seconds", 0.0);
  if (j.contains("attempts")) {
    for (const Json& a : j["attempts"]) {
      r.attempts.push_back({a.at("gamma"), a.at("status"), a.at("seconds"), a.at("iterations")});
    }
  }
  if (j.contains("certificate")) {
    const Json& c = j["certificate"];
    r.Gamma = MatrixFromJson(c.at("Gamma"));
    r.P = MatrixFromJson(c.at("P"));
    r.G = MatrixFromJson(c.at("G"));
    r.Y = MatrixFromJson(c.at("Y"));
  }
  return r;
}

}  // namespace ddfc::synth
