#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "ddfc/common/errors.h"
#include "ddfc/grid/model.h"
#include "ddfc/harness/ieee39.h"
#include "ddfc/synth/h2.h"
#include "ddfc/synth/structure.h"
#include "ddfc/synth/synthesis.h"
#include "ddfc/synth/weights.h"
#include "test_cases.h"

namespace ddfc::synth {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using ddfc::testing::RandomData;
using ddfc::testing::ThreeAgentSystem;

MatrixXd Scalar(double v) { return MatrixXd::Constant(1, 1, v); }

// Value iteration on the scalar Riccati equation for x⁺ = a x + b u.
double ScalarRiccati(double a, double b, double q, double r) {
  double p = q;
  for (int i = 0; i < 10000; ++i) p = q + a * a * p - a * a * b * b * p * p / (r + b * b * p);
  return p;
}

SynthesisSpec ScalarSpec(double psi_slack) {
  const data::DataSet d = RandomData(Scalar(0.5), Scalar(1.0), 20, 0.0, 3);
  const Weights w = WeightsFromQR(Scalar(1.0), Scalar(1.0));
  SynthesisSpec spec;
  spec.multiplier = multiplier::MakeTemplate(d, 1.25 * (1.0 + psi_slack));
  spec.Ce = w.Ce;
  spec.Deu = w.Deu;
  spec.Bd = Scalar(1.0);
  return spec;
}

SynthesisSpec SpecFor(const MatrixXd& a, const MatrixXd& b, double noise, std::uint64_t seed,
                      int columns = 60) {
  const data::DataSet d = RandomData(a, b, columns, noise, seed);
  const Weights w = WeightsFromQR(MatrixXd::Identity(a.rows(), a.rows()),
                                  MatrixXd::Identity(b.cols(), b.cols()));
  SynthesisSpec spec;
  spec.multiplier = multiplier::MakeTemplate(d);
  spec.Ce = w.Ce;
  spec.Deu = w.Deu;
  spec.Bd = MatrixXd::Identity(a.rows(), a.rows());
  spec.state_scaling = DataStateScaling(d);
  return spec;
}

// ---- H2 and Lyapunov -------------------------------------------------------

TEST(H2, ScalarOracle) {
  EXPECT_NEAR(ClosedLoopH2Squared(Scalar(0.5), Scalar(1.0), Scalar(1.0), Scalar(1.0), Scalar(0.0),
                                  Scalar(0.0)),
              4.0 / 3.0, 1e-10);
}

TEST(H2, RiccatiGainAttainsTheRiccatiValue) {
  const double p = ScalarRiccati(0.5, 1.0, 1.0, 1.0);
  EXPECT_NEAR(p, (0.25 + std::sqrt(0.0625 + 4.0)) / 2.0, 1e-12);
  const double k = -0.5 * p / (1.0 + p);
  MatrixXd ce(2, 1), deu(2, 1);
  ce << 1.0, 0.0;
  deu << 0.0, 1.0;
  EXPECT_NEAR(ClosedLoopH2Squared(Scalar(0.5), Scalar(1.0), Scalar(1.0), ce, deu, Scalar(k)), p,
              1e-10);
}

TEST(H2, UnstableClosedLoopThrows) {
  EXPECT_THROW(ClosedLoopH2Squared(Scalar(1.5), Scalar(1.0), Scalar(1.0), Scalar(1.0),
                                   Scalar(0.0), Scalar(0.0)),
               NumericalError);
}

TEST(Lyapunov, ResidualSmallAndLarge) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int n : {5, 90}) {
    MatrixXd a(n, n), c(n, 2);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    for (int i = 0; i < c.size(); ++i) c.data()[i] = g(rng);
    a *= 0.9 / grid::SpectralRadius(a);
    const MatrixXd q = c * c.transpose();
    const MatrixXd p = DiscreteLyapunov(a, q);
    EXPECT_LE((a * p * a.transpose() - p + q).cwiseAbs().maxCoeff(), 1e-9 * p.norm()) << n;
  }
}

// ---- Weights -----------------------------------------------------------------

TEST(Weights, EqualReservesGiveTenthParticipation) {
  const harness::GeneratedCase gc = harness::BuildIeee39Case(1);
  const Weights w = BuildWeights(gc.grid, VectorXd::Constant(10, 3.0));
  EXPECT_TRUE(w.alpha.isApprox(VectorXd::Constant(10, 0.1)));
  EXPECT_TRUE(w.R.isApprox(MatrixXd::Identity(10, 10) * 10.0));
  EXPECT_TRUE((w.Deu.transpose() * w.Deu).isApprox(w.R));
  EXPECT_LE((w.Ce.transpose() * w.Ce - w.Q).cwiseAbs().maxCoeff(), 1e-9 * w.Q.norm());
}

TEST(Weights, TinyReserveHitsTheCap) {
  const harness::GeneratedCase gc = harness::BuildIeee39Case(1);
  VectorXd res = VectorXd::Ones(10);
  res(3) = 1e-5;
  const Weights w = BuildWeights(gc.grid, res);
  EXPECT_NEAR(w.alpha(3), 1e-5 / (9.0 + 1e-5), 1e-15);
  EXPECT_DOUBLE_EQ(w.R(3, 3), 1e3);
  res(3) = 0.0;
  EXPECT_THROW(BuildWeights(gc.grid, res), ConfigError);
}

TEST(Weights, BlocksAndExactZeroBlock) {
  const harness::GeneratedCase gc = harness::BuildIeee39Case(2);
  const Weights w = BuildWeights(gc.grid, VectorXd::Ones(10));
  const int ni = 10;
  // No tie lines selected: Q = diag(0.2 I + jitter, 0.8 I, 0).
  EXPECT_TRUE(w.Q.topLeftCorner(ni, ni).isApprox(MatrixXd::Identity(ni, ni) * (0.2 + 1e-9)));
  EXPECT_TRUE(w.Q.block(ni, ni, ni, ni).isApprox(MatrixXd::Identity(ni, ni) * 0.8));
  EXPECT_TRUE(w.Q.bottomRightCorner(10, 10).isZero(0.0));
  EXPECT_TRUE(w.Ce.rightCols(10).isZero(0.0));
  EXPECT_EQ(w.outputs(), 2 * ni + 10);
}

TEST(Weights, TieLinePenaltyAddsToTheAngleBlockOnly) {
  const harness::GeneratedCase gc = harness::BuildIeee39Case(2);
  WeightConfig cfg;
  cfg.penalized_lines = {0, 5};
  const Weights w = BuildWeights(gc.grid, VectorXd::Ones(10), cfg);
  const Weights base = BuildWeights(gc.grid, VectorXd::Ones(10));
  const MatrixXd q1 = w.Q - base.Q;
  EXPECT_GT(q1.topLeftCorner(10, 10).norm(), 0.0);
  EXPECT_TRUE(q1.rightCols(20).isZero(1e-12));
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(q1).eigenvalues().minCoeff(), -1e-9);
}

TEST(Weights, FromQRRangeFactor) {
  MatrixXd q = MatrixXd::Zero(3, 3);
  q.topLeftCorner(2, 2) << 2.0, 1.0, 1.0, 2.0;
  const Weights w = WeightsFromQR(q, Scalar(4.0));
  EXPECT_EQ(w.outputs(), 3);
  EXPECT_TRUE((w.Ce.transpose() * w.Ce).isApprox(q));
  EXPECT_TRUE(w.Ce.col(2).isZero(0.0));
  EXPECT_NEAR((w.Deu.transpose() * w.Deu)(0, 0), 4.0, 1e-12);
  EXPECT_THROW(WeightsFromQR(q, Scalar(-1.0)), ConfigError);
}

// ---- Assembly -----------------------------------------------------------------

TEST(Assemble, VariablesAndConstraints) {
  const SynthesisSpec spec = ScalarSpec(0.0);
  const sdp::SdpProblem p = AssembleH2Lmis(spec, 2.0);
  std::set<std::string> names;
  for (const auto& v : p.matrix_vars()) names.insert(v.name);
  for (const auto& v : p.scalar_vars()) names.insert(v.name);
  EXPECT_EQ(names, (std::set<std::string>{"Gamma", "P", "G", "Y", "tau_d", "tau_pr"}));
  std::set<std::string> lmis;
  for (const auto& l : p.lmis()) lmis.insert(l.name);
  EXPECT_EQ(lmis, (std::set<std::string>{"performance", "stability", "P_pos", "Gamma_pos"}));
  EXPECT_THROW(AssembleH2Lmis(spec, 0.0), ConfigError);
  SynthesisSpec bad = spec;
  bad.Bd = MatrixXd::Ones(2, 1);
  EXPECT_THROW(AssembleH2Lmis(bad, 1.0), ConfigError);
}

TEST(Assemble, ScalarRiccatiOracleBracketsFeasibility) {
  const double gstar = std::sqrt(ScalarRiccati(0.5, 1.0, 1.0, 1.0));
  const SynthesisSpec spec = ScalarSpec(1e-3);
  EXPECT_TRUE(SolveAtGamma(spec, 1.05 * gstar, {}).has_value());
  EXPECT_FALSE(SolveAtGamma(spec, 0.95 * gstar, {}).has_value());
}

TEST(Assemble, ZeroPerformanceWeightsDecouple) {
  SynthesisSpec spec = SpecFor(MatrixXd::Identity(2, 2) * 1.1, MatrixXd::Identity(2, 2), 0.0, 4);
  spec.Ce.setZero();
  spec.Deu.setZero();
  const auto r = SolveAtGamma(spec, 1e-3, {});
  ASSERT_TRUE(r.has_value());
  EXPECT_LT(grid::SpectralRadius(MatrixXd::Identity(2, 2) * 1.1 + r->K), 1.0);
}

// ---- Controller recovery ----------------------------------------------------

TEST(Recover, IdentityAndConstructedGains) {
  const MatrixXd y = MatrixXd::Random(2, 4);
  EXPECT_TRUE(RecoverController(y, MatrixXd::Identity(4, 4)).isApprox(y));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  MatrixXd gm(4, 4), k0(2, 4);
  for (int i = 0; i < gm.size(); ++i) gm.data()[i] = g(rng);
  for (int i = 0; i < k0.size(); ++i) k0.data()[i] = g(rng);
  gm += 4.0 * MatrixXd::Identity(4, 4);
  EXPECT_LE((RecoverController(k0 * gm, gm) - k0).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Recover, NearSingularThrows) {
  MatrixXd gm = MatrixXd::Identity(3, 3);
  gm(2, 2) = 1e-12;
  EXPECT_THROW(RecoverController(MatrixXd::Ones(1, 3), gm), NumericalError);
  EXPECT_THROW(RecoverController(MatrixXd::Ones(1, 2), gm), ConfigError);
}

// ---- Structure -----------------------------------------------------------------

TEST(Structure, DenseAndDecentralizedPatterns) {
  const AgentPartition p = AgentPartition::Uniform(3, 2, 1);
  const StructuralZeros dense = StructuralEqualities(p, DenseAdjacency(3));
  EXPECT_TRUE(dense.y.empty());
  EXPECT_TRUE(dense.g.empty());
  const StructuralZeros dec = StructuralEqualities(p, DecentralizedAdjacency(3));
  // Every off-diagonal agent block is zero.
  EXPECT_EQ(dec.y.size(), 12u);
  EXPECT_EQ(dec.g.size(), 24u);
  for (const auto& [a, b] : dec.g) EXPECT_NE(a / 2, b / 2);
  for (const auto& [a, b] : dec.y) EXPECT_NE(a, b / 2);
}

// (i, j) not linked, (i, z) linked ⇒ block G(z, j) = 0, enumerated directly.
TEST(Structure, ChainMatchesTripleEnumeration) {
  const AgentPartition p = AgentPartition::Uniform(3, 2, 1);
  Adjacency chain = DecentralizedAdjacency(3);
  chain(1, 0) = 1;  // agent 2 reads agent 1
  chain(2, 1) = 1;  // agent 3 reads agent 2
  std::set<std::pair<int, int>> expect_g, expect_y;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i == j || chain(i, j)) continue;
      for (const auto& e : p.KEntries(i, j)) expect_y.insert(e);
      for (int z = 0; z < 3; ++z) {
        if (z != i && !chain(i, z)) continue;
        for (const auto& e : p.GEntries(z, j)) expect_g.insert(e);
      }
    }
  }
  const StructuralZeros s = StructuralEqualities(p, chain);
  using Set = std::set<std::pair<int, int>>;
  EXPECT_EQ(Set(s.g.begin(), s.g.end()), expect_g);
  EXPECT_EQ(Set(s.y.begin(), s.y.end()), expect_y);
  // Agent 2 reads agent 1 but not agent 0, so agent 1's G rows lose agent 0's columns.
  EXPECT_TRUE(expect_g.count({2, 0}));
}

TEST(Structure, EveryPatternKeepsForbiddenGainsZero) {
  const AgentPartition p = AgentPartition::Uniform(3, 2, 1);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  const std::vector<std::pair<int, int>> off = {{0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}};
  for (int mask = 0; mask < 64; ++mask) {
    Adjacency delta = DecentralizedAdjacency(3);
    for (int b = 0; b < 6; ++b) {
      if (mask & (1 << b)) delta(off[b].first, off[b].second) = 1;
    }
    const StructuralZeros z = StructuralEqualities(p, delta);
    MatrixXd gm(6, 6), y(3, 6);
    for (int i = 0; i < gm.size(); ++i) gm.data()[i] = g(rng);
    for (int i = 0; i < y.size(); ++i) y.data()[i] = g(rng);
    gm += 5.0 * MatrixXd::Identity(6, 6);
    for (const auto& [a, b] : z.g) gm(a, b) = 0.0;
    for (const auto& [a, b] : z.y) y(a, b) = 0.0;
    const MatrixXd k = RecoverController(y, gm);
    EXPECT_LE(MaxForbiddenGain(k, p, delta), 1e-12) << "mask " << mask;
  }
}

TEST(Structure, TwoAgentBlockTriangularInverse) {
  const AgentPartition p = AgentPartition::Uniform(2, 2, 1);
  Adjacency delta = DecentralizedAdjacency(2);
  delta(1, 0) = 1;  // agent 1 reads agent 0 only
  const StructuralZeros z = StructuralEqualities(p, delta);
  MatrixXd gm(4, 4);
  gm << 2, 1, 0, 0,  //
      0, 3, 0, 0,    //
      1, 2, 4, 1,    //
      0, 1, 1, 5;
  for (const auto& [a, b] : z.g) EXPECT_EQ(gm(a, b), 0.0);
  MatrixXd y(2, 4);
  y << 1, 2, 0, 0,  //
      3, 4, 5, 6;
  const MatrixXd k = RecoverController(y, gm);
  EXPECT_NEAR(k(0, 2), 0.0, 1e-14);
  EXPECT_NEAR(k(0, 3), 0.0, 1e-14);
  EXPECT_GT(std::abs(k(1, 0)) + std::abs(k(1, 1)), 0.0);
}

TEST(Structure, AdjacencyJsonRoundTrip) {
  Adjacency d = DecentralizedAdjacency(4);
  d(0, 3) = 1;
  d(2, 1) = 1;
  EXPECT_EQ(OffDiagonalLinks(d), 2);
  EXPECT_TRUE(AdjacencyFromJson(AdjacencyToJson(d), 4) == d);
  EXPECT_THROW(AdjacencyFromJson(AdjacencyToJson(d), 3), ConfigError);
  Json bad = AdjacencyToJson(d);
  bad["links"].push_back({{"from", 9}, {"to", 0}});
  EXPECT_THROW(AdjacencyFromJson(bad, 4), ConfigError);
}

TEST(Structure, PartitionValidation) {
  AgentPartition p = AgentPartition::Uniform(2, 2, 1);
  p.states[1] = {2, 2};
  EXPECT_THROW(p.Validate(), ConfigError);
  EXPECT_THROW(StructuralEqualities(AgentPartition::Uniform(2, 2, 1), DenseAdjacency(3)),
               ConfigError);
}

// ---- Synthesis ------------------------------------------------------------------

TEST(Synthesis, StructuredThreeAgentDesignRespectsTopology) {
  MatrixXd a, b;
  ThreeAgentSystem(&a, &b);
  SynthesisSpec spec = SpecFor(a, b, 0.01, 11);
  Adjacency chain = DecentralizedAdjacency(3);
  chain(1, 0) = 1;
  chain(2, 1) = 1;
  spec.structure = Structure{AgentPartition::Uniform(3, 2, 1), chain};
  const SynthesisResult r = BisectGamma(spec);
  EXPECT_LE(MaxForbiddenGain(r.K, spec.structure->partition, chain), 1e-6);
  EXPECT_LT(grid::SpectralRadius(a + b * r.K), 1.0);
  EXPECT_LE(std::sqrt(ClosedLoopH2Squared(a, b, spec.Bd, spec.Ce, spec.Deu, r.K)),
            r.gamma * (1.0 + 1e-6));
  EXPECT_LE(r.trace_gamma, r.gamma * r.gamma + 1e-9);
  ASSERT_TRUE(r.delta.has_value());
  EXPECT_TRUE(*r.delta == chain);
}

TEST(Synthesis, CertificatesHoldOnRandomSystems) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 2 + trial % 3;
    const int m = 1 + trial % 2;
    MatrixXd a(n, n), b(n, m);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = 0.6 * g(rng);
    for (int i = 0; i < b.size(); ++i) b.data()[i] = g(rng);
    const SynthesisSpec spec = SpecFor(a, b, 0.01, 200 + trial);
    BisectionOptions opt;
    opt.seed = trial;
    const SynthesisResult r = BisectGamma(spec, opt);
    EXPECT_LT(grid::SpectralRadius(a + b * r.K), 1.0) << trial;
    EXPECT_LE(std::sqrt(ClosedLoopH2Squared(a, b, spec.Bd, spec.Ce, spec.Deu, r.K)),
              r.gamma * (1.0 + 1e-6))
        << trial;
  }
}

TEST(Synthesis, FeasibilityIsMonotoneInGamma) {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    MatrixXd a(2, 2), b(2, 1);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = 0.7 * g(rng);
    for (int i = 0; i < b.size(); ++i) b.data()[i] = g(rng);
    const SynthesisSpec spec = SpecFor(a, b, 0.01, 300 + trial, 30);
    for (double gamma : {1.0, 3.0, 10.0}) {
      if (SolveAtGamma(spec, gamma, {})) {
        EXPECT_TRUE(SolveAtGamma(spec, 2.0 * gamma, {}).has_value()) << trial << " " << gamma;
      }
    }
  }
}

TEST(Synthesis, BisectionMatchesTheRiccatiOptimum) {
  const double gstar = std::sqrt(ScalarRiccati(0.5, 1.0, 1.0, 1.0));
  const SynthesisResult r = BisectGamma(ScalarSpec(1e-3));
  EXPECT_GE(r.gamma, gstar * (1.0 - 1e-6));
  EXPECT_LE(r.gamma, gstar * 1.02);
  const double p = gstar * gstar;
  EXPECT_NEAR(r.K(0, 0), -0.5 * p / (1.0 + p), 0.05);
}

TEST(Synthesis, FeasibleLowerBracketReturnsImmediately) {
  BisectionOptions opt;
  opt.seed_with_min_trace = false;
  opt.gamma_lo = 50.0;
  opt.gamma_hi = 100.0;
  const SynthesisResult r = BisectGamma(ScalarSpec(1e-3), opt);
  EXPECT_DOUBLE_EQ(r.gamma, 50.0);
  EXPECT_EQ(r.attempts.size(), 2u);
}

TEST(Synthesis, UncontrollableUnstableSystemIsInfeasible) {
  MatrixXd a = MatrixXd::Identity(2, 2) * 1.2;
  MatrixXd b(2, 1);
  b << 1.0, 0.0;
  const SynthesisSpec spec = SpecFor(a, b, 0.0, 5);
  BisectionOptions opt;
  opt.gamma_cap = 1e4;
  opt.seed_with_min_trace = false;
  EXPECT_THROW(BisectGamma(spec, opt), InfeasibleError);
}

TEST(Synthesis, ResultJsonRoundTrip) {
  const SynthesisResult r = BisectGamma(ScalarSpec(1e-3));
  const SynthesisResult back = SynthesisResult::FromJson(r.ToJson());
  EXPECT_TRUE(back.K.isApprox(r.K));
  EXPECT_DOUBLE_EQ(back.gamma, r.gamma);
  EXPECT_EQ(back.attempts.size(), r.attempts.size());
}

}  // namespace
}  // namespace ddfc::synth
