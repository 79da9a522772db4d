#include <algorithm>
#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "ddfc/common/errors.h"
#include "ddfc/topo/topology.h"
#include "test_cases.h"

namespace ddfc::topo {
namespace {

using Eigen::MatrixXd;
using ddfc::testing::RandomData;
using synth::Adjacency;

MatrixXd UniformCost(int agents, double c) {
  MatrixXd cost = MatrixXd::Constant(agents, agents, c);
  cost.diagonal().setZero();
  return cost;
}

synth::SynthesisSpec SpecFor(const data::DataSet& d) {
  const synth::Weights w = synth::WeightsFromQR(MatrixXd::Identity(d.n(), d.n()),
                                                MatrixXd::Identity(d.m(), d.m()));
  return synth::MakeSpec(d, w, MatrixXd::Identity(d.n(), d.n()));
}

Adjacency FromBits(int bits) {
  Adjacency d = synth::DecentralizedAdjacency(3);
  int k = 0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      d(i, j) = (bits >> k++) & 1;
    }
  }
  return d;
}

// ---- Link benefits ------------------------------------------------------------

TEST(Benefits, BlockDiagonalSystemHasNoCoupling) {
  MatrixXd a = MatrixXd::Zero(4, 4);
  a.topLeftCorner(2, 2) << 0.9, 0.1, 0.0, 0.8;
  a.bottomRightCorner(2, 2) << 0.7, 0.0, 0.2, 0.5;
  MatrixXd b = MatrixXd::Zero(4, 2);
  b(1, 0) = 1.0;
  b(3, 1) = 1.0;
  const data::DataSet d = RandomData(a, b, 30, 0.0, 4);
  const MatrixXd eta = EstimateLinkBenefits(d, AgentPartition::Uniform(2, 2, 1));
  EXPECT_NEAR(eta.lpNorm<Eigen::Infinity>(), 0.0, 1e-10);
}

TEST(Benefits, TwoAgentFrobeniusRatio) {
  MatrixXd a(2, 2);
  a << 0.5, 0.3, 0.4, -0.2;
  MatrixXd b(2, 2);
  b << 1.0, 0.2, -0.1, 2.0;
  const data::DataSet d = RandomData(a, b, 20, 0.0, 7);
  const MatrixXd eta = EstimateLinkBenefits(d, AgentPartition::Uniform(2, 1, 1));
  // Row 0: own [0.5, 1.0], from agent 1 [0.3, 0.2]. Row 1: own [-0.2, 2.0],
  // from agent 0 [0.4, -0.1].
  EXPECT_NEAR(eta(0, 1), std::sqrt(0.09 + 0.04) / std::sqrt(0.25 + 1.0), 1e-8);
  EXPECT_NEAR(eta(1, 0), std::sqrt(0.16 + 0.01) / std::sqrt(0.04 + 4.0), 1e-8);
  EXPECT_EQ(eta(0, 0), 0.0);
  EXPECT_EQ(eta(1, 1), 0.0);
}

TEST(Benefits, InvariantToScalingTheData) {
  MatrixXd a, b;
  ddfc::testing::ThreeAgentSystem(&a, &b);
  data::DataSet d = RandomData(a, b, 40, 1e-3, 2);
  const AgentPartition p = AgentPartition::Uniform(3, 2, 1);
  const MatrixXd eta = EstimateLinkBenefits(d, p);
  d.X *= 7.0;
  d.U *= 7.0;
  d.Xplus *= 7.0;
  EXPECT_TRUE(EstimateLinkBenefits(d, p).isApprox(eta, 1e-10));
}

TEST(Benefits, RankDeficientDataThrows) {
  const data::DataSet d = RandomData(MatrixXd::Identity(2, 2), MatrixXd::Ones(2, 2), 3, 0.0, 1);
  EXPECT_THROW(EstimateLinkBenefits(d, AgentPartition::Uniform(2, 1, 1)), NumericalError);
}

// ---- Big-M rows -----------------------------------------------------------------

TEST(BigM, AllLinksOnLeavesOnlyInactiveBounds) {
  const AgentPartition p = AgentPartition::Uniform(3, 2, 1);
  Fixing f = Fixing::Ones(3, 3);
  for (const BigMBound& b : BigMBounds(p, f)) {
    EXPECT_TRUE(b.fixed());
    EXPECT_GE(b.constant, 1.0);
  }
}

TEST(BigM, ClosedLinkForcesItsOwnBlocks) {
  const AgentPartition p = AgentPartition::Uniform(3, 2, 1);
  Fixing f = Fixing::Ones(3, 3);
  f(0, 1) = 0;
  int y = 0;
  int g = 0;
  for (const BigMBound& b : BigMBounds(p, f)) {
    if (b.constant != 0.0) continue;
    (b.var == "Y" ? y : g)++;
  }
  // Y on inputs of 0 × states of 1, G on states of 0 × states of 1 and on
  // states of 2 × states of 1 (agent 0 reads agent 2).
  EXPECT_EQ(y, 2);
  EXPECT_EQ(g, 8);
}

TEST(BigM, OffAndNotListeningGivesConstantTwo) {
  const AgentPartition p = AgentPartition::Uniform(3, 1, 1);
  Fixing f = Fixing::Ones(3, 3);
  f(0, 1) = 1;
  f(0, 2) = 0;
  // G(2, 1) coupled by δ_01 − δ_02 + 1 = 2.
  bool seen = false;
  for (const BigMBound& b : BigMBounds(p, f)) {
    if (b.var == "G" && b.row == 2 && b.col == 1 && b.constant == 2.0) seen = true;
  }
  EXPECT_TRUE(seen);
}

TEST(BigM, FreeLinksAppearAsTerms) {
  const AgentPartition p = AgentPartition::Uniform(3, 1, 1);
  Fixing f = Fixing::Constant(3, 3, -1);
  f.diagonal().setOnes();
  for (const BigMBound& b : BigMBounds(p, f)) {
    if (b.var == "G" && b.row == 2 && b.col == 1) {
      if (b.terms.size() != 2) continue;
      EXPECT_EQ(b.constant, 1.0);
      EXPECT_EQ(b.terms[0].i, 0);
      EXPECT_EQ(b.terms[0].j, 1);
      EXPECT_EQ(b.terms[0].coeff, 1.0);
      EXPECT_EQ(b.terms[1].j, 2);
      EXPECT_EQ(b.terms[1].coeff, -1.0);
    }
  }
  EXPECT_THROW(BigMBounds(p, Fixing::Ones(2, 2)), ConfigError);
}

// ---- Objective ----------------------------------------------------------------

TEST(Objective, SumsOffDiagonalNetCost) {
  MatrixXd cost(2, 2), eta(2, 2);
  cost << 5, 1.5, 2.0, 5;
  eta << 9, 0.5, 3.0, 9;
  Adjacency d = synth::DenseAdjacency(2);
  EXPECT_DOUBLE_EQ(LinkObjective(d, cost, eta), (1.5 - 0.5) + (2.0 - 3.0));
  d(1, 0) = 0;
  EXPECT_DOUBLE_EQ(LinkObjective(d, cost, eta), 1.0);
  CommTopology t{d, cost, eta};
  EXPECT_EQ(t.links(), 1);
  EXPECT_DOUBLE_EQ(t.ToJson().at("objective").get<double>(), 1.0);
}

// ---- Search -------------------------------------------------------------------

class CrossActuated : public ::testing::Test {
 protected:
  void SetUp() override {
    MatrixXd a, b;
    ddfc::testing::CrossActuatedSystem(&a, &b);
    data_ = RandomData(a, b, 60, 1e-3, 11);
    spec_ = SpecFor(data_);
    eta_ = EstimateLinkBenefits(data_, partition_);
  }
  data::DataSet data_;
  AgentPartition partition_ = AgentPartition::Uniform(3, 2, 1);
  synth::SynthesisSpec spec_;
  MatrixXd eta_;
};

TEST_F(CrossActuated, ExhaustiveEnumerationMatchesTheSearch) {
  std::vector<bool> feasible(64);
  int count = 0;
  for (int bits = 0; bits < 64; ++bits) {
    feasible[bits] = FixedTopologyFeasible(spec_, partition_, FromBits(bits), {});
    count += feasible[bits];
  }
  ASSERT_TRUE(feasible[63]);
  ASSERT_FALSE(feasible[0]);
  ASSERT_LT(count, 64);
  for (double c : {0.0, 0.05, 0.3, 1.0, 5.0}) {
    const MatrixXd cost = UniformCost(3, c);
    double best = std::numeric_limits<double>::infinity();
    for (int bits = 0; bits < 64; ++bits) {
      if (feasible[bits]) best = std::min(best, LinkObjective(FromBits(bits), cost, eta_));
    }
    const TopologyResult r = SolveTopology(spec_, partition_, cost, eta_);
    EXPECT_TRUE(r.optimal) << "c = " << c;
    EXPECT_NEAR(r.objective, best, 1e-9) << "c = " << c;
    EXPECT_LE(r.bound, r.objective + 1e-9);
    EXPECT_NEAR(r.objective, LinkObjective(r.delta, cost, eta_), 1e-12);
    int bits = 0;
    for (int k = 0, i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (i != j) bits |= r.delta(i, j) << k++;
      }
    }
    EXPECT_TRUE(feasible[bits]) << "c = " << c;
  }
}

TEST_F(CrossActuated, FreeLinksGiveTheDenseTopology) {
  const TopologyResult r = SolveTopology(spec_, partition_, UniformCost(3, 0.0), eta_);
  // Every link has η ≥ 0 and costs nothing; ties go to fewer links only
  // when η is exactly 0.
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (eta_(i, j) > 1e-6) EXPECT_EQ(r.delta(i, j), 1) << i << j;
    }
  }
}

TEST_F(CrossActuated, CertificateSatisfiesTheStructure) {
  const TopologyResult r = SolveTopology(spec_, partition_, UniformCost(3, 5.0), eta_);
  const MatrixXd& y = r.certificate.at("Y");
  const MatrixXd& g = r.certificate.at("G");
  const synth::StructuralZeros z = synth::StructuralEqualities(partition_, r.delta);
  for (const auto& [a, b] : z.y) EXPECT_NEAR(y(a, b), 0.0, 1e-9);
  for (const auto& [a, b] : z.g) EXPECT_NEAR(g(a, b), 0.0, 1e-9);
  const MatrixXd k = synth::RecoverController(y, g);
  EXPECT_LT(synth::MaxForbiddenGain(k, partition_, r.delta), 1e-6 * (1.0 + k.norm()));
  EXPECT_GE(r.solves, 1);
  const Json j = r.ToJson();
  EXPECT_EQ(j.at("links").get<int>(), synth::OffDiagonalLinks(r.delta));
}

TEST_F(CrossActuated, CertifiedPatternsAdmitStructuredDesign) {
  for (int bits = 0; bits < 64; ++bits) {
    const Adjacency delta = FromBits(bits);
    if (!FixedTopologyFeasible(spec_, partition_, delta, {})) continue;
    synth::SynthesisSpec s = spec_;
    s.structure = synth::Structure{partition_, delta};
    const synth::SynthesisResult r = synth::BisectGamma(s);
    EXPECT_LE(synth::MaxForbiddenGain(r.K, partition_, delta), 1e-6 * (1.0 + r.K.norm()))
        << "pattern " << bits;
  }
}

TEST_F(CrossActuated, SweepLinkCountsDecreaseWithCost) {
  const std::vector<double> costs = {0.0, 0.02, 0.1, 0.5, 2.0, 10.0};
  const std::vector<SweepLevel> levels = SweepCosts(spec_, partition_, costs, eta_);
  ASSERT_EQ(levels.size(), costs.size());
  for (std::size_t k = 1; k < levels.size(); ++k) {
    EXPECT_LE(synth::OffDiagonalLinks(levels[k].result.delta),
              synth::OffDiagonalLinks(levels[k - 1].result.delta));
  }
  EXPECT_GT(synth::OffDiagonalLinks(levels.back().result.delta), 0);
}

TEST_F(CrossActuated, GreedyStartAgreesOnSmallInstances) {
  TopologyOptions opt;
  opt.greedy_above_agents = 0;
  for (double c : {0.05, 1.0}) {
    const TopologyResult plain = SolveTopology(spec_, partition_, UniformCost(3, c), eta_);
    const TopologyResult warm = SolveTopology(spec_, partition_, UniformCost(3, c), eta_, opt);
    EXPECT_NEAR(plain.objective, warm.objective, 1e-9);
    EXPECT_TRUE(warm.optimal);
  }
}

TEST(Search, DecentralizedWinsWhenLinksAreExpensive) {
  MatrixXd a, b;
  ddfc::testing::ThreeAgentSystem(&a, &b);
  const data::DataSet d = RandomData(a, b, 60, 1e-3, 5);
  const AgentPartition p = AgentPartition::Uniform(3, 2, 1);
  const synth::SynthesisSpec spec = SpecFor(d);
  ASSERT_TRUE(FixedTopologyFeasible(spec, p, synth::DecentralizedAdjacency(3), {}));
  const TopologyResult r = SolveTopology(spec, p, UniformCost(3, 100.0), EstimateLinkBenefits(d, p));
  EXPECT_EQ(synth::OffDiagonalLinks(r.delta), 0);
  EXPECT_TRUE(r.optimal);
}

TEST(Search, InfeasibleDenseProblemThrows) {
  // Unstable mode with no actuation at all.
  MatrixXd a = MatrixXd::Identity(2, 2) * 1.2;
  MatrixXd b = MatrixXd::Zero(2, 2);
  b(0, 0) = 1.0;
  const data::DataSet d = RandomData(a, b, 30, 1e-3, 3);
  const AgentPartition p = AgentPartition::Uniform(2, 1, 1);
  EXPECT_THROW(SolveTopology(SpecFor(d), p, UniformCost(2, 1.0), MatrixXd::Zero(2, 2)),
               InfeasibleError);
}

TEST(Search, RejectsBadInputs) {
  MatrixXd a, b;
  ddfc::testing::ThreeAgentSystem(&a, &b);
  const data::DataSet d = RandomData(a, b, 40, 1e-3, 5);
  const AgentPartition p = AgentPartition::Uniform(3, 2, 1);
  const synth::SynthesisSpec spec = SpecFor(d);
  EXPECT_THROW(SolveTopology(spec, p, UniformCost(2, 1.0), MatrixXd::Zero(3, 3)), ConfigError);
  EXPECT_THROW(SolveTopology(spec, p, UniformCost(3, -1.0), MatrixXd::Zero(3, 3)), ConfigError);
  TopologyOptions opt;
  opt.node_budget = 0;
  EXPECT_THROW(SolveTopology(spec, p, UniformCost(3, 1.0), MatrixXd::Zero(3, 3), opt),
               ConfigError);
  EXPECT_THROW(SweepCosts(spec, p, {1.0, -2.0}, MatrixXd::Zero(3, 3)), ConfigError);
}

}  // namespace
}  // namespace ddfc::topo
