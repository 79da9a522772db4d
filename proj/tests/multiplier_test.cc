#include <random>

#include <gtest/gtest.h>

#include "ddfc/common/errors.h"
#include "ddfc/multiplier/multiplier.h"
#include "test_cases.h"

namespace ddfc::multiplier {
namespace {

using Eigen::MatrixXd;
using ddfc::testing::RandomData;

MatrixXd Psi(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd psi(a.rows(), a.cols() + b.cols());
  psi << a, b;
  return psi;
}

TEST(Learned, BlockLayout) {
  const data::DataSet d =
      RandomData(MatrixXd::Constant(1, 1, 0.5), MatrixXd::Ones(1, 1), 20, 0.1, 3);
  const MatrixXd base = BuildLearned(d);
  ASSERT_EQ(base.rows(), 3);
  const MatrixXd z = d.Z();
  EXPECT_TRUE(base.topLeftCorner(2, 2).isApprox(-z * z.transpose()));
  EXPECT_TRUE(base.topRightCorner(2, 1).isApprox(z * d.Xplus.transpose()));
  EXPECT_NEAR(base(2, 2), d.d_bar - d.Xplus.squaredNorm(), 1e-12);
  EXPECT_TRUE(base.isApprox(base.transpose()));
}

TEST(Learned, ScalarTruthIsAMemberAndWrongModelsAreNot) {
  // x⁺ = 0.5x + u, noise-free: the constraint is tight only at the truth.
  const data::DataSet d =
      RandomData(MatrixXd::Constant(1, 1, 0.5), MatrixXd::Ones(1, 1), 30, 0.0, 1);
  const MatrixXd base = BuildLearned(d);
  MatrixXd truth(1, 2);
  truth << 0.5, 1.0;
  EXPECT_NEAR(ConstraintMargin(base, truth), 0.0, 1e-10);
  MatrixXd wrong(1, 2);
  wrong << 0.6, 1.0;
  EXPECT_LT(ConstraintMargin(base, wrong), -1e-3);
}

TEST(Learned, NoisyTruthIsAMember) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 4;
    const int m = 1 + trial % 2;
    MatrixXd a(n, n), b(n, m);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = 0.5 * g(rng);
    for (int i = 0; i < b.size(); ++i) b.data()[i] = g(rng);
    const data::DataSet d = RandomData(a, b, 40, 0.2, 100 + trial);
    EXPECT_GE(ConstraintMargin(BuildLearned(d), Psi(a, b)), -1e-9 * (1.0 + d.d_bar))
        << "trial " << trial;
  }
}

TEST(Learned, RaisingTheBoundAddsIdentityInTheNoiseBlock) {
  data::DataSet d = RandomData(MatrixXd::Identity(2, 2) * 0.3, MatrixXd::Ones(2, 1), 10, 0.1, 4);
  const MatrixXd before = BuildLearned(d);
  d.d_bar += 1.0;
  MatrixXd diff = BuildLearned(d) - before;
  MatrixXd expected = MatrixXd::Zero(5, 5);
  expected.bottomRightCorner(2, 2).setIdentity();
  EXPECT_TRUE(diff.isApprox(expected, 1e-12));
}

TEST(Learned, KnownPartsEnterThroughW) {
  data::DataSet d = RandomData(MatrixXd::Constant(1, 1, 0.5), MatrixXd::Ones(1, 1), 15, 0.0, 9);
  d.A_known = MatrixXd::Constant(1, 1, 0.5);
  const MatrixXd base = BuildLearned(d);
  // Only the unknown part Ψ − [A′ 0] = [0 1] remains.
  MatrixXd rest(1, 2);
  rest << 0.0, 1.0;
  EXPECT_NEAR(ConstraintMargin(base, rest), 0.0, 1e-10);
}

TEST(Prior, LayoutAndPreconditions) {
  const MatrixXd p = BuildPrior(2, 1, 300.2);
  ASSERT_EQ(p.rows(), 5);
  MatrixXd expected = MatrixXd::Zero(5, 5);
  expected.diagonal() << -1, -1, -1, 300.2, 300.2;
  EXPECT_TRUE(p == expected);
  EXPECT_THROW(BuildPrior(2, 1, 0.0), ConfigError);
  EXPECT_THROW(BuildPrior(2, 1, -1.0), ConfigError);
}

TEST(Prior, NormBallMembership) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    MatrixXd psi(3, 5);
    for (int i = 0; i < psi.size(); ++i) psi.data()[i] = g(rng);
    const double s = Eigen::JacobiSVD<MatrixXd>(psi).singularValues()(0);
    EXPECT_GE(ConstraintMargin(BuildPrior(3, 2, 1.01 * s * s), psi), 0.0);
    EXPECT_LT(ConstraintMargin(BuildPrior(3, 2, 0.99 * s * s), psi), 0.0);
    // Equality in the worst direction when ψ̄ = ‖Ψ‖².
    EXPECT_NEAR(ConstraintMargin(BuildPrior(3, 2, s * s), psi), 0.0, 1e-10 * s * s);
  }
}

TEST(Combine, LinearAndRejectsNegativeScalings) {
  const data::DataSet d = RandomData(MatrixXd::Constant(1, 1, 0.5), MatrixXd::Ones(1, 1), 8, 0.1, 2);
  const MatrixXd l = BuildLearned(d);
  const MatrixXd p = BuildPrior(1, 1, 2.0);
  EXPECT_TRUE(Combine(l, p, 2.0, 3.0).isApprox(2.0 * l + 3.0 * p));
  EXPECT_TRUE(Combine(l, MatrixXd(), 0.5, 7.0).isApprox(0.5 * l));
  EXPECT_TRUE(Combine(MatrixXd(), p, 7.0, 0.5).isApprox(0.5 * p));
  EXPECT_THROW(Combine(l, p, -1.0, 1.0), ConfigError);
  EXPECT_THROW(Combine(l, p, 1.0, -1.0), ConfigError);
  EXPECT_THROW(Combine(l, BuildPrior(2, 1, 1.0), 1.0, 1.0), ConfigError);
}

TEST(Combine, MembershipSurvivesNonnegativeCombinations) {
  const MatrixXd a = MatrixXd::Constant(1, 1, 0.5);
  const MatrixXd b = MatrixXd::Ones(1, 1);
  const data::DataSet d = RandomData(a, b, 25, 0.2, 8);
  const MatrixXd l = BuildLearned(d);
  const MatrixXd p = BuildPrior(1, 1, 1.3);
  for (double td : {0.0, 0.1, 2.0}) {
    for (double tp : {0.0, 0.5, 4.0}) {
      EXPECT_GE(ConstraintMargin(Combine(l, p, td, tp), Psi(a, b)), -1e-9);
    }
  }
}

TEST(Template, PriorOnlyWhenRequested) {
  const data::DataSet d = RandomData(MatrixXd::Identity(2, 2) * 0.3, MatrixXd::Ones(2, 1), 10, 0.1, 4);
  const MultiplierTemplate t = MakeTemplate(d);
  EXPECT_TRUE(t.use_learned());
  EXPECT_FALSE(t.use_prior());
  EXPECT_EQ(t.dim(), 5);
  const MultiplierTemplate t2 = MakeTemplate(d, 300.2);
  EXPECT_TRUE(t2.use_prior());
  EXPECT_DOUBLE_EQ(t2.psi_bar, 300.2);
  const Json j = t2.ToJson();
  EXPECT_EQ(j.at("n").get<int>(), 2);
  EXPECT_EQ(j.at("m").get<int>(), 1);
}

TEST(Margin, DimensionMismatchThrows) {
  EXPECT_THROW(ConstraintMargin(BuildPrior(2, 1, 1.0), MatrixXd::Zero(1, 2)), ConfigError);
}

}  // namespace
}  // namespace ddfc::multiplier
