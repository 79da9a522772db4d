#include <random>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "ddfc/common/errors.h"
#include "ddfc/sdp/problem.h"
#include "ddfc/sdp/solver.h"

namespace ddfc::sdp {
namespace {

using Eigen::MatrixXd;

SdpProblem IdentityProblem() {
  SdpProblem p;
  p.AddSymmetricMatrix("P", 2);
  AffineMatrix e(2, 2);
  e.AddVariable("P").AddConstant(-MatrixXd::Identity(2, 2));
  p.AddLmi("P>=I", e, LmiSense::kPositive, false);
  p.SetObjective(LinearExpr().AddTrace("P", 2, 1.0));
  return p;
}

TEST(SdpSolve, MinTraceAboveIdentity) {
  const SdpSolution s = Solve(IdentityProblem());
  ASSERT_EQ(s.status, SolveStatus::kOptimal) << s.stats.message;
  EXPECT_NEAR(s.objective_value, 2.0, 1e-6);
  EXPECT_TRUE(s.Matrix("P").isApprox(MatrixXd::Identity(2, 2), 1e-6));
  const SolutionReport r = CheckSolution(IdentityProblem(), s.values);
  EXPECT_TRUE(r.feasible);
  EXPECT_GE(r.worst_lmi, -1e-9);
}

TEST(SdpSolve, ContradictoryCones) {
  SdpProblem p;
  p.AddSymmetricMatrix("P", 2);
  AffineMatrix a(2, 2);
  a.AddVariable("P").AddConstant(-MatrixXd::Identity(2, 2));
  p.AddLmi("P>=I", a, LmiSense::kPositive, false);
  AffineMatrix b(2, 2);
  b.AddVariable("P");
  p.AddLmi("P<=0", b, LmiSense::kNegative, false);
  EXPECT_EQ(Solve(p).status, SolveStatus::kInfeasible);
}

TEST(SdpSolve, TwoByTwoPsdBound) {
  SdpProblem p;
  p.AddScalar("t");
  AffineMatrix e(2, 2);
  e.AddScaled("t", MatrixXd::Identity(2, 2));
  MatrixXd off(2, 2);
  off << 0, 1, 1, 0;
  e.AddConstant(off);
  p.AddLmi("m", e, LmiSense::kPositive, false);
  p.SetObjective(LinearExpr().AddScalar("t", 1.0));
  const SdpSolution s = Solve(p);
  ASSERT_EQ(s.status, SolveStatus::kOptimal) << s.stats.message;
  EXPECT_NEAR(s.Scalar("t"), 1.0, 1e-6);
}

TEST(SdpSolve, StrictMarginIsApplied) {
  SdpProblem p;
  p.AddScalar("t");
  AffineMatrix e(1, 1);
  e.AddScaled("t", MatrixXd::Identity(1, 1));
  p.AddLmi("t>0", e);
  p.SetObjective(LinearExpr().AddScalar("t", 1.0));
  SolverOptions o;
  o.strict_margin = 1e-3;
  const SdpSolution s = Solve(p, o);
  ASSERT_EQ(s.status, SolveStatus::kOptimal) << s.stats.message;
  EXPECT_NEAR(s.Scalar("t"), 1e-3, 1e-7);
}

TEST(SdpSolve, EqualitiesAndInequalities) {
  // min x + y s.t. [[x, 1], [1, y]] ⪰ 0, x = 2 y, y ≥ 0.1.
  SdpProblem p;
  p.AddScalar("x");
  p.AddScalar("y");
  AffineMatrix e(2, 2);
  MatrixXd ex = MatrixXd::Zero(2, 2), ey = MatrixXd::Zero(2, 2), off(2, 2);
  ex(0, 0) = 1;
  ey(1, 1) = 1;
  off << 0, 1, 1, 0;
  e.AddScaled("x", ex).AddScaled("y", ey).AddConstant(off);
  p.AddLmi("m", e, LmiSense::kPositive, false);
  p.AddEquality("x=2y", LinearExpr().AddScalar("x", 1).AddScalar("y", -2));
  p.AddInequality("y>=0.1", LinearExpr(-0.1).AddScalar("y", 1));
  p.SetObjective(LinearExpr().AddScalar("x", 1).AddScalar("y", 1));
  const SdpSolution s = Solve(p);
  ASSERT_EQ(s.status, SolveStatus::kOptimal) << s.stats.message;
  // x y ≥ 1 with x = 2y: y = 1/√2.
  EXPECT_NEAR(s.Scalar("y"), 1.0 / std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(s.Scalar("x"), std::sqrt(2.0), 1e-6);
}

TEST(SdpSolve, FeasibilityOnlyReturnsCertifiedPoint) {
  // Discrete Lyapunov: A P Aᵀ − P ≺ 0, P ≻ 0 (homogeneous feasible set).
  MatrixXd a(2, 2);
  a << 0.9, 0.5, -0.2, 0.7;
  SdpProblem p;
  p.AddSymmetricMatrix("P", 2);
  AffineMatrix pos(2, 2);
  pos.AddVariable("P");
  p.AddLmi("P>0", pos);
  AffineMatrix lyap(2, 2);
  lyap.AddProduct(a, "P", a.transpose()).AddVariable("P", -1.0);
  p.AddLmi("lyap", lyap, LmiSense::kNegative);
  const SdpSolution s = Solve(p);
  ASSERT_EQ(s.status, SolveStatus::kOptimal) << s.stats.message;
  const SolutionReport r = CheckSolution(p, s.values);
  EXPECT_TRUE(r.feasible);
  EXPECT_GT(r.worst_lmi, 0.0);
}

TEST(SdpSolve, UnstableLyapunovIsInfeasible) {
  MatrixXd a(2, 2);
  a << 1.1, 0.0, 0.3, 0.5;
  SdpProblem p;
  p.AddSymmetricMatrix("P", 2);
  AffineMatrix pos(2, 2);
  pos.AddVariable("P").AddConstant(-MatrixXd::Identity(2, 2));
  p.AddLmi("P>=I", pos, LmiSense::kPositive, false);
  AffineMatrix lyap(2, 2);
  lyap.AddProduct(a, "P", a.transpose()).AddVariable("P", -1.0);
  p.AddLmi("lyap", lyap, LmiSense::kNegative);
  EXPECT_EQ(Solve(p).status, SolveStatus::kInfeasible);
}

TEST(SdpSolve, GeneralMatrixAndTransposedTerms) {
  // min trace(P) s.t. [[P, Kᵀ], [K, I]] ⪰ 0 with K fixed by equalities:
  // P ⪰ KᵀK, optimum trace(KᵀK).
  MatrixXd k0(1, 2);
  k0 << 1.0, -2.0;
  SdpProblem p;
  p.AddSymmetricMatrix("P", 2);
  p.AddGeneralMatrix("K", 1, 2);
  for (int j = 0; j < 2; ++j) {
    p.AddEquality(fmt::format("K{}", j), LinearExpr(-k0(0, j)).Add("K", 0, j, 1.0));
  }
  BlockLmiBuilder b({2, 1});
  AffineMatrix pp(2, 2);
  pp.AddVariable("P");
  AffineMatrix kt(2, 1);
  kt.AddVariable("K", 1.0, true);
  b.Set(0, 0, pp);
  b.Set(0, 1, kt);
  b.Set(1, 1, AffineMatrix::Constant(MatrixXd::Identity(1, 1)));
  p.AddLmi("schur", b.Build(), LmiSense::kPositive, false);
  p.SetObjective(LinearExpr().AddTrace("P", 2, 1.0));
  const SdpSolution s = Solve(p);
  ASSERT_EQ(s.status, SolveStatus::kOptimal) << s.stats.message;
  EXPECT_NEAR(s.objective_value, 5.0, 1e-6);
  EXPECT_TRUE(s.Matrix("K").isApprox(k0, 1e-9));
}

TEST(SdpSolve, UnboundedObjectiveIsNotOptimal) {
  SdpProblem p;
  p.AddScalar("t");
  AffineMatrix e(1, 1);
  e.AddScaled("t", MatrixXd::Identity(1, 1));
  p.AddLmi("t>=0", e, LmiSense::kPositive, false);
  p.SetObjective(LinearExpr().AddScalar("t", -1.0));
  EXPECT_EQ(Solve(p).status, SolveStatus::kNumericalFailure);
}

TEST(SdpSolve, AsymmetricLmiIsConfigError) {
  SdpProblem p;
  p.AddGeneralMatrix("K", 2, 2);
  AffineMatrix e(2, 2);
  e.AddVariable("K");
  p.AddLmi("bad", e);
  EXPECT_THROW(Solve(p), ConfigError);
}

TEST(SdpSolve, DimensionMismatchIsConfigError) {
  SdpProblem p;
  p.AddSymmetricMatrix("P", 3);
  AffineMatrix e(2, 2);
  e.AddVariable("P");
  p.AddLmi("bad", e);
  EXPECT_THROW(Solve(p), ConfigError);
}

TEST(CheckSolution, FlagsPerturbation) {
  const SdpProblem p = IdentityProblem();
  const SdpSolution s = Solve(p);
  ASSERT_EQ(s.status, SolveStatus::kOptimal);
  ValueMap v = s.values;
  const double tol = 1e-7;
  v["P"] = MatrixXd::Identity(2, 2) - 2 * tol * MatrixXd::Identity(2, 2);
  const SolutionReport r = CheckSolution(p, v, tol);
  EXPECT_FALSE(r.feasible);
  EXPECT_NEAR(r.worst_lmi, -2 * tol, 1e-12);
}

TEST(SdpProblemJson, RoundTripIsCanonical) {
  SdpProblem p = IdentityProblem();
  p.AddScalar("tau", true);
  p.AddInequality("lin", LinearExpr(1.0).AddScalar("tau", -1.0));
  const std::string a = p.CanonicalJson();
  const SdpProblem q = SdpProblem::FromJson(p.ToJson());
  EXPECT_EQ(a, q.CanonicalJson());
  EXPECT_EQ(IdentityProblem().CanonicalJson(), IdentityProblem().CanonicalJson());
}

// Property: random feasible LMI problems never return a point that fails
// re-substitution by more than 10·feas_tol.
TEST(SdpProperty, RoundTripResidualsRandomProblems) {
  std::mt19937 rng(7);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 15; ++trial) {
    const int n = 3;
    MatrixXd a = MatrixXd::NullaryExpr(n, n, [&] { return g(rng); });
    a /= 1.2 * a.eigenvalues().cwiseAbs().maxCoeff();
    MatrixXd c = MatrixXd::NullaryExpr(n, n, [&] { return g(rng); });
    c = c * c.transpose() + MatrixXd::Identity(n, n);
    SdpProblem p;
    p.AddSymmetricMatrix("P", n);
    AffineMatrix pos(n, n);
    pos.AddVariable("P").AddConstant(-MatrixXd::Identity(n, n));
    p.AddLmi("P>=I", pos, LmiSense::kPositive, false);
    AffineMatrix lyap(n, n);
    lyap.AddProduct(a.transpose(), "P", a).AddVariable("P", -1.0).AddConstant(c);
    p.AddLmi("lyap", lyap, LmiSense::kNegative, false);
    p.SetObjective(LinearExpr().AddTrace("P", n, 1.0));
    const SdpSolution s = Solve(p);
    ASSERT_EQ(s.status, SolveStatus::kOptimal) << trial << " " << s.stats.message;
    const SolutionReport r = CheckSolution(p, s.values);
    EXPECT_GE(r.worst_lmi, -10 * 1e-7);
    EXPECT_LE(r.worst_linear, 10 * 1e-7);
  }
}

}  // namespace
}  // namespace ddfc::sdp
