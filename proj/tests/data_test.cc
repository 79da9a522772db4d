#include <filesystem>

#include <gtest/gtest.h>

#include "ddfc/common/errors.h"
#include "ddfc/data/dataset.h"
#include "ddfc/grid/model.h"
#include "ddfc/grid/simulate.h"
#include "ddfc/harness/ieee39.h"
#include "ddfc/multiplier/multiplier.h"
#include "test_cases.h"

namespace ddfc::data {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

grid::LtiModel ThreeBusModel() {
  return grid::DiscretizeZoh(grid::BuildContinuous(ddfc::testing::ThreeBusCase()), 1.0);
}

const grid::LtiModel& Ieee39Model() {
  static const grid::LtiModel model =
      grid::DiscretizeZoh(grid::BuildContinuous(harness::BuildIeee39Case(1).grid), 1.0);
  return model;
}

grid::DisturbanceSpec Noise(double amplitude, std::uint64_t seed) {
  grid::DisturbanceSpec d;
  d.stochastic_amplitude = amplitude;
  d.seed = seed;
  return d;
}

TEST(PeSignal, ShapeRangeAndSeed) {
  const MatrixXd u = GeneratePeSignal(10, 400, 0.7, 5);
  EXPECT_EQ(u.rows(), 10);
  EXPECT_EQ(u.cols(), 400);
  EXPECT_LE(u.cwiseAbs().maxCoeff(), 0.7);
  EXPECT_TRUE(u.isApprox(GeneratePeSignal(10, 400, 0.7, 5)));
  EXPECT_FALSE(u.isApprox(GeneratePeSignal(10, 400, 0.7, 6)));
  EXPECT_THROW(GeneratePeSignal(10, 400, 0.0, 5), ConfigError);
}

TEST(Collect, NoiseFreeDataSatisfyTheModelExactly) {
  const grid::LtiModel model = ThreeBusModel();
  const DataSet d = Collect(model, GeneratePeSignal(model.m(), 60, 1.0, 3), Noise(0.0, 0));
  EXPECT_EQ(d.transitions(), 60);
  EXPECT_DOUBLE_EQ(d.d_bar, 0.0);
  const MatrixXd res = d.Xplus - model.A * d.X - model.B * d.U;
  EXPECT_LE(res.cwiseAbs().maxCoeff(), 1e-10 * (1.0 + d.Xplus.cwiseAbs().maxCoeff()));
  EXPECT_TRUE(d.X.rightCols(59).isApprox(d.Xplus.leftCols(59)));
}

TEST(Collect, NoiseBoundIsTheExactStateNoiseEnergy) {
  const grid::LtiModel model = ThreeBusModel();
  CollectOptions opt;
  opt.inflation = 2.5;
  const DataSet d = Collect(model, GeneratePeSignal(model.m(), 80, 1.0, 3), Noise(0.3, 9), opt);
  const MatrixXd w = d.Xplus - model.A * d.X - model.B * d.U;
  EXPECT_NEAR(d.noise_energy.sum(), w.squaredNorm(), 1e-9 * w.squaredNorm());
  EXPECT_NEAR(d.d_bar, 2.5 * w.squaredNorm(), 1e-9 * d.d_bar);
  EXPECT_GT(d.disturbance_energy, 0.0);
}

TEST(Collect, ZeroExperimentGivesZeroDataAndFailsPersistency) {
  const grid::LtiModel model = ThreeBusModel();
  const DataSet d = Collect(model, MatrixXd::Zero(model.m(), 30), Noise(0.0, 0));
  EXPECT_TRUE(d.X.isZero(0.0));
  EXPECT_TRUE(d.Xplus.isZero(0.0));
  EXPECT_FALSE(CheckPersistency(d).pass);
}

TEST(Collect, RefusesUnstablePlant) {
  grid::LtiModel model = ThreeBusModel();
  model.A *= 1.2;
  EXPECT_THROW(Collect(model, GeneratePeSignal(model.m(), 20, 1.0, 1), Noise(0.0, 0)),
               ConfigError);
  CollectOptions opt;
  opt.require_stable = false;
  EXPECT_NO_THROW(Collect(model, GeneratePeSignal(model.m(), 20, 1.0, 1), Noise(0.0, 0), opt));
}

TEST(Collect, RejectsInflationBelowOne) {
  const grid::LtiModel model = ThreeBusModel();
  CollectOptions opt;
  opt.inflation = 0.5;
  EXPECT_THROW(Collect(model, GeneratePeSignal(model.m(), 20, 1.0, 1), Noise(0.1, 1), opt),
               ConfigError);
}

// E[d²] = a²/3 for d ~ U[−a, a]; 400 steps at 10 buses.
TEST(Collect, DisturbanceEnergyMatchesUniformMoment) {
  const grid::LtiModel& model = Ieee39Model();
  const double expected = 400.0 * 10.0 * 0.25 / 3.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const DataSet d = Collect(model, GeneratePeSignal(10, 400, 1.0, seed), Noise(0.5, seed + 1000));
    EXPECT_GE(d.disturbance_energy, 0.9 * expected) << "seed " << seed;
    EXPECT_LE(d.disturbance_energy, 1.1 * expected) << "seed " << seed;
  }
}

TEST(Collect, TrueSystemSatisfiesTheLearnedConstraint) {
  const grid::LtiModel model = ThreeBusModel();
  MatrixXd psi(model.n(), model.n() + model.m());
  psi << model.A, model.B;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const DataSet d = Collect(model, GeneratePeSignal(model.m(), 50, 1.0, seed), Noise(0.2, seed));
    const double margin = multiplier::ConstraintMargin(multiplier::BuildLearned(d), psi);
    EXPECT_GE(margin, -1e-9 * (1.0 + d.d_bar)) << "seed " << seed;
  }
}

TEST(Persistency, ConstantInputFromRestFails) {
  const grid::LtiModel model = ThreeBusModel();
  const DataSet d = Collect(model, MatrixXd::Ones(model.m(), 50), Noise(0.0, 0));
  const PersistencyReport r = CheckPersistency(d);
  EXPECT_FALSE(r.pass);
  EXPECT_LT(r.rank, r.required);
}

TEST(Persistency, TooFewColumnsFails) {
  const grid::LtiModel model = ThreeBusModel();
  const int required = model.n() + model.m();
  const DataSet d =
      Collect(model, GeneratePeSignal(model.m(), required - 1, 1.0, 2), Noise(0.0, 0));
  const PersistencyReport r = CheckPersistency(d);
  EXPECT_EQ(r.required, required);
  EXPECT_FALSE(r.pass);
  EXPECT_DOUBLE_EQ(r.sigma_min, 0.0);
}

TEST(Persistency, RandomProbePasses) {
  const grid::LtiModel model = ThreeBusModel();
  const DataSet d = Collect(model, GeneratePeSignal(model.m(), 100, 1.0, 2), Noise(0.0, 0));
  const PersistencyReport r = CheckPersistency(d);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.rank, model.n() + model.m());
  EXPECT_GT(r.sigma_min, 0.0);
}

TEST(Experiments, PassPersistencyOnIeee39AcrossSeeds) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const grid::LtiModel model =
        grid::DiscretizeZoh(grid::BuildContinuous(harness::BuildIeee39Case(seed).grid), 1.0);
    ExperimentDesign design;
    design.seed = seed;
    const DataSet d = CollectExperiments(model, design);
    EXPECT_EQ(d.transitions(), 400);
    EXPECT_EQ(d.trajectories, 40);
    EXPECT_TRUE(CheckPersistency(d).pass) << "seed " << seed;
  }
}

TEST(Experiments, NoiseFreeDesignSatisfiesTheModel) {
  const grid::LtiModel model = ThreeBusModel();
  ExperimentDesign design;
  design.trajectories = 5;
  design.length = 7;
  design.noise_amplitude = 0.0;
  const DataSet d = CollectExperiments(model, design);
  EXPECT_EQ(d.transitions(), 35);
  EXPECT_DOUBLE_EQ(d.d_bar, 0.0);
  const MatrixXd res = d.Xplus - model.A * d.X - model.B * d.U;
  EXPECT_LE(res.cwiseAbs().maxCoeff(), 1e-10 * (1.0 + d.Xplus.cwiseAbs().maxCoeff()));
}

TEST(Experiments, JsonRoundTripAndValidation) {
  ExperimentDesign d;
  d.trajectories = 3;
  d.x0_amplitude = 0.0;
  d.seed = 42;
  const ExperimentDesign back = ExperimentDesign::FromJson(d.ToJson());
  EXPECT_EQ(back.trajectories, 3);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_DOUBLE_EQ(back.x0_amplitude, 0.0);
  Json bad = d.ToJson();
  bad["length"] = 0;
  EXPECT_THROW(ExperimentDesign::FromJson(bad), ConfigError);
  bad = d.ToJson();
  bad["probe_amplitude"] = -1.0;
  EXPECT_THROW(ExperimentDesign::FromJson(bad), ConfigError);
}

TEST(Concatenate, SplitAtTrajectoryBoundaryEqualsOneRun) {
  const grid::LtiModel model = ThreeBusModel();
  const MatrixXd u = GeneratePeSignal(model.m(), 400, 1.0, 11);
  const MatrixXd dist =
      grid::GenerateDisturbance(Noise(0.2, 12), model.state_map.n_inertia, 400).total;
  const DataSet whole = Collect(model, u, dist);
  const DataSet first = Collect(model, u.leftCols(200), dist.leftCols(200));
  CollectOptions opt;
  opt.x0 = first.Xplus.col(199);
  const DataSet second = Collect(model, u.rightCols(200), dist.rightCols(200), opt);
  const DataSet joined = Concatenate({first, second});
  EXPECT_EQ(joined.trajectories, 2);
  EXPECT_LE((joined.X - whole.X).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((joined.Xplus - whole.Xplus).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(joined.U == whole.U);
  EXPECT_NEAR(joined.d_bar, whole.d_bar, 1e-10 * whole.d_bar);
  EXPECT_NEAR(joined.disturbance_energy, whole.disturbance_energy, 1e-10);
}

TEST(Concatenate, EmptyIsNeutralAndRankGrows) {
  const grid::LtiModel model = ThreeBusModel();
  const DataSet a = Collect(model, GeneratePeSignal(model.m(), 4, 1.0, 1), Noise(0.1, 1));
  const DataSet b = Collect(model, GeneratePeSignal(model.m(), 5, 1.0, 2), Noise(0.1, 2));
  const DataSet same = Concatenate({a, DataSet{}});
  EXPECT_TRUE(same.X == a.X);
  EXPECT_TRUE(same.U == a.U);
  EXPECT_DOUBLE_EQ(same.d_bar, a.d_bar);
  const DataSet ab = Concatenate({a, b});
  EXPECT_EQ(ab.transitions(), 9);
  EXPECT_NEAR(ab.d_bar, a.d_bar + b.d_bar, 1e-12);
  EXPECT_GE(CheckPersistency(ab).rank,
            std::max(CheckPersistency(a).rank, CheckPersistency(b).rank));
}

TEST(Concatenate, DimensionMismatchThrows) {
  const grid::LtiModel model = ThreeBusModel();
  const DataSet a = Collect(model, GeneratePeSignal(model.m(), 4, 1.0, 1), Noise(0.0, 0));
  DataSet b;
  b.X = MatrixXd::Zero(2, 3);
  b.Xplus = MatrixXd::Zero(2, 3);
  b.U = MatrixXd::Zero(1, 3);
  EXPECT_THROW(Concatenate({a, b}), ConfigError);
}

TEST(Bundle, RoundTripIsExact) {
  const grid::LtiModel model = ThreeBusModel();
  DataSet d = Collect(model, GeneratePeSignal(model.m(), 25, 1.0, 4), Noise(0.3, 5));
  d.seed = 5;
  const std::string dir =
      (std::filesystem::temp_directory_path() / "ddfc_bundle_test").string();
  std::filesystem::remove_all(dir);
  SaveBundle(d, dir);
  const DataSet back = LoadBundle(dir);
  EXPECT_TRUE(back.X == d.X);
  EXPECT_TRUE(back.Xplus == d.Xplus);
  EXPECT_TRUE(back.U == d.U);
  EXPECT_DOUBLE_EQ(back.d_bar, d.d_bar);
  EXPECT_DOUBLE_EQ(back.disturbance_energy, d.disturbance_energy);
  EXPECT_TRUE(back.noise_energy == d.noise_energy);
  EXPECT_EQ(back.seed, 5u);
  std::filesystem::remove_all(dir);
}

TEST(Bundle, MissingFileThrows) {
  EXPECT_ANY_THROW(LoadBundle("/nonexistent/ddfc/bundle"));
}

TEST(DataSet, WSubtractsKnownParts) {
  DataSet d;
  d.X = MatrixXd::Ones(1, 3);
  d.U = MatrixXd::Constant(1, 3, 2.0);
  d.Xplus = MatrixXd::Constant(1, 3, 5.0);
  EXPECT_TRUE(d.W() == d.Xplus);
  d.A_known = MatrixXd::Constant(1, 1, 1.0);
  d.B_known = MatrixXd::Constant(1, 1, 1.5);
  EXPECT_TRUE(d.W().isApprox(MatrixXd::Constant(1, 3, 1.0)));
}

}  // namespace
}  // namespace ddfc::data
