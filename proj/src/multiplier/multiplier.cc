#include "ddfc/multiplier/multiplier.h"

#include <fmt/format.h>

#include "ddfc/common/errors.h"

namespace ddfc::multiplier {

using Eigen::MatrixXd;

namespace {

// Both noise-side symbols of the data multiplier are instantiated with W.
// Setting this to false uses X⁺ for them instead (identical while A′ = B′ = 0).
constexpr bool kNoiseSymbolsAreW = true;

}  // namespace

MatrixXd BuildLearned(const data::DataSet& data) {
  data.Validate();
  const int n = data.n();
  const int m = data.m();
  const MatrixXd z = data.Z();
  const MatrixXd w = kNoiseSymbolsAreW ? data.W() : data.Xplus;
  MatrixXd base(2 * n + m, 2 * n + m);
  base.topLeftCorner(n + m, n + m) = -(z * z.transpose());
  base.topRightCorner(n + m, n) = z * w.transpose();
  base.bottomLeftCorner(n, n + m) = base.topRightCorner(n + m, n).transpose();
  base.bottomRightCorner(n, n) = -(w * w.transpose());
  base.bottomRightCorner(n, n).diagonal().array() += data.d_bar;
  return base;
}

MatrixXd BuildPrior(int n, int m, double psi_bar) {
  if (!(psi_bar > 0.0)) {
    throw ConfigError(fmt::format("prior norm bound must be > 0, got {}", psi_bar));
  }
  MatrixXd base = MatrixXd::Zero(2 * n + m, 2 * n + m);
  base.topLeftCorner(n + m, n + m).diagonal().setConstant(-1.0);
  base.bottomRightCorner(n, n).diagonal().setConstant(psi_bar);
  return base;
}

MatrixXd Combine(const MatrixXd& learned, const MatrixXd& prior, double tau_d, double tau_pr) {
  if (!(tau_d >= 0.0) || !(tau_pr >= 0.0)) {
    throw ConfigError(fmt::format("multiplier scalings must be >= 0 (tau_d={}, tau_pr={})",
                                  tau_d, tau_pr));
  }
  if (learned.size() && prior.size() && learned.rows() != prior.rows()) {
    throw ConfigError("learned and prior multipliers differ in size");
  }
  const auto dim = learned.size() ? learned.rows() : prior.rows();
  MatrixXd out = MatrixXd::Zero(dim, dim);
  if (learned.size()) out += tau_d * learned;
  if (prior.size()) out += tau_pr * prior;
  return out;
}

MultiplierTemplate MakeTemplate(const data::DataSet& data, double psi_bar) {
  MultiplierTemplate t;
  t.n = data.n();
  t.m = data.m();
  t.learned_base = BuildLearned(data);
  if (psi_bar > 0.0) {
    t.prior_base = BuildPrior(t.n, t.m, psi_bar);
    t.psi_bar = psi_bar;
  }
  return t;
}

double ConstraintMargin(const MatrixXd& base, const MatrixXd& psi) {
  const auto n = psi.rows();
  if (base.rows() != base.cols() || base.rows() != psi.cols() + n) {
    throw ConfigError("multiplier and system matrix dimensions disagree");
  }
  MatrixXd left(n, base.rows());
  left << psi, MatrixXd::Identity(n, n);
  const MatrixXd q = left * base * left.transpose();
  return Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (q + q.transpose()),
                                                 Eigen::EigenvaluesOnly)
      .eigenvalues()(0);
}

Json MultiplierTemplate::ToJson() const {
  Json j;
  j["n"] = n;
  j["m"] = m;
  j["use_learned"] = use_learned();
  j["use_prior"] = use_prior();
  j["psi_bar"] = psi_bar;
  return j;
}

}  // namespace ddfc::multiplier
