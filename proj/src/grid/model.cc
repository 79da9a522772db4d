#include "ddfc/grid/model.h"

#include <cmath>

#include <fmt/format.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "ddfc/common/errors.h"

namespace ddfc::grid {

using Eigen::MatrixXd;
using Eigen::VectorXd;

ReducedNetwork KronReduce(const GridCase& gc) {
  gc.Validate();
  const int ni = gc.n_inertia;
  const int nl = gc.n_load;
  ReducedNetwork r;
  const MatrixXd bnn = gc.B.topLeftCorner(ni, ni);
  r.D_tilde = MatrixXd::Zero(ni, ni);
  for (int i = 0; i < ni; ++i) r.D_tilde(i, i) = gc.devices[i].d;
  if (nl == 0) {
    r.J = bnn;
    r.L = MatrixXd(ni, 0);
    r.F = MatrixXd(0, ni);
    return r;
  }
  const MatrixXd bnl = gc.B.topRightCorner(ni, nl);
  const MatrixXd bln = gc.B.bottomLeftCorner(nl, ni);
  const MatrixXd bll = gc.B.bottomRightCorner(nl, nl);
  Eigen::JacobiSVD<MatrixXd> svd(bll);
  const double smin = svd.singularValues()(nl - 1);
  if (!(smin > 1e-9) || !std::isfinite(svd.singularValues()(0))) {
    throw NumericalError(fmt::format(
        "Kron reduction: B_LL is singular (min singular value {:.3e}); the "
        "Schur complement B_NN - B_NL B_LL^-1 B_LN is undefined",
        smin));
  }
  const Eigen::PartialPivLU<MatrixXd> lu(bll);
  r.F = -lu.solve(bln);
  r.L = (-r.F).transpose();  // B symmetric: B_NL B_LL⁻¹ = (B_LL⁻¹ B_LN)ᵀ
  r.J = bnn + bnl * r.F;
  r.J = 0.5 * (r.J + r.J.transpose());
  r.D_tilde -= r.L * gc.load_damping.asDiagonal() * r.F;
  return r;
}

int StateMap::device_state(int bus) const {
  return sg_index[bus] >= 0 ? p_slow(sg_index[bus]) : p_sec(ibr_index[bus]);
}

std::vector<int> StateMap::agent_states(int bus) const {
  return {theta(bus), omega(bus), device_state(bus)};
}

StateMap StateMap::FromCase(const GridCase& gc) {
  StateMap s;
  s.n_inertia = gc.n_inertia;
  s.ibr_index.assign(gc.n_inertia, -1);
  s.sg_index.assign(gc.n_inertia, -1);
  for (int i = 0; i < gc.n_inertia; ++i) {
    if (gc.devices[i].is_sg()) {
      s.sg_index[i] = s.n_sg++;
    } else {
      s.ibr_index[i] = s.n_ibr++;
    }
  }
  return s;
}

Json StateMap::ToJson() const {
  Json j;
  j["n_inertia"] = n_inertia;
  j["n_ibr"] = n_ibr;
  j["n_sg"] = n_sg;
  j["ibr_index"] = ibr_index;
  j["sg_index"] = sg_index;
  return j;
}

StateMap StateMap::FromJson(const Json& j) {
  StateMap s;
  s.n_inertia = j.at("n_inertia");
  s.n_ibr = j.at("n_ibr");
  s.n_sg = j.at("n_sg");
  s.ibr_index = j.at("ibr_index").get<std::vector<int>>();
  s.sg_index = j.at("sg_index").get<std::vector<int>>();
  return s;
}

ContinuousModel BuildContinuous(const GridCase& gc, const ReducedNetwork& net) {
  gc.Validate();
  ContinuousModel out;
  StateMap& sm = out.state_map;
  sm = StateMap::FromCase(gc);
  const int ni = sm.n_inertia;
  const int n = sm.num_states();

  // Θ_SG, Θ_IBR indicators and the diagonal device matrices.
  MatrixXd theta_sg = MatrixXd::Zero(ni, sm.n_sg);
  MatrixXd theta_ibr = MatrixXd::Zero(ni, sm.n_ibr);
  VectorXd lam(sm.n_sg), kpri(sm.n_sg), tsg(sm.n_sg), tibr(sm.n_ibr);
  VectorXd minv(ni);
  for (int i = 0; i < ni; ++i) {
    const DeviceParams& d = gc.devices[i];
    minv(i) = 1.0 / d.m;
    if (d.is_sg()) {
      const int g = sm.sg_index[i];
      theta_sg(i, g) = 1.0;
      lam(g) = d.lambda;
      kpri(g) = d.k;
      tsg(g) = d.nu;
    } else {
      const int b = sm.ibr_index[i];
      theta_ibr(i, b) = 1.0;
      tibr(b) = d.nu_ibr;
    }
  }
  const MatrixXd S = theta_sg * (lam.cwiseProduct(kpri)).asDiagonal() * theta_sg.transpose();
  const auto Minv = minv.asDiagonal();
  const VectorXd tsg_inv = tsg.cwiseInverse();
  const VectorXd tibr_inv = tibr.cwiseInverse();
  const VectorXd one_minus_lam = VectorXd::Ones(sm.n_sg) - lam;

  const int ot = 0, ow = ni, op = 2 * ni, os = 2 * ni + sm.n_ibr;
  MatrixXd& A = out.A;
  A = MatrixXd::Zero(n, n);
  A.block(ot, ow, ni, ni) = gc.omega0 * MatrixXd::Identity(ni, ni);
  A.block(ow, ot, ni, ni) = -(Minv * net.J);
  A.block(ow, ow, ni, ni) = -(Minv * (net.D_tilde + S));
  A.block(ow, op, ni, sm.n_ibr) = Minv * theta_ibr;
  A.block(ow, os, ni, sm.n_sg) = Minv * theta_sg;
  A.block(op, op, sm.n_ibr, sm.n_ibr) = -MatrixXd(tibr_inv.asDiagonal());
  const VectorXd slow_gain = tsg_inv.cwiseProduct(one_minus_lam).cwiseProduct(kpri);
  A.block(os, ow, sm.n_sg, ni) = -(slow_gain.asDiagonal() * theta_sg.transpose());
  A.block(os, os, sm.n_sg, sm.n_sg) = -MatrixXd(tsg_inv.asDiagonal());

  MatrixXd& B = out.B;
  B = MatrixXd::Zero(n, ni);
  B.block(ow, 0, ni, ni) = Minv * theta_sg * lam.asDiagonal() * theta_sg.transpose();
  B.block(op, 0, sm.n_ibr, ni) = tibr_inv.asDiagonal() * theta_ibr.transpose();
  B.block(os, 0, sm.n_sg, ni) =
      tsg_inv.cwiseProduct(one_minus_lam).asDiagonal() * theta_sg.transpose();

  out.Bd = MatrixXd::Zero(n, ni);
  out.Bd.block(ow, 0, ni, ni) = MatrixXd(Minv);
  return out;
}

LtiModel DiscretizeZoh(const MatrixXd& Ac, const MatrixXd& Bc, const MatrixXd& Bcd,
                       double Ts) {
  if (!(Ts > 0.0)) throw ConfigError("sampling period must be positive");
  const int n = static_cast<int>(Ac.rows());
  const int m = static_cast<int>(Bc.cols());
  const int q = static_cast<int>(Bcd.cols());
  if (Ac.cols() != n || Bc.rows() != n || Bcd.rows() != n) {
    throw ConfigError("DiscretizeZoh: inconsistent dimensions");
  }
  MatrixXd aug = MatrixXd::Zero(n + m + q, n + m + q);
  aug.topLeftCorner(n, n) = Ac * Ts;
  aug.block(0, n, n, m) = Bc * Ts;
  aug.block(0, n + m, n, q) = Bcd * Ts;
  const MatrixXd e = aug.exp();
  LtiModel out;
  out.A = e.topLeftCorner(n, n);
  out.B = e.block(0, n, n, m);
  out.Bd = e.block(0, n + m, n, q);
  out.Ts = Ts;
  out.Ac = Ac;
  out.Bc = Bc;
  out.Bcd = Bcd;
  if (!out.A.allFinite() || !out.B.allFinite() || !out.Bd.allFinite()) {
    throw NumericalError("matrix exponential produced non-finite values");
  }
  return out;
}

LtiModel DiscretizeZoh(const ContinuousModel& model, double Ts) {
  LtiModel out = DiscretizeZoh(model.A, model.B, model.Bd, Ts);
  out.state_map = model.state_map;
  return out;
}

Json LtiModel::ToJson() const {
  Json j;
  j["Ts"] = Ts;
  j["A"] = MatrixToJson(A);
  j["B"] = MatrixToJson(B);
  j["Bd"] = MatrixToJson(Bd);
  j["Ac"] = MatrixToJson(Ac);
  j["Bc"] = MatrixToJson(Bc);
  j["Bcd"] = MatrixToJson(Bcd);
  j["state_map"] = state_map.ToJson();
  return j;
}

LtiModel LtiModel::FromJson(const Json& j) {
  LtiModel m;
  m.Ts = j.at("Ts");
  m.A = MatrixFromJson(j.at("A"));
  m.B = MatrixFromJson(j.at("B"));
  m.Bd = MatrixFromJson(j.at("Bd"));
  m.Ac = MatrixFromJson(j.at("Ac"));
  m.Bc = MatrixFromJson(j.at("Bc"));
  m.Bcd = MatrixFromJson(j.at("Bcd"));
  m.state_map = StateMap::FromJson(j.at("state_map"));
  return m;
}

double SpectralRadius(const MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  return a.eigenvalues().cwiseAbs().maxCoeff();
}

StabilityReport AnalyzeOpenLoop(const LtiModel& model) {
  StabilityReport r;
  const int n = model.n();
  const int ni = model.state_map.n_inertia;
  r.spectral_radius = SpectralRadius(model.A);
  VectorXd v = VectorXd::Zero(n);
  v.head(ni).setConstant(1.0 / std::sqrt(static_cast<double>(ni)));
  r.common_mode_invariant =
      ni > 0 && (model.A * v - v).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + model.A.norm());
  if (r.common_mode_invariant) {
    // Orthonormal complement T of v; eig(A) = {1} ∪ eig(TᵀAT).
    Eigen::HouseholderQR<MatrixXd> qr(v);
    const MatrixXd q = qr.householderQ();
    const MatrixXd t = q.rightCols(n - 1);
    r.reduced_spectral_radius = SpectralRadius(t.transpose() * model.A * t);
  } else {
    r.reduced_spectral_radius = r.spectral_radius;
  }
  r.stable = r.reduced_spectral_radius < 1.0;
  return r;
}

double DroopFrequencyOffset(const GridCase& gc, double total_injection) {
  double s = gc.load_damping.sum();
  for (const auto& d : gc.devices) s += d.d + (d.is_sg() ? d.k : 0.0);
  return total_injection / s;
}

}  // namespace ddfc::grid
