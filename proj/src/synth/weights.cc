#include "ddfc/synth/weights.h"

#include <fmt/format.h>

#include "ddfc/common/errors.h"

namespace ddfc::synth {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Q_r with Q_rᵀQ_r = Q, one row per nonzero eigenvalue.
MatrixXd RangeFactor(const MatrixXd& q) {
  const MatrixXd sym = 0.5 * (q + q.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  const VectorXd& ev = es.eigenvalues();
  const double top = ev.size() ? std::max(ev.maxCoeff(), 0.0) : 0.0;
  if (ev.size() && ev.minCoeff() < -1e-10 * std::max(top, 1.0)) {
    throw ConfigError(fmt::format("state weight is indefinite (eigenvalue {:.3e})",
                                  ev.minCoeff()));
  }
  std::vector<int> keep;
  for (Eigen::Index i = ev.size() - 1; i >= 0; --i) {
    if (ev(i) > 1e-12 * top) keep.push_back(static_cast<int>(i));
  }
  MatrixXd qr(keep.size(), q.rows());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    qr.row(r) = std::sqrt(ev(keep[r])) * es.eigenvectors().col(keep[r]).transpose();
  }
  return qr;
}

}  // namespace

Weights WeightsFromQR(const MatrixXd& Q, const MatrixXd& R) {
  if (Q.rows() != Q.cols() || R.rows() != R.cols()) throw ConfigError("Q and R must be square");
  Eigen::LLT<MatrixXd> rl(0.5 * (R + R.transpose()));
  if (rl.info() != Eigen::Success) throw ConfigError("input weight R must be positive definite");
  const MatrixXd qr = RangeFactor(Q);
  const MatrixXd rr = rl.matrixU();
  const int n = static_cast<int>(Q.rows());
  const int m = static_cast<int>(R.rows());
  const int pq = static_cast<int>(qr.rows());
  Weights w;
  w.Q = Q;
  w.R = R;
  w.Ce = MatrixXd::Zero(pq + m, n);
  w.Ce.topRows(pq) = qr;
  w.Deu = MatrixXd::Zero(pq + m, m);
  w.Deu.bottomRows(m) = rr;
  return w;
}

Weights BuildWeights(const grid::GridCase& gc, const VectorXd& reserves,
                     const WeightConfig& config) {
  gc.Validate();
  const int ni = gc.n_inertia;
  if (reserves.size() != ni) {
    throw ConfigError(fmt::format("{} reserves for {} devices", reserves.size(), ni));
  }
  if (!(reserves.array() > 0.0).all()) {
    throw ConfigError("participation factors need strictly positive reserves");
  }
  if (!(config.r_bar > 0.0)) throw ConfigError("r_bar must be > 0");
  const VectorXd alpha = reserves / reserves.sum();
  VectorXd r(ni);
  for (int i = 0; i < ni; ++i) r(i) = std::min(1.0 / alpha(i), config.r_bar);

  const grid::StateMap sm = grid::StateMap::FromCase(gc);
  const int n = sm.num_states();
  MatrixXd q1 = MatrixXd::Zero(ni, ni);
  if (!config.penalized_lines.empty()) {
    const grid::ReducedNetwork net = grid::KronReduce(gc);
    const int nb = ni + gc.n_load;
    MatrixXd expand(nb, ni);  // full bus angles from inertia-bus angles
    expand << MatrixXd::Identity(ni, ni), net.F;
    MatrixXd q1r(config.penalized_lines.size(), ni);
    for (std::size_t t = 0; t < config.penalized_lines.size(); ++t) {
      const int l = config.penalized_lines[t];
      if (l < 0 || l >= static_cast<int>(gc.lines.size())) {
        throw ConfigError(fmt::format("penalized line {} out of range", l));
      }
      const grid::Line& line = gc.lines[l];
      q1r.row(t) = -line.susceptance * (expand.row(line.from) - expand.row(line.to));
    }
    q1 = q1r.transpose() * q1r;
  }
  MatrixXd Q = MatrixXd::Zero(n, n);
  Q.block(sm.theta(0), sm.theta(0), ni, ni) =
      q1 + (config.q_ia_scale + config.jitter) * MatrixXd::Identity(ni, ni);
  Q.block(sm.omega(0), sm.omega(0), ni, ni) = config.q2_scale * MatrixXd::Identity(ni, ni);
  Weights w = WeightsFromQR(Q, MatrixXd(r.asDiagonal()));
  w.alpha = alpha;
  w.jitter = config.jitter;
  return w;
}

Json Weights::ToJson() const {
  Json j;
  j["Ce"] = MatrixToJson(Ce);
  j["Deu"] = MatrixToJson(Deu);
  j["Q"] = MatrixToJson(Q);
  j["R"] = MatrixToJson(R);
  j["alpha"] = VectorToJson(alpha);
  j["jitter"] = jitter;
  return j;
}

Weights Weights::FromJson(const Json& j) {
  Weights w;
  w.Ce = MatrixFromJson(j.at("Ce"));
  w.Deu = MatrixFromJson(j.at("Deu"));
  w.Q = MatrixFromJson(j.at("Q"));
  w.R = MatrixFromJson(j.at("R"));
  if (j.contains("alpha")) w.alpha = VectorFromJson(j["alpha"]);
  w.jitter = j.value("jitter", 0.0);
  if (w.Ce.rows() != w.Deu.rows()) throw ConfigError("Ce and Deu row counts differ");
  return w;
}

}  // namespace ddfc::synth
