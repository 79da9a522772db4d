#include "ipm.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Sparse>
#include <fmt/format.h>

namespace ddfc::sdp::internal {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

// <F, R> for a symmetric sparse coefficient and any dense R.
double Inner(const SparseSym& f, const MatrixXd& r) {
  double s = 0.0;
  for (int e = 0; e < f.nnz(); ++e) s += f.val[e] * r(f.row[e], f.col[e]);
  return s;
}

// Largest α with Z + α dZ ⪰ 0 (inf if unbounded). Z must be positive definite.
double MaxStep(const Eigen::LLT<MatrixXd>& z_chol, const MatrixXd& dz) {
  const auto l = z_chol.matrixL();
  MatrixXd t = l.solve(dz);
  MatrixXd w = l.solve(t.transpose());
  w = 0.5 * (w + w.transpose());
  const double lmin =
      Eigen::SelfAdjointEigenSolver<MatrixXd>(w, Eigen::EigenvaluesOnly)
          .eigenvalues()(0);
  return lmin >= 0.0 ? kInf : -1.0 / lmin;
}

double MaxStepLinear(const VectorXd& z, const VectorXd& dz) {
  double a = kInf;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (dz(i) < 0.0) a = std::min(a, -z(i) / dz(i));
  }
  return a;
}

class Solver {
 public:
  Solver(const ConeProgram& p, const IpmOptions& o) : p_(p), opt_(o) {
    n_ = p.num_vars;
    nb_ = static_cast<int>(p.blocks.size());
    nr_ = static_cast<int>(p.rows.size());
    std::vector<Eigen::Triplet<double>> trips;
    b_ = VectorXd(nr_);
    for (int r = 0; r < nr_; ++r) {
      b_(r) = p.rows[r].b;
      for (const auto& [v, a] : p.rows[r].terms) trips.emplace_back(r, v, a);
    }
    a_.resize(nr_, n_);
    a_.setFromTriplets(trips.begin(), trips.end());
    at_ = a_.transpose();
    ntot_ = nr_;
    f0_norm_ = b_.size() ? b_.cwiseAbs().maxCoeff() : 0.0;
    for (const auto& b : p.blocks) {
      ntot_ += b.dim;
      f0_norm_ = std::max(f0_norm_, b.f0.cwiseAbs().maxCoeff());
    }
    c_norm_ = p.c.size() ? p.c.cwiseAbs().maxCoeff() : 0.0;
  }

  IpmResult Run(const std::function<IpmMonitor(const IpmIterate&)>& monitor,
                const VectorXd& y0) {
    IpmResult res;
    Initialize(y0);
    for (int it = 0; it <= opt_.max_iterations; ++it) {
      res.iterations = it;
      if (!ComputeInverses()) {
        res.status = IpmStatus::kFailure;
        res.message = "slack matrix lost definiteness";
        break;
      }
      Residuals();
      IpmIterate info;
      info.iteration = it;
      info.y = &y_;
      info.primal_objective = p_.c.dot(y_) + p_.c0;
      double dobj = p_.c0 - b_.dot(x_);
      for (int k = 0; k < nb_; ++k) dobj -= p_.blocks[k].f0.cwiseProduct(X_[k]).sum();
      info.dual_objective = dobj;
      double pinf = rd_.size() ? rd_.cwiseAbs().maxCoeff() : 0.0;
      for (int k = 0; k < nb_; ++k) pinf = std::max(pinf, Rd_[k].cwiseAbs().maxCoeff());
      info.primal_infeasibility = pinf / (1.0 + f0_norm_);
      info.dual_infeasibility =
          (rp_.size() ? rp_.cwiseAbs().maxCoeff() : 0.0) / (1.0 + c_norm_);
      info.mu = mu_;
      res.y = y_;
      res.primal_objective = info.primal_objective;
      res.dual_objective = info.dual_objective;
      if (!std::isfinite(info.primal_objective) || !std::isfinite(dobj) ||
          !std::isfinite(mu_)) {
        res.status = IpmStatus::kFailure;
        res.message = "non-finite iterate";
        break;
      }
      const double scale = 1.0 + std::abs(info.primal_objective) + std::abs(dobj);
      const double gap =
          std::max(std::abs(info.primal_objective - dobj), mu_ * ntot_) / scale;
      if (opt_.verbose) {
        fmt::print(stderr,
                   "  it {:3d} pobj {: .8e} dobj {: .8e} gap {:.2e} pinf {:.2e} "
                   "dinf {:.2e} mu {:.2e}\n",
                   it, info.primal_objective, dobj, gap,
                   info.primal_infeasibility, info.dual_infeasibility, mu_);
      }
      if (monitor) {
        const IpmMonitor m = monitor(info);
        if (m == IpmMonitor::kStopFeasible) {
          res.status = IpmStatus::kStoppedFeasible;
          return res;
        }
        if (m == IpmMonitor::kStopInfeasible) {
          res.status = IpmStatus::kStoppedInfeasible;
          return res;
        }
      }
      if (gap < opt_.gap_tol && info.primal_infeasibility < opt_.infeas_tol &&
          info.dual_infeasibility < opt_.infeas_tol) {
        res.status = IpmStatus::kConverged;
        return res;
      }
      if (it == opt_.max_iterations) {
        res.status = IpmStatus::kIterationLimit;
        res.message = "iteration limit";
        break;
      }
      if (!Step()) {
        res.status = IpmStatus::kFailure;
        res.message = fail_;
        break;
      }
    }
    return res;
  }

 private:
  void Initialize(const VectorXd& y0) {
    y_ = y0.size() == n_ ? y0 : VectorXd::Zero(n_);
    X_.assign(nb_, MatrixXd());
    S_.assign(nb_, MatrixXd());
    const double eta = 10.0;
    for (int k = 0; k < nb_; ++k) {
      const MatrixXd f = EvaluateBlock(p_.blocks[k], y_);
      const double lmin =
          Eigen::SelfAdjointEigenSolver<MatrixXd>(f, Eigen::EigenvaluesOnly)
              .eigenvalues()(0);
      S_[k] = f;
      S_[k].diagonal().array() += std::max(0.0, eta - lmin);
      X_[k] = eta * MatrixXd::Identity(p_.blocks[k].dim, p_.blocks[k].dim);
    }
    VectorXd row = a_ * y_ + b_;
    s_ = row.cwiseMax(eta);
    x_ = (eta * eta) * s_.cwiseInverse();
  }

  bool ComputeInverses() {
    Sinv_.resize(nb_);
    for (int k = 0; k < nb_; ++k) {
      Eigen::LLT<MatrixXd> llt(S_[k]);
      if (llt.info() != Eigen::Success) return false;
      Sinv_[k] = llt.solve(MatrixXd::Identity(S_[k].rows(), S_[k].cols()));
      Sinv_[k] = 0.5 * (Sinv_[k] + Sinv_[k].transpose());
    }
    return true;
  }

  void Residuals() {
    Rd_.resize(nb_);
    rp_ = p_.c - at_ * x_;
    double comp = x_.dot(s_);
    for (int k = 0; k < nb_; ++k) {
      const ConeBlock& blk = p_.blocks[k];
      Rd_[k] = EvaluateBlock(blk, y_) - S_[k];
      for (std::size_t v = 0; v < blk.vars.size(); ++v) {
        rp_(blk.vars[v]) -= Inner(blk.coeffs[v], X_[k]);
      }
      comp += X_[k].cwiseProduct(S_[k]).sum();
    }
    rd_ = a_ * y_ + b_ - s_;
    mu_ = comp / ntot_;
  }

  void AssembleSchur() {
    M_.setZero(n_, n_);
    for (int k = 0; k < nb_; ++k) {
      const ConeBlock& blk = p_.blocks[k];
      const MatrixXd& X = X_[k];
      const MatrixXd& Si = Sinv_[k];
      const int dim = blk.dim;
      const int nv = static_cast<int>(blk.vars.size());
      MatrixXd V(dim, dim);
      VectorXd u(dim);
      for (int jj = 0; jj < nv; ++jj) {
        const SparseSym& fj = blk.coeffs[jj];
        if (fj.dense) {
          V.noalias() = X * fj.full * Si;
        } else {
          V.setZero();
          int e = 0;
          while (e < fj.nnz()) {
            const int c = fj.col[e];
            u.setZero();
            for (; e < fj.nnz() && fj.col[e] == c; ++e) {
              u += fj.val[e] * X.col(fj.row[e]);
            }
            V.noalias() += u * Si.row(c);
          }
        }
        const int j = blk.vars[jj];
        const double* vd = V.data();
        for (int ii = jj; ii < nv; ++ii) {
          const SparseSym& fi = blk.coeffs[ii];
          double s = 0.0;
          for (int q = 0; q < fi.nnz(); ++q) {
            s += fi.val[q] * vd[static_cast<std::size_t>(fi.row[q]) * dim + fi.col[q]];
          }
          // vars ascending, so vars[ii] ≥ j: store in the lower triangle.
          M_(blk.vars[ii], j) += s;
        }
      }
    }
    for (int r = 0; r < nr_; ++r) {
      const double w = x_(r) / s_(r);
      const auto& t = p_.rows[r].terms;
      for (std::size_t a = 0; a < t.size(); ++a) {
        for (std::size_t b = 0; b < t.size(); ++b) {
          if (t[a].first >= t[b].first) {
            M_(t[a].first, t[b].first) += w * t[a].second * t[b].second;
          }
        }
      }
    }
  }

  bool Factor() {
    double dmax = M_.diagonal().cwiseAbs().maxCoeff();
    if (!(dmax > 0.0) || !std::isfinite(dmax)) dmax = 1.0;
    double reg = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      MatrixXd m = M_;
      if (reg > 0.0) m.diagonal().array() += reg;
      chol_.compute(m.selfadjointView<Eigen::Lower>());
      if (chol_.info() == Eigen::Success) return true;
      reg = reg == 0.0 ? 1e-14 * dmax : reg * 100.0;
    }
    return false;
  }

  struct Direction {
    VectorXd dy;
    std::vector<MatrixXd> dX;
    std::vector<MatrixXd> dS;
    VectorXd dx;
    VectorXd ds;
  };

  // Direction for target σμ with optional second-order corrections.
  Direction Solve(double target, const std::vector<MatrixXd>* corr,
                  const VectorXd* corr_r) {
    Direction d;
    VectorXd rhs = -rp_;
    std::vector<MatrixXd> g(nb_);
    for (int k = 0; k < nb_; ++k) {
      const ConeBlock& blk = p_.blocks[k];
      g[k] = target * Sinv_[k] - X_[k];
      if (corr) g[k] -= (*corr)[k];
      const MatrixXd r = g[k] - X_[k] * Rd_[k] * Sinv_[k];
      for (std::size_t v = 0; v < blk.vars.size(); ++v) {
        rhs(blk.vars[v]) += Inner(blk.coeffs[v], r);
      }
    }
    VectorXd gr = target * s_.cwiseInverse() - x_;
    if (corr_r) gr -= *corr_r;
    rhs += at_ * (gr - x_.cwiseProduct(rd_).cwiseQuotient(s_));
    d.dy = chol_.solve(rhs);
    d.dX.resize(nb_);
    d.dS.resize(nb_);
    for (int k = 0; k < nb_; ++k) {
      const ConeBlock& blk = p_.blocks[k];
      MatrixXd ds = Rd_[k];
      for (std::size_t v = 0; v < blk.vars.size(); ++v) {
        const double a = d.dy(blk.vars[v]);
        if (a == 0.0) continue;
        const SparseSym& f = blk.coeffs[v];
        for (int e = 0; e < f.nnz(); ++e) ds(f.row[e], f.col[e]) += a * f.val[e];
      }
      MatrixXd dx = g[k] - X_[k] * ds * Sinv_[k];
      d.dX[k] = 0.5 * (dx + dx.transpose());
      d.dS[k] = 0.5 * (ds + ds.transpose());
    }
    d.ds = a_ * d.dy + rd_;
    d.dx = gr - x_.cwiseProduct(d.ds).cwiseQuotient(s_);
    return d;
  }

  std::pair<double, double> StepLengths(const Direction& d) {
    double ap = MaxStepLinear(x_, d.dx);
    double ad = MaxStepLinear(s_, d.ds);
    for (int k = 0; k < nb_; ++k) {
      ap = std::min(ap, MaxStep(Eigen::LLT<MatrixXd>(X_[k]), d.dX[k]));
      ad = std::min(ad, MaxStep(Eigen::LLT<MatrixXd>(S_[k]), d.dS[k]));
    }
    return {ap, ad};
  }

  bool Step() {
    AssembleSchur();
    if (!Factor()) {
      fail_ = "Schur complement factorization failed";
      return false;
    }
    // Predictor.
    Direction aff = Solve(0.0, nullptr, nullptr);
    auto [ap, ad] = StepLengths(aff);
    ap = std::min(1.0, ap);
    ad = std::min(1.0, ad);
    double comp = (x_ + ap * aff.dx).dot(s_ + ad * aff.ds);
    for (int k = 0; k < nb_; ++k) {
      comp += (X_[k] + ap * aff.dX[k]).cwiseProduct(S_[k] + ad * aff.dS[k]).sum();
    }
    const double mu_aff = std::max(comp / ntot_, 0.0);
    double sigma = std::pow(mu_aff / mu_, 3);
    sigma = std::clamp(sigma, 0.0, 1.0);
    // Corrector.
    std::vector<MatrixXd> corr(nb_);
    for (int k = 0; k < nb_; ++k) corr[k] = aff.dX[k] * aff.dS[k] * Sinv_[k];
    const VectorXd corr_r = aff.dx.cwiseProduct(aff.ds).cwiseQuotient(s_);
    Direction d = Solve(sigma * mu_, &corr, &corr_r);
    auto [ap2, ad2] = StepLengths(d);
    const double fp = std::min(1.0, opt_.step_fraction * ap2);
    const double fd = std::min(1.0, opt_.step_fraction * ad2);
    if (!std::isfinite(fp) || !std::isfinite(fd) || !d.dy.allFinite()) {
      fail_ = "non-finite search direction";
      return false;
    }
    if (fp < 1e-10 && fd < 1e-10) {
      if (++stalls_ >= 3) {
        fail_ = "step length collapsed";
        return false;
      }
    } else {
      stalls_ = 0;
    }
    x_ += fp * d.dx;
    y_ += fd * d.dy;
    s_ += fd * d.ds;
    for (int k = 0; k < nb_; ++k) {
      X_[k] += fp * d.dX[k];
      S_[k] += fd * d.dS[k];
    }
    return true;
  }

  const ConeProgram& p_;
  IpmOptions opt_;
  int n_ = 0, nb_ = 0, nr_ = 0, ntot_ = 0;
  double f0_norm_ = 0.0, c_norm_ = 0.0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> a_;
  Eigen::SparseMatrix<double> at_;
  VectorXd b_;

  VectorXd y_, x_, s_;
  std::vector<MatrixXd> X_, S_, Sinv_, Rd_;
  VectorXd rp_, rd_;
  double mu_ = 0.0;
  MatrixXd M_;
  Eigen::LLT<MatrixXd> chol_;
  int stalls_ = 0;
  std::string fail_;
};

}  // namespace

IpmResult SolveConeProgram(
    const ConeProgram& program, const IpmOptions& options,
    const std::function<IpmMonitor(const IpmIterate&)>& monitor,
    const Eigen::VectorXd& y0) {
  Solver solver(program, options);
  return solver.Run(monitor, y0);
}

}  // namespace ddfc::sdp::internal
