#include "ddfc/topo/topology.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <queue>

#include <fmt/format.h>

#include "ddfc/common/errors.h"

namespace ddfc::topo {

using Eigen::MatrixXd;
using sdp::LinearExpr;

namespace {

std::string DeltaName(int i, int j) { return fmt::format("delta_{}_{}", i, j); }

void CheckLinkMatrices(int agents, const MatrixXd& cost, const MatrixXd& eta) {
  if (cost.rows() != agents || cost.cols() != agents || eta.rows() != agents ||
      eta.cols() != agents) {
    throw ConfigError(fmt::format("cost and benefit matrices must be {0}x{0}", agents));
  }
  if ((cost.array() < 0.0).any() || (eta.array() < 0.0).any()) {
    throw ConfigError("link costs and benefits must be >= 0");
  }
}

// Value of δ_ij under a fixing: 1, 0, or −1 (free).
int State(const Fixing& f, int i, int j) { return i == j ? 1 : f(i, j); }

std::string Key(const Adjacency& d) {
  std::string s;
  for (Eigen::Index i = 0; i < d.size(); ++i) s.push_back(d.data()[i] ? '1' : '0');
  return s;
}

}  // namespace

double LinkObjective(const Adjacency& delta, const MatrixXd& cost, const MatrixXd& eta) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    for (Eigen::Index j = 0; j < delta.cols(); ++j) {
      if (i != j && delta(i, j)) v += cost(i, j) - eta(i, j);
    }
  }
  return v;
}

double CommTopology::Objective() const { return LinkObjective(delta, cost, eta); }

Json CommTopology::ToJson() const {
  Json j = synth::AdjacencyToJson(delta);
  j["cost"] = MatrixToJson(cost);
  j["eta"] = MatrixToJson(eta);
  j["objective"] = Objective();
  return j;
}

MatrixXd EstimateLinkBenefits(const data::DataSet& data, const AgentPartition& partition) {
  partition.Validate();
  if (partition.num_states() != data.n() || partition.num_inputs() != data.m()) {
    throw ConfigError("agent partition does not match the dataset");
  }
  const MatrixXd z = data.Z();
  Eigen::ColPivHouseholderQR<MatrixXd> qr(z.transpose());
  if (qr.rank() < z.rows()) {
    throw NumericalError(fmt::format("data matrix Z has rank {} < {}; link benefits undefined",
                                     qr.rank(), z.rows()));
  }
  const MatrixXd psi = qr.solve(data.Xplus.transpose()).transpose();
  const int na = partition.agents();
  const int n = data.n();
  auto block_norm = [&](int i, int j) {
    double s = 0.0;
    for (int r : partition.states[i]) {
      for (int c : partition.states[j]) s += psi(r, c) * psi(r, c);
      for (int c : partition.inputs[j]) s += psi(r, n + c) * psi(r, n + c);
    }
    return std::sqrt(s);
  };
  MatrixXd eta = MatrixXd::Zero(na, na);
  for (int i = 0; i < na; ++i) {
    const double own = block_norm(i, i);
    if (!(own > 0.0)) {
      throw NumericalError(fmt::format("agent {} has a zero diagonal block", i));
    }
    for (int j = 0; j < na; ++j) {
      if (i != j) eta(i, j) = block_norm(i, j) / own;
    }
  }
  return eta;
}

std::vector<BigMBound> BigMBounds(const AgentPartition& partition, const Fixing& fixing) {
  partition.Validate();
  const int na = partition.agents();
  if (fixing.rows() != na || fixing.cols() != na) {
    throw ConfigError("fixing matrix does not match the agent count");
  }
  std::vector<BigMBound> out;
  auto add = [&](const std::string& var, const synth::EntrySet& entries, double constant,
                 const std::vector<DeltaTerm>& terms) {
    for (const auto& [r, c] : entries) out.push_back({var, r, c, constant, terms});
  };
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < na; ++j) {
      if (i == j) continue;
      // e = δ_ij.
      double c0 = 0.0;
      std::vector<DeltaTerm> t0;
      if (State(fixing, i, j) < 0) {
        t0.push_back({i, j, 1.0});
      } else {
        c0 = State(fixing, i, j);
      }
      add("Y", partition.KEntries(i, j), c0, t0);
      add("G", partition.GEntries(i, j), c0, t0);
      // e = δ_ij − δ_iz + 1.
      for (int z = 0; z < na; ++z) {
        if (z == i || z == j) continue;
        double c = 1.0;
        std::vector<DeltaTerm> t;
        if (State(fixing, i, j) < 0) {
          t.push_back({i, j, 1.0});
        } else {
          c += State(fixing, i, j);
        }
        if (State(fixing, i, z) < 0) {
          t.push_back({i, z, -1.0});
        } else {
          c -= State(fixing, i, z);
        }
        add("G", partition.GEntries(z, j), c, t);
      }
    }
  }
  return out;
}

bool FixedTopologyFeasible(const synth::SynthesisSpec& spec, const AgentPartition& partition,
                           const Adjacency& delta, const sdp::SolverOptions& options,
                           sdp::ValueMap* certificate) {
  synth::SynthesisSpec s = spec;
  s.structure = synth::Structure{partition, delta};
  const sdp::SdpSolution sol = sdp::Solve(synth::AssembleH2Lmis(s, std::nullopt), options);
  if (sol.status != sdp::SolveStatus::kOptimal) return false;
  if (certificate) *certificate = sol.values;
  return true;
}

Relaxation SolveRelaxation(const synth::SynthesisSpec& spec, const AgentPartition& partition,
                           const Fixing& fixing, const MatrixXd& cost, const MatrixXd& eta,
                           const TopologyOptions& options) {
  const int na = partition.agents();
  CheckLinkMatrices(na, cost, eta);
  if (!(options.big_m > 0.0)) throw ConfigError("big-M constant must be > 0");
  synth::SynthesisSpec s = spec;
  s.structure.reset();
  sdp::SdpProblem prob = synth::AssembleStabilityLmis(s);

  LinearExpr objective;
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < na; ++j) {
      if (i == j) continue;
      const int st = State(fixing, i, j);
      if (st == 1) objective.AddConstant(cost(i, j) - eta(i, j));
      if (st < 0) {
        const std::string name = DeltaName(i, j);
        prob.AddScalar(name, true);
        prob.AddInequality(name + "<=1", LinearExpr(1.0).AddScalar(name, -1.0));
        objective.AddScalar(name, cost(i, j) - eta(i, j));
      }
    }
  }
  // Rows are divided by M̄: e − x/M̄ ≥ 0 and e + x/M̄ ≥ 0.
  const double inv = 1.0 / options.big_m;
  int k = 0;
  for (const BigMBound& b : BigMBounds(partition, fixing)) {
    if (b.fixed()) {
      if (b.constant <= 0.0) {
        prob.AddEquality(fmt::format("{}({},{})=0#{}", b.var, b.row, b.col, k++),
                         LinearExpr().Add(b.var, b.row, b.col, 1.0));
      }
      // A constant ≥ 1 only caps |x| at M̄ and is dropped.
      continue;
    }
    LinearExpr e(b.constant);
    for (const DeltaTerm& t : b.terms) e.AddScalar(DeltaName(t.i, t.j), t.coeff);
    LinearExpr hi = e;
    hi.Add(b.var, b.row, b.col, -inv);
    LinearExpr lo = e;
    lo.Add(b.var, b.row, b.col, inv);
    prob.AddInequality(fmt::format("bigm_hi#{}", k), hi);
    prob.AddInequality(fmt::format("bigm_lo#{}", k), lo);
    ++k;
  }
  prob.SetObjective(objective);

  Relaxation r;
  const sdp::SdpSolution sol = sdp::Solve(prob, options.solver);
  r.status = sol.status;
  if (sol.status != sdp::SolveStatus::kOptimal) return r;
  r.objective = sol.objective_value;
  r.delta = MatrixXd::Identity(na, na);
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < na; ++j) {
      if (i == j) continue;
      const int st = State(fixing, i, j);
      r.delta(i, j) = st < 0 ? std::clamp(sol.Scalar(DeltaName(i, j)), 0.0, 1.0) : st;
    }
  }
  return r;
}

namespace {

struct Node {
  Fixing fixing;
  double bound = 0.0;
  int depth = 0;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.depth < b.depth;
  }
};

class Search {
 public:
  Search(const synth::SynthesisSpec& spec, const AgentPartition& partition, const MatrixXd& cost,
         const MatrixXd& eta, const TopologyOptions& options)
      : spec_(spec),
        partition_(partition),
        cost_(cost),
        eta_(eta),
        opt_(options),
        na_(partition.agents()),
        start_(std::chrono::steady_clock::now()) {}

  TopologyResult Run() {
    Adjacency dense = synth::DenseAdjacency(na_);
    if (!Evaluate(dense)) {
      throw InfeasibleError(
          "robust stability LMI is infeasible even for the fully connected topology");
    }
    if (na_ > opt_.greedy_above_agents) Greedy();

    Fixing root = Fixing::Constant(na_, na_, -1);
    for (int i = 0; i < na_; ++i) root(i, i) = 1;
    std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
    open.push({root, CombinatorialBound(root), 0});
    double global_bound = open.top().bound;
    bool exhausted = true;
    while (!open.empty()) {
      const Node node = open.top();
      global_bound = node.bound;
      if (Prunable(node.bound)) {
        // Best-first: every remaining node is at least as bad.
        global_bound = best_obj_;
        std::priority_queue<Node, std::vector<Node>, NodeOrder>().swap(open);
        break;
      }
      if (result_.nodes >= opt_.node_budget || TimeUp()) {
        exhausted = false;
        result_.termination = result_.nodes >= opt_.node_budget ? "node budget" : "time limit";
        break;
      }
      open.pop();
      Expand(node, &open);
    }
    if (open.empty() && exhausted) global_bound = best_obj_;
    if (!has_incumbent_) throw NumericalError("topology search ended without an incumbent");
    result_.delta = best_;
    result_.objective = best_obj_;
    result_.certificate = best_cert_;
    result_.bound = std::min(global_bound, best_obj_);
    result_.gap = result_.objective - result_.bound;
    result_.optimal = exhausted && result_.gap <= Tol(result_.bound);
    if (result_.termination.empty()) result_.termination = "optimal";
    result_.seconds = Elapsed();
    return result_;
  }

 private:
  double Elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  bool TimeUp() const { return opt_.time_limit > 0.0 && Elapsed() > opt_.time_limit; }
  static double Tol(double bound) { return 1e-6 * std::abs(bound) + 1e-9; }
  bool Prunable(double bound) const {
    return has_incumbent_ && bound >= best_obj_ - Tol(bound);
  }

  double CombinatorialBound(const Fixing& f) const {
    double v = 0.0;
    for (int i = 0; i < na_; ++i) {
      for (int j = 0; j < na_; ++j) {
        if (i == j) continue;
        const double w = cost_(i, j) - eta_(i, j);
        if (f(i, j) == 1) v += w;
        if (f(i, j) < 0) v += std::min(0.0, w);
      }
    }
    return v;
  }

  // Fixed-δ feasibility with caching; updates the incumbent.
  bool Evaluate(const Adjacency& delta) {
    const std::string key = Key(delta);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    sdp::ValueMap cert;
    const bool ok = FixedTopologyFeasible(spec_, partition_, delta, opt_.solver, &cert);
    ++result_.solves;
    cache_[key] = ok;
    if (ok) {
      result_.feasible.push_back({delta, cert});
      const double obj = LinkObjective(delta, cost_, eta_);
      const bool better = !has_incumbent_ || obj < best_obj_ - Tol(obj) ||
                          (obj <= best_obj_ + Tol(obj) &&
                           synth::OffDiagonalLinks(delta) < synth::OffDiagonalLinks(best_));
      if (better) {
        best_ = delta;
        best_obj_ = obj;
        best_cert_ = std::move(cert);
        has_incumbent_ = true;
      }
    }
    if (opt_.verbose) {
      fmt::print(stderr, "topo: {} links, objective {:.6g}: {}\n", synth::OffDiagonalLinks(delta),
                 LinkObjective(delta, cost_, eta_), ok ? "feasible" : "infeasible");
    }
    return ok;
  }

  std::vector<std::pair<int, int>> OffDiagonalOrder() const {
    std::vector<std::pair<int, int>> links;
    for (int i = 0; i < na_; ++i) {
      for (int j = 0; j < na_; ++j) {
        if (i != j) links.emplace_back(i, j);
      }
    }
    std::stable_sort(links.begin(), links.end(), [&](const auto& a, const auto& b) {
      return eta_(a.first, a.second) - cost_(a.first, a.second) >
             eta_(b.first, b.second) - cost_(b.first, b.second);
    });
    return links;
  }

  void Greedy() {
    const auto order = OffDiagonalOrder();
    Adjacency d = synth::DecentralizedAdjacency(na_);
    std::size_t next = 0;
    for (; next < order.size(); ++next) {
      const auto [i, j] = order[next];
      if (eta_(i, j) - cost_(i, j) <= 0.0) break;
      d(i, j) = 1;
    }
    bool ok = Evaluate(d);
    for (; !ok && next < order.size() && !TimeUp(); ++next) {
      d(order[next].first, order[next].second) = 1;
      ok = Evaluate(d);
    }
    if (!ok) return;
    // Local search: single flips that lower the objective, then exchanges of
    // an on link for a cheaper off link.
    int budget = opt_.max_swap_solves;
    auto try_move = [&](const Adjacency& trial) {
      if (budget == 0 || TimeUp()) return false;
      if (cache_.count(Key(trial)) == 0 && budget > 0) --budget;
      return Evaluate(trial);
    };
    auto weight = [&](const std::pair<int, int>& l) {
      return cost_(l.first, l.second) - eta_(l.first, l.second);
    };
    bool improved = true;
    while (improved && budget != 0 && !TimeUp()) {
      improved = false;
      for (const auto& l : order) {
        const bool helps = d(l.first, l.second) ? weight(l) > 0.0 : weight(l) < 0.0;
        if (!helps) continue;
        Adjacency trial = d;
        trial(l.first, l.second) = 1 - d(l.first, l.second);
        if (try_move(trial)) {
          d = trial;
          improved = true;
        }
      }
      if (improved) continue;
      std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>> swaps;
      for (const auto& on : order) {
        if (!d(on.first, on.second)) continue;
        for (const auto& off : order) {
          if (!d(off.first, off.second) && weight(off) < weight(on)) swaps.push_back({on, off});
        }
      }
      std::stable_sort(swaps.begin(), swaps.end(), [&](const auto& a, const auto& b) {
        return weight(a.first) - weight(a.second) > weight(b.first) - weight(b.second);
      });
      for (const auto& [on, off] : swaps) {
        Adjacency trial = d;
        trial(on.first, on.second) = 0;
        trial(off.first, off.second) = 1;
        if (try_move(trial)) {
          d = trial;
          improved = true;
          break;
        }
        if (budget == 0 || TimeUp()) break;
      }
    }
  }

  void Expand(const Node& node, std::priority_queue<Node, std::vector<Node>, NodeOrder>* open) {
    ++result_.nodes;
    std::vector<std::pair<int, int>> free;
    for (int i = 0; i < na_; ++i) {
      for (int j = 0; j < na_; ++j) {
        if (i != j && node.fixing(i, j) < 0) free.emplace_back(i, j);
      }
    }
    if (free.empty()) {
      Adjacency d(na_, na_);
      for (int i = 0; i < na_; ++i) {
        for (int j = 0; j < na_; ++j) d(i, j) = State(node.fixing, i, j);
      }
      Evaluate(d);
      return;
    }
    const Relaxation rel = SolveRelaxation(spec_, partition_, node.fixing, cost_, eta_, opt_);
    ++result_.solves;
    if (rel.status == sdp::SolveStatus::kInfeasible) return;
    double bound = node.bound;
    std::pair<int, int> branch = free.front();
    if (rel.status == sdp::SolveStatus::kOptimal) {
      bound = std::max(bound, rel.objective);
      if (Prunable(bound)) return;
      Adjacency rounded(na_, na_);
      bool integral = true;
      double best_frac = -1.0;
      for (int i = 0; i < na_; ++i) {
        for (int j = 0; j < na_; ++j) {
          const double v = rel.delta(i, j);
          rounded(i, j) = v >= 0.5 ? 1 : 0;
          if (i == j || node.fixing(i, j) >= 0) continue;
          const double frac = std::min(v, 1.0 - v);
          if (frac > opt_.integrality_tol) integral = false;
          const double tie = eta_(i, j) - cost_(i, j);
          const double best_tie = eta_(branch.first, branch.second) - cost_(branch.first, branch.second);
          if (frac > best_frac + 1e-12 || (std::abs(frac - best_frac) <= 1e-12 && tie > best_tie)) {
            best_frac = frac;
            branch = {i, j};
          }
        }
      }
      const bool feasible = Evaluate(rounded);
      if (feasible && rel.objective > LinkObjective(rounded, cost_, eta_) +
                                          Tol(rel.objective) + 1e-6 * free.size()) {
        ++result_.bound_violations;
      }
      if (integral && feasible) return;  // the relaxation optimum is attained
    } else {
      // No relaxation information: branch on the most consequential link.
      double worst = -1.0;
      for (const auto& [i, j] : free) {
        const double w = std::abs(cost_(i, j) - eta_(i, j));
        if (w > worst) {
          worst = w;
          branch = {i, j};
        }
      }
    }
    for (int v : {0, 1}) {
      Node child{node.fixing, 0.0, node.depth + 1};
      child.fixing(branch.first, branch.second) = v;
      child.bound = std::max(bound, CombinatorialBound(child.fixing));
      if (!Prunable(child.bound)) open->push(std::move(child));
    }
  }

  const synth::SynthesisSpec& spec_;
  const AgentPartition& partition_;
  const MatrixXd& cost_;
  const MatrixXd& eta_;
  const TopologyOptions& opt_;
  const int na_;
  const std::chrono::steady_clock::time_point start_;

  TopologyResult result_;
  std::map<std::string, bool> cache_;
  bool has_incumbent_ = false;
  Adjacency best_;
  double best_obj_ = 0.0;
  sdp::ValueMap best_cert_;
};

}  // namespace

TopologyResult SolveTopology(const synth::SynthesisSpec& spec, const AgentPartition& partition,
                             const MatrixXd& cost, const MatrixXd& eta,
                             const TopologyOptions& options) {
  spec.Validate();
  partition.Validate();
  if (partition.num_states() != spec.n() || partition.num_inputs() != spec.m()) {
    throw ConfigError("agent partition does not match the synthesis problem");
  }
  CheckLinkMatrices(partition.agents(), cost, eta);
  if (!(options.big_m > 0.0)) throw ConfigError("big-M constant must be > 0");
  if (options.node_budget < 1) throw ConfigError("node budget must be >= 1");
  return Search(spec, partition, cost, eta, options).Run();
}

std::vector<SweepLevel> SweepCosts(const synth::SynthesisSpec& spec,
                                   const AgentPartition& partition,
                                   const std::vector<double>& costs, const MatrixXd& eta,
                                   const TopologyOptions& options) {
  const int na = partition.agents();
  std::vector<SweepLevel> levels;
  for (double c : costs) {
    if (!(c >= 0.0)) throw ConfigError("sweep costs must be >= 0");
    MatrixXd cost = MatrixXd::Constant(na, na, c);
    cost.diagonal().setZero();
    levels.push_back({c, SolveTopology(spec, partition, cost, eta, options)});
  }
  // Shared candidate pool.
  std::map<std::string, const FoundTopology*> pool;
  for (const SweepLevel& l : levels) {
    for (const FoundTopology& f : l.result.feasible) pool.emplace(Key(f.delta), &f);
  }
  std::vector<FoundTopology> chosen;
  for (SweepLevel& l : levels) {
    MatrixXd cost = MatrixXd::Constant(na, na, l.c);
    cost.diagonal().setZero();
    const FoundTopology* best = nullptr;
    double best_obj = 0.0;
    for (const auto& [key, f] : pool) {
      const double obj = LinkObjective(f->delta, cost, eta);
      const double tol = 1e-6 * std::abs(obj) + 1e-9;
      if (!best || obj < best_obj - tol ||
          (obj <= best_obj + tol &&
           synth::OffDiagonalLinks(f->delta) < synth::OffDiagonalLinks(best->delta))) {
        best = f;
        best_obj = obj;
      }
    }
    chosen.push_back(*best);
  }
  for (std::size_t k = 0; k < levels.size(); ++k) {
    TopologyResult& r = levels[k].result;
    if (Key(chosen[k].delta) != Key(r.delta)) {
      MatrixXd cost = MatrixXd::Constant(na, na, levels[k].c);
      cost.diagonal().setZero();
      r.delta = chosen[k].delta;
      r.certificate = chosen[k].certificate;
      r.objective = LinkObjective(r.delta, cost, eta);
      r.gap = r.objective - r.bound;
      r.termination += "; replaced by a sweep candidate";
    }
  }
  return levels;
}

Json TopologyResult::ToJson() const {
  Json j;
  j["topology"] = synth::AdjacencyToJson(delta);
  j["links"] = synth::OffDiagonalLinks(delta);
  j["objective"] = objective;
  j["bound"] = bound;
  j["gap"] = gap;
  j["optimal"] = optimal;
  j["termination"] = termination;
  j["nodes"] = nodes;
  j["solves"] = solves;
  j["bound_violations"] = bound_violations;
  j["seconds"] = seconds;
  j["feasible_topologies"] = feasible.size();
  return j;
}

}  // namespace ddfc::topo
