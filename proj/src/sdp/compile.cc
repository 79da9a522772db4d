#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "cone_program.h"
#include "ddfc/common/errors.h"

namespace ddfc::sdp::internal {

void SparseSym::Scale(double s) {
  for (double& v : val) v *= s;
  if (dense) full *= s;
}

int EntryIndex(const VarSlot& slot, int r, int c) {
  if (slot.scalar) return slot.offset;
  if (slot.symmetric) {
    // Upper triangle, row-major.
    const int i = std::min(r, c);
    const int j = std::max(r, c);
    const int n = slot.rows;
    return slot.offset + i * n - i * (i - 1) / 2 + (j - i);
  }
  return slot.offset + r * slot.cols + c;
}

namespace {

using Key = std::int64_t;
inline Key MakeKey(int r, int c) {
  return (static_cast<Key>(r) << 32) | static_cast<std::uint32_t>(c);
}
inline int KeyRow(Key k) { return static_cast<int>(k >> 32); }
inline int KeyCol(Key k) { return static_cast<int>(k & 0xffffffff); }

using SparseAccum = std::unordered_map<Key, double>;

// One LMI block before elimination: F0 plus a coefficient map per variable.
struct RawBlock {
  std::string name;
  int dim = 0;
  Eigen::MatrixXd f0;
  std::map<int, SparseAccum> coeffs;
};

struct RawRow {
  std::map<int, double> terms;
  double b = 0.0;
};

class SlotTable {
 public:
  explicit SlotTable(const SdpProblem& p) {
    int off = 0;
    for (const auto& v : p.matrix_vars()) {
      VarSlot s{v.name, off, v.rows, v.cols, v.symmetric, false};
      off += v.symmetric ? v.rows * (v.rows + 1) / 2 : v.rows * v.cols;
      Insert(s);
    }
    for (const auto& v : p.scalar_vars()) {
      Insert(VarSlot{v.name, off, 1, 1, false, true});
      off += 1;
    }
    total_ = off;
  }
  const VarSlot& Get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw ConfigError(fmt::format("unknown variable '{}'", name));
    }
    return slots_[it->second];
  }
  const std::vector<VarSlot>& slots() const { return slots_; }
  int total() const { return total_; }

 private:
  void Insert(const VarSlot& s) {
    index_[s.name] = slots_.size();
    slots_.push_back(s);
  }
  std::vector<VarSlot> slots_;
  std::unordered_map<std::string, std::size_t> index_;
  int total_ = 0;
};

void AccumulateMatrixTerm(const SlotTable& table, const MatrixTerm& t,
                          RawBlock& block) {
  const VarSlot& slot = table.Get(t.var);
  // Nonzero pattern of left columns and right rows.
  std::vector<std::vector<std::pair<int, double>>> lcol(t.left.cols());
  for (Eigen::Index a = 0; a < t.left.cols(); ++a) {
    for (Eigen::Index r = 0; r < t.left.rows(); ++r) {
      if (t.left(r, a) != 0.0) lcol[a].push_back({static_cast<int>(r), t.left(r, a)});
    }
  }
  std::vector<std::vector<std::pair<int, double>>> rrow(t.right.rows());
  for (Eigen::Index b = 0; b < t.right.rows(); ++b) {
    for (Eigen::Index c = 0; c < t.right.cols(); ++c) {
      if (t.right(b, c) != 0.0) rrow[b].push_back({static_cast<int>(c), t.right(b, c)});
    }
  }
  // Entry (a, b) of the operand (X or Xᵀ) corresponds to X(a, b) or X(b, a).
  const int op_rows = static_cast<int>(t.left.cols());
  const int op_cols = static_cast<int>(t.right.rows());
  for (int a = 0; a < op_rows; ++a) {
    if (lcol[a].empty()) continue;
    for (int b = 0; b < op_cols; ++b) {
      if (rrow[b].empty()) continue;
      const int xr = t.transposed ? b : a;
      const int xc = t.transposed ? a : b;
      const int var = EntryIndex(slot, xr, xc);
      SparseAccum& acc = block.coeffs[var];
      for (const auto& [r, lv] : lcol[a]) {
        for (const auto& [c, rv] : rrow[b]) {
          acc[MakeKey(t.row_offset + r, t.col_offset + c)] += lv * rv;
        }
      }
    }
  }
}

RawBlock CompileLmi(const SlotTable& table, const LmiConstraint& lmi,
                    double margin) {
  RawBlock block;
  block.name = lmi.name;
  block.dim = lmi.expr.rows();
  block.f0 = lmi.expr.constant();
  for (const auto& t : lmi.expr.matrix_terms()) {
    AccumulateMatrixTerm(table, t, block);
  }
  for (const auto& t : lmi.expr.scalar_terms()) {
    const int var = table.Get(t.var).offset;
    SparseAccum& acc = block.coeffs[var];
    for (Eigen::Index r = 0; r < t.coeff.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.coeff.cols(); ++c) {
        if (t.coeff(r, c) != 0.0) {
          acc[MakeKey(t.row_offset + static_cast<int>(r),
                      t.col_offset + static_cast<int>(c))] += t.coeff(r, c);
        }
      }
    }
  }

  // Symmetry check, then symmetrize.
  auto check = [&](double asym, double scale, const std::string& what) {
    if (asym > 1e-10 * std::max(1.0, scale)) {
      throw ConfigError(fmt::format(
          "LMI '{}' is not symmetric in {} (asymmetry {:.3e})", lmi.name, what,
          asym));
    }
  };
  {
    const double asym = (block.f0 - block.f0.transpose()).cwiseAbs().maxCoeff();
    check(asym, block.f0.cwiseAbs().maxCoeff(), "its constant term");
    block.f0 = 0.5 * (block.f0 + block.f0.transpose());
  }
  for (auto& [var, acc] : block.coeffs) {
    double asym = 0.0;
    double scale = 0.0;
    for (const auto& [k, v] : acc) {
      const auto it = acc.find(MakeKey(KeyCol(k), KeyRow(k)));
      const double mirror = it == acc.end() ? 0.0 : it->second;
      asym = std::max(asym, std::abs(v - mirror));
      scale = std::max(scale, std::abs(v));
    }
    check(asym, scale, fmt::format("variable entry #{}", var));
    SparseAccum sym;
    for (const auto& [k, v] : acc) {
      const int r = KeyRow(k);
      const int c = KeyCol(k);
      sym[MakeKey(r, c)] += 0.5 * v;
      sym[MakeKey(c, r)] += 0.5 * v;
    }
    acc = std::move(sym);
  }

  if (lmi.sense == LmiSense::kNegative) {
    block.f0 = -block.f0;
    for (auto& [var, acc] : block.coeffs) {
      for (auto& [k, v] : acc) v = -v;
    }
  }
  if (lmi.strict) block.f0.diagonal().array() -= margin;
  return block;
}

RawRow CompileLinear(const SlotTable& table, const LinearExpr& e) {
  RawRow row;
  row.b = e.constant();
  for (const auto& [ref, c] : e.terms()) {
    const VarSlot& slot = table.Get(ref.var);
    row.terms[EntryIndex(slot, ref.row, ref.col)] += c;
  }
  return row;
}

// Substitution y_p = Σ a_q y_q + c for eliminated variables p.
struct Substitution {
  std::map<int, double> terms;
  double constant = 0.0;
};

// Eliminates equality rows by pivoting; returns false if inconsistent.
bool Eliminate(std::vector<RawRow> eqs, std::map<int, Substitution>& subs) {
  std::unordered_map<int, std::unordered_set<int>> users;  // q -> {p : q ∈ subs[p]}
  for (RawRow& row : eqs) {
    // Expand eliminated variables.
    std::map<int, double> terms;
    double b = row.b;
    for (const auto& [v, a] : row.terms) {
      auto it = subs.find(v);
      if (it == subs.end()) {
        terms[v] += a;
      } else {
        b += a * it->second.constant;
        for (const auto& [q, aq] : it->second.terms) terms[q] += a * aq;
      }
    }
    double amax = 0.0;
    for (const auto& [v, a] : terms) amax = std::max(amax, std::abs(a));
    int pivot = -1;
    double apiv = 0.0;
    for (const auto& [v, a] : terms) {
      if (std::abs(a) > 1e-12 * amax && std::abs(a) > std::abs(apiv)) {
        pivot = v;
        apiv = a;
      }
    }
    if (pivot < 0) {
      if (std::abs(b) > 1e-9 * (1.0 + std::abs(row.b))) return false;
      continue;
    }
    Substitution s;
    s.constant = -b / apiv;
    for (const auto& [v, a] : terms) {
      if (v != pivot && std::abs(a) > 1e-14 * amax) s.terms[v] = -a / apiv;
    }
    // Rewrite earlier substitutions that reference the pivot.
    if (auto uit = users.find(pivot); uit != users.end()) {
      for (int p : uit->second) {
        Substitution& sp = subs[p];
        const double coef = sp.terms[pivot];
        sp.terms.erase(pivot);
        sp.constant += coef * s.constant;
        for (const auto& [q, aq] : s.terms) {
          sp.terms[q] += coef * aq;
          users[q].insert(p);
        }
      }
      users.erase(uit);
    }
    for (const auto& [q, aq] : s.terms) users[q].insert(pivot);
    subs[pivot] = std::move(s);
  }
  return true;
}

void AddScaled(SparseAccum& dst, const SparseAccum& src, double a) {
  for (const auto& [k, v] : src) dst[k] += a * v;
}

}  // namespace

CompiledProblem Compile(const SdpProblem& problem, double strict_margin) {
  problem.Validate();
  SlotTable table(problem);
  CompiledProblem out;
  out.slots = table.slots();
  out.num_original = table.total();

  std::vector<RawBlock> blocks;
  for (const auto& lmi : problem.lmis()) {
    blocks.push_back(CompileLmi(table, lmi, strict_margin));
  }
  std::vector<RawRow> eqs;
  std::vector<RawRow> ineqs;
  std::vector<std::string> ineq_names;
  for (const auto& lc : problem.linear_constraints()) {
    RawRow row = CompileLinear(table, lc.expr);
    if (lc.relation == Relation::kEqual) {
      eqs.push_back(std::move(row));
    } else {
      ineqs.push_back(std::move(row));
      ineq_names.push_back(lc.name);
    }
  }
  for (const auto& v : problem.scalar_vars()) {
    if (!v.nonnegative) continue;
    RawRow row;
    row.terms[table.Get(v.name).offset] = 1.0;
    ineqs.push_back(std::move(row));
    ineq_names.push_back(v.name + ">=0");
  }
  RawRow objective = CompileLinear(table, problem.objective());

  std::map<int, Substitution> subs;
  if (!Eliminate(eqs, subs)) {
    out.inconsistent_equalities = true;
  }

  // Reduced indexing of the surviving variables.
  std::vector<int> reduced(out.num_original, -1);
  int nred = 0;
  for (int i = 0; i < out.num_original; ++i) {
    if (!subs.count(i)) reduced[i] = nred++;
  }
  out.recovery.resize(out.num_original);
  for (int i = 0; i < out.num_original; ++i) {
    if (reduced[i] >= 0) {
      out.recovery[i].terms.push_back({reduced[i], 1.0});
    } else {
      const Substitution& s = subs.at(i);
      out.recovery[i].constant = s.constant;
      for (const auto& [q, a] : s.terms) {
        out.recovery[i].terms.push_back({reduced[q], a});
      }
    }
  }

  ConeProgram& prog = out.program;
  prog.num_vars = nred;

  for (RawBlock& rb : blocks) {
    // Fold eliminated variables into the survivors.
    for (const auto& [p, s] : subs) {
      auto it = rb.coeffs.find(p);
      if (it == rb.coeffs.end()) continue;
      SparseAccum fp = std::move(it->second);
      rb.coeffs.erase(it);
      for (const auto& [k, v] : fp) {
        rb.f0(KeyRow(k), KeyCol(k)) += s.constant * v;
      }
      for (const auto& [q, a] : s.terms) AddScaled(rb.coeffs[q], fp, a);
    }
    ConeBlock cb;
    cb.name = rb.name;
    cb.dim = rb.dim;
    cb.f0 = std::move(rb.f0);
    for (auto& [var, acc] : rb.coeffs) {
      std::vector<std::pair<Key, double>> entries;
      double amax = 0.0;
      for (const auto& [k, v] : acc) amax = std::max(amax, std::abs(v));
      if (amax == 0.0) continue;
      for (const auto& [k, v] : acc) {
        if (std::abs(v) > 1e-15 * amax) entries.push_back({k, v});
      }
      std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) {
        const int cx = KeyCol(x.first), cy = KeyCol(y.first);
        return cx != cy ? cx < cy : KeyRow(x.first) < KeyRow(y.first);
      });
      SparseSym s;
      for (const auto& [k, v] : entries) {
        s.row.push_back(KeyRow(k));
        s.col.push_back(KeyCol(k));
        s.val.push_back(v);
      }
      if (s.nnz() > cb.dim * cb.dim / 8) {
        s.dense = true;
        s.full = Eigen::MatrixXd::Zero(cb.dim, cb.dim);
        for (int e = 0; e < s.nnz(); ++e) s.full(s.row[e], s.col[e]) = s.val[e];
      }
      cb.vars.push_back(reduced[var]);
      cb.coeffs.push_back(std::move(s));
    }
    prog.blocks.push_back(std::move(cb));
  }

  auto reduce_row = [&](const RawRow& row) {
    std::map<int, double> terms;
    double b = row.b;
    for (const auto& [v, a] : row.terms) {
      auto it = subs.find(v);
      if (it == subs.end()) {
        terms[reduced[v]] += a;
      } else {
        b += a * it->second.constant;
        for (const auto& [q, aq] : it->second.terms) terms[reduced[q]] += a * aq;
      }
    }
    SparseRow sr;
    sr.b = b;
    for (const auto& [v, a] : terms) {
      if (a != 0.0) sr.terms.push_back({v, a});
    }
    return sr;
  };
  for (std::size_t i = 0; i < ineqs.size(); ++i) {
    prog.rows.push_back(reduce_row(ineqs[i]));
    prog.row_names.push_back(ineq_names[i]);
  }
  const SparseRow obj = reduce_row(objective);
  prog.c = Eigen::VectorXd::Zero(nred);
  for (const auto& [v, a] : obj.terms) prog.c(v) = a;
  prog.c0 = obj.b;
  return out;
}

ValueMap Recover(const CompiledProblem& compiled, const Eigen::VectorXd& y) {
  Eigen::VectorXd full(compiled.num_original);
  for (int i = 0; i < compiled.num_original; ++i) {
    const AffineEntry& e = compiled.recovery[i];
    double v = e.constant;
    for (const auto& [q, a] : e.terms) v += a * y(q);
    full(i) = v;
  }
  ValueMap values;
  for (const VarSlot& s : compiled.slots) {
    Eigen::MatrixXd m(s.rows, s.cols);
    for (int r = 0; r < s.rows; ++r) {
      for (int c = 0; c < s.cols; ++c) m(r, c) = full(EntryIndex(s, r, c));
    }
    values[s.name] = std::move(m);
  }
  return values;
}

Eigen::MatrixXd EvaluateBlock(const ConeBlock& block, const Eigen::VectorXd& y) {
  Eigen::MatrixXd m = block.f0;
  for (std::size_t k = 0; k < block.vars.size(); ++k) {
    const double yi = y(block.vars[k]);
    if (yi == 0.0) continue;
    const SparseSym& f = block.coeffs[k];
    for (int e = 0; e < f.nnz(); ++e) m(f.row[e], f.col[e]) += yi * f.val[e];
  }
  return m;
}

}  // namespace ddfc::sdp::internal
