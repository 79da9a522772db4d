#pragma once

// Internal numeric form of an SdpProblem: every variable entry becomes a
// scalar yᵢ and every constraint becomes
//   F0 + Σ yᵢ Fᵢ ⪰ 0   (one dense block per LMI)
//   aᵀy + b ≥ 0        (linear rows)
// with objective cᵀy + c0. Equalities are eliminated by substitution.

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ddfc/sdp/problem.h"

namespace ddfc::sdp::internal {

/// Symmetric sparse coefficient matrix with both triangles stored, sorted by
/// (col, row). Dense coefficients additionally keep a full copy.
struct SparseSym {
  std::vector<int> row;
  std::vector<int> col;
  std::vector<double> val;
  bool dense = false;
  Eigen::MatrixXd full;

  int nnz() const { return static_cast<int>(val.size()); }
  void Scale(double s);
};

struct ConeBlock {
  std::string name;
  int dim = 0;
  Eigen::MatrixXd f0;
  std::vector<int> vars;          ///< ascending variable indices
  std::vector<SparseSym> coeffs;  ///< parallel to vars
};

struct SparseRow {
  std::vector<std::pair<int, double>> terms;
  double b = 0.0;
};

struct ConeProgram {
  int num_vars = 0;
  Eigen::VectorXd c;
  double c0 = 0.0;
  std::vector<ConeBlock> blocks;
  std::vector<SparseRow> rows;
  std::vector<std::string> row_names;
};

/// y_original = Σ coeff·y_reduced + constant.
struct AffineEntry {
  std::vector<std::pair<int, double>> terms;
  double constant = 0.0;
};

/// Location of a named variable in the original scalar vector.
struct VarSlot {
  std::string name;
  int offset = 0;
  int rows = 1;
  int cols = 1;
  bool symmetric = false;
  bool scalar = false;
};

struct CompiledProblem {
  ConeProgram program;               ///< in reduced variables
  std::vector<VarSlot> slots;
  std::vector<AffineEntry> recovery;  ///< one per original scalar
  int num_original = 0;
  bool inconsistent_equalities = false;
};

/// Index of entry (r, c) of a slot in the original scalar vector.
int EntryIndex(const VarSlot& slot, int r, int c);

/// Builds the cone program. strict_margin is subtracted on the diagonal of
/// strict LMIs after orienting them as ⪰ 0.
CompiledProblem Compile(const SdpProblem& problem, double strict_margin);

/// Expands reduced values back into named matrices.
ValueMap Recover(const CompiledProblem& compiled, const Eigen::VectorXd& y);

/// Evaluates block k at y: F0 + Σ yᵢ Fᵢ.
Eigen::MatrixXd EvaluateBlock(const ConeBlock& block, const Eigen::VectorXd& y);

}  // namespace ddfc::sdp::internal
