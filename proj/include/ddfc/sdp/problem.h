#pragma once

/// @file
/// Solver-agnostic description of semidefinite programs over named matrix
/// and scalar variables.
///
/// An SdpProblem owns
///  - matrix variables (symmetric or general) and scalar variables (free or
///    nonnegative),
///  - LMI constraints, each an affine symmetric matrix expression required to
///    be ⪰ εI or ⪯ −εI,
///  - affine scalar equalities (== 0) and inequalities (>= 0), and
///  - an affine objective that is minimized.
///
/// Expressions reference variables by name. Nothing is resolved until the
/// problem is handed to a solver, so problems are plain values that can be
/// copied between threads and serialized.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ddfc/common/json.h"

namespace ddfc::sdp {

struct MatrixVariable {
  std::string name;
  int rows = 0;
  int cols = 0;
  bool symmetric = false;
};

struct ScalarVariable {
  std::string name;
  bool nonnegative = false;
};

/// One entry of a variable; scalars use (0, 0).
struct EntryRef {
  std::string var;
  int row = 0;
  int col = 0;
};

/// c₀ + Σ aₖ·(entry)ₖ.
class LinearExpr {
 public:
  LinearExpr() = default;
  explicit LinearExpr(double constant) : constant_(constant) {}

  LinearExpr& Add(const std::string& var, int row, int col, double coeff);
  LinearExpr& AddScalar(const std::string& scalar, double coeff) {
    return Add(scalar, 0, 0, coeff);
  }
  /// Adds coeff·trace(var) for a square matrix variable of size dim.
  LinearExpr& AddTrace(const std::string& var, int dim, double coeff);
  LinearExpr& AddConstant(double c) {
    constant_ += c;
    return *this;
  }
  LinearExpr& Scale(double s);

  double constant() const { return constant_; }
  const std::vector<std::pair<EntryRef, double>>& terms() const {
    return terms_;
  }
  bool empty() const { return terms_.empty() && constant_ == 0.0; }

 private:
  double constant_ = 0.0;
  std::vector<std::pair<EntryRef, double>> terms_;
};

/// left · X · right (or left · Xᵀ · right), placed at an offset inside the
/// enclosing expression.
struct MatrixTerm {
  std::string var;
  Eigen::MatrixXd left;
  Eigen::MatrixXd right;
  bool transposed = false;
  int row_offset = 0;
  int col_offset = 0;
};

/// s · coeff for a scalar variable s, placed at an offset.
struct ScalarTerm {
  std::string var;
  Eigen::MatrixXd coeff;
  int row_offset = 0;
  int col_offset = 0;
};

/// Affine matrix-valued expression C + Σ Lᵢ Xᵢ Rᵢ + Σ sⱼ Cⱼ.
class AffineMatrix {
 public:
  AffineMatrix() = default;
  AffineMatrix(int rows, int cols);
  static AffineMatrix Constant(const Eigen::MatrixXd& c);

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  AffineMatrix& AddConstant(const Eigen::MatrixXd& c);
  /// Adds left · var · right. `transposed` uses varᵀ instead of var.
  AffineMatrix& AddProduct(const Eigen::MatrixXd& left, const std::string& var,
                           const Eigen::MatrixXd& right,
                           bool transposed = false);
  /// Adds coeff · var for a var of shape rows() × cols() (or its transpose).
  AffineMatrix& AddVariable(const std::string& var, double coeff = 1.0,
                            bool transposed = false);
  AffineMatrix& AddScaled(const std::string& scalar,
                          const Eigen::MatrixXd& coeff);
  AffineMatrix& Add(const AffineMatrix& other);
  AffineMatrix& Scale(double s);
  /// Adds `sub` with its top-left corner at (row, col).
  AffineMatrix& Embed(const AffineMatrix& sub, int row, int col);
  AffineMatrix Transposed() const;

  const Eigen::MatrixXd& constant() const { return constant_; }
  const std::vector<MatrixTerm>& matrix_terms() const { return matrix_terms_; }
  const std::vector<ScalarTerm>& scalar_terms() const { return scalar_terms_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  Eigen::MatrixXd constant_;
  std::vector<MatrixTerm> matrix_terms_;
  std::vector<ScalarTerm> scalar_terms_;
};

/// Assembles a symmetric block matrix from its blocks on and above the
/// diagonal; block (j, i) is the transpose of block (i, j).
class BlockLmiBuilder {
 public:
  explicit BlockLmiBuilder(std::vector<int> sizes);
  void Set(int i, int j, const AffineMatrix& block);
  AffineMatrix Build() const;

 private:
  std::vector<int> sizes_;
  std::vector<int> offsets_;
  std::map<std::pair<int, int>, AffineMatrix> blocks_;
};

enum class LmiSense {
  kPositive,  ///< expr ⪰ εI
  kNegative,  ///< expr ⪯ −εI
};

struct LmiConstraint {
  std::string name;
  AffineMatrix expr;
  LmiSense sense = LmiSense::kPositive;
  /// Strict LMIs get the solver's margin ε; non-strict ones use 0.
  bool strict = true;
};

enum class Relation {
  kEqual,         ///< expr == 0
  kGreaterEqual,  ///< expr >= 0
};

struct LinearConstraint {
  std::string name;
  LinearExpr expr;
  Relation relation = Relation::kGreaterEqual;
};

/// Values assigned to variables; scalars are stored as 1×1 matrices.
using ValueMap = std::map<std::string, Eigen::MatrixXd>;

class SdpProblem {
 public:
  void AddSymmetricMatrix(const std::string& name, int dim);
  void AddGeneralMatrix(const std::string& name, int rows, int cols);
  void AddScalar(const std::string& name, bool nonnegative = false);

  void AddLmi(const std::string& name, const AffineMatrix& expr,
              LmiSense sense = LmiSense::kPositive, bool strict = true);
  void AddEquality(const std::string& name, const LinearExpr& expr);
  /// expr >= 0.
  void AddInequality(const std::string& name, const LinearExpr& expr);
  /// expr is minimized.
  void SetObjective(const LinearExpr& expr) { objective_ = expr; }

  const std::vector<MatrixVariable>& matrix_vars() const {
    return matrix_vars_;
  }
  const std::vector<ScalarVariable>& scalar_vars() const {
    return scalar_vars_;
  }
  const std::vector<LmiConstraint>& lmis() const { return lmis_; }
  const std::vector<LinearConstraint>& linear_constraints() const {
    return linear_;
  }
  const LinearExpr& objective() const { return objective_; }

  bool HasVariable(const std::string& name) const;
  /// Shape of a variable; scalars are 1×1.
  std::pair<int, int> Shape(const std::string& name) const;
  bool IsSymmetric(const std::string& name) const;

  /// Throws ConfigError on unknown names, out-of-range entries, or
  /// inconsistent term dimensions.
  void Validate() const;

  /// Canonical serialization: fields in a fixed order, variables and
  /// constraints in insertion order.
  nlohmann::ordered_json ToJson() const;
  static SdpProblem FromJson(const nlohmann::ordered_json& j);
  std::string CanonicalJson() const;

 private:
  void CheckNewName(const std::string& name) const;

  std::vector<MatrixVariable> matrix_vars_;
  std::vector<ScalarVariable> scalar_vars_;
  std::vector<LmiConstraint> lmis_;
  std::vector<LinearConstraint> linear_;
  LinearExpr objective_;
};

/// Substitutes values into an expression.
Eigen::MatrixXd Evaluate(const AffineMatrix& expr, const ValueMap& values);
double Evaluate(const LinearExpr& expr, const ValueMap& values);

}  // namespace ddfc::sdp
