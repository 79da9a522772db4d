#include "ddfc/sdp/problem.h"

#include <algorithm>

#include <fmt/format.h>

#include "ddfc/common/errors.h"

namespace ddfc::sdp {

LinearExpr& LinearExpr::Add(const std::string& var, int row, int col,
                            double coeff) {
  terms_.push_back({EntryRef{var, row, col}, coeff});
  return *this;
}

LinearExpr& LinearExpr::AddTrace(const std::string& var, int dim,
                                 double coeff) {
  for (int i = 0; i < dim; ++i) Add(var, i, i, coeff);
  return *this;
}

LinearExpr& LinearExpr::Scale(double s) {
  constant_ *= s;
  for (auto& [ref, c] : terms_) c *= s;
  return *this;
}

AffineMatrix::AffineMatrix(int rows, int cols)
    : rows_(rows), cols_(cols), constant_(Eigen::MatrixXd::Zero(rows, cols)) {}

AffineMatrix AffineMatrix::Constant(const Eigen::MatrixXd& c) {
  AffineMatrix m(static_cast<int>(c.rows()), static_cast<int>(c.cols()));
  m.constant_ = c;
  return m;
}

AffineMatrix& AffineMatrix::AddConstant(const Eigen::MatrixXd& c) {
  if (c.rows() != rows_ || c.cols() != cols_) {
    throw ConfigError(fmt::format("constant of shape {}x{} added to {}x{}",
                                  c.rows(), c.cols(), rows_, cols_));
  }
  constant_ += c;
  return *this;
}

AffineMatrix& AffineMatrix::AddProduct(const Eigen::MatrixXd& left,
                                       const std::string& var,
                                       const Eigen::MatrixXd& right,
                                       bool transposed) {
  if (left.rows() != rows_ || right.cols() != cols_) {
    throw ConfigError(fmt::format(
        "term on '{}' has outer shape {}x{}, expression is {}x{}", var,
        left.rows(), right.cols(), rows_, cols_));
  }
  matrix_terms_.push_back(MatrixTerm{var, left, right, transposed, 0, 0});
  return *this;
}

AffineMatrix& AffineMatrix::AddVariable(const std::string& var, double coeff,
                                        bool transposed) {
  return AddProduct(coeff * Eigen::MatrixXd::Identity(rows_, rows_), var,
                    Eigen::MatrixXd::Identity(cols_, cols_), transposed);
}

AffineMatrix& AffineMatrix::AddScaled(const std::string& scalar,
                                      const Eigen::MatrixXd& coeff) {
  if (coeff.rows() != rows_ || coeff.cols() != cols_) {
    throw ConfigError(fmt::format("coefficient of '{}' has shape {}x{}, "
                                  "expression is {}x{}",
                                  scalar, coeff.rows(), coeff.cols(), rows_,
                                  cols_));
  }
  scalar_terms_.push_back(ScalarTerm{scalar, coeff, 0, 0});
  return *this;
}

AffineMatrix& AffineMatrix::Add(const AffineMatrix& other) {
  return Embed(other, 0, 0);
}

AffineMatrix& AffineMatrix::Scale(double s) {
  constant_ *= s;
  for (auto& t : matrix_terms_) t.left *= s;
  for (auto& t : scalar_terms_) t.coeff *= s;
  return *this;
}

AffineMatrix& AffineMatrix::Embed(const AffineMatrix& sub, int row, int col) {
  if (row < 0 || col < 0 || row + sub.rows_ > rows_ ||
      col + sub.cols_ > cols_) {
    throw ConfigError(fmt::format("cannot embed {}x{} at ({}, {}) in {}x{}",
                                  sub.rows_, sub.cols_, row, col, rows_,
                                  cols_));
  }
  constant_.block(row, col, sub.rows_, sub.cols_) += sub.constant_;
  for (MatrixTerm t : sub.matrix_terms_) {
    t.row_offset += row;
    t.col_offset += col;
    matrix_terms_.push_back(std::move(t));
  }
  for (ScalarTerm t : sub.scalar_terms_) {
    t.row_offset += row;
    t.col_offset += col;
    scalar_terms_.push_back(std::move(t));
  }
  return *this;
}

AffineMatrix AffineMatrix::Transposed() const {
  AffineMatrix out(cols_, rows_);
  out.constant_ = constant_.transpose();
  for (const MatrixTerm& t : matrix_terms_) {
    // (L X R)ᵀ = Rᵀ Xᵀ Lᵀ
    out.matrix_terms_.push_back(MatrixTerm{t.var, t.right.transpose(),
                                           t.left.transpose(), !t.transposed,
                                           t.col_offset, t.row_offset});
  }
  for (const ScalarTerm& t : scalar_terms_) {
    out.scalar_terms_.push_back(
        ScalarTerm{t.var, t.coeff.transpose(), t.col_offset, t.row_offset});
  }
  return out;
}

BlockLmiBuilder::BlockLmiBuilder(std::vector<int> sizes)
    : sizes_(std::move(sizes)) {
  int off = 0;
  for (int s : sizes_) {
    offsets_.push_back(off);
    off += s;
  }
  offsets_.push_back(off);
}

void BlockLmiBuilder::Set(int i, int j, const AffineMatrix& block) {
  const int nb = static_cast<int>(sizes_.size());
  if (i < 0 || j < 0 || i >= nb || j >= nb || i > j) {
    throw ConfigError(fmt::format("block ({}, {}) outside upper triangle", i, j));
  }
  if (block.rows() != sizes_[i] || block.cols() != sizes_[j]) {
    throw ConfigError(fmt::format("block ({}, {}) must be {}x{}, got {}x{}", i,
                                  j, sizes_[i], sizes_[j], block.rows(),
                                  block.cols()));
  }
  blocks_[{i, j}] = block;
}

AffineMatrix BlockLmiBuilder::Build() const {
  const int dim = offsets_.back();
  AffineMatrix out(dim, dim);
  for (const auto& [ij, block] : blocks_) {
    const auto [i, j] = ij;
    out.Embed(block, offsets_[i], offsets_[j]);
    if (i != j) out.Embed(block.Transposed(), offsets_[j], offsets_[i]);
  }
  return out;
}

void SdpProblem::CheckNewName(const std::string& name) const {
  if (name.empty()) throw ConfigError("variable name must not be empty");
  if (HasVariable(name)) {
    throw ConfigError(fmt::format("duplicate variable '{}'", name));
  }
}

void SdpProblem::AddSymmetricMatrix(const std::string& name, int dim) {
  CheckNewName(name);
  if (dim <= 0) throw ConfigError("matrix dimension must be positive");
  matrix_vars_.push_back(MatrixVariable{name, dim, dim, true});
}

void SdpProblem::AddGeneralMatrix(const std::string& name, int rows,
                                  int cols) {
  CheckNewName(name);
  if (rows <= 0 || cols <= 0) {
    throw ConfigError("matrix dimensions must be positive");
  }
  matrix_vars_.push_back(MatrixVariable{name, rows, cols, false});
}

void SdpProblem::AddScalar(const std::string& name, bool nonnegative) {
  CheckNewName(name);
  scalar_vars_.push_back(ScalarVariable{name, nonnegative});
}

void SdpProblem::AddLmi(const std::string& name, const AffineMatrix& expr,
                        LmiSense sense, bool strict) {
  if (expr.rows() != expr.cols() || expr.rows() == 0) {
    throw ConfigError(fmt::format("LMI '{}' is not square", name));
  }
  lmis_.push_back(LmiConstraint{name, expr, sense, strict});
}

void SdpProblem::AddEquality(const std::string& name, const LinearExpr& expr) {
  linear_.push_back(LinearConstraint{name, expr, Relation::kEqual});
}

void SdpProblem::AddInequality(const std::string& name,
                               const LinearExpr& expr) {
  linear_.push_back(LinearConstraint{name, expr, Relation::kGreaterEqual});
}

bool SdpProblem::HasVariable(const std::string& name) const {
  return std::any_of(matrix_vars_.begin(), matrix_vars_.end(),
                     [&](const auto& v) { return v.name == name; }) ||
         std::any_of(scalar_vars_.begin(), scalar_vars_.end(),
                     [&](const auto& v) { return v.name == name; });
}

std::pair<int, int> SdpProblem::Shape(const std::string& name) const {
  for (const auto& v : matrix_vars_) {
    if (v.name == name) return {v.rows, v.cols};
  }
  for (const auto& v : scalar_vars_) {
    if (v.name == name) return {1, 1};
  }
  throw ConfigError(fmt::format("unknown variable '{}'", name));
}

bool SdpProblem::IsSymmetric(const std::string& name) const {
  for (const auto& v : matrix_vars_) {
    if (v.name == name) return v.symmetric;
  }
  return false;
}

namespace {

bool IsScalarVar(const SdpProblem& p, const std::string& name) {
  return std::any_of(p.scalar_vars().begin(), p.scalar_vars().end(),
                     [&](const auto& v) { return v.name == name; });
}

void ValidateLinear(const SdpProblem& p, const LinearExpr& e,
                    const std::string& where) {
  for (const auto& [ref, c] : e.terms()) {
    const auto [r, cc] = p.Shape(ref.var);
    if (ref.row < 0 || ref.col < 0 || ref.row >= r || ref.col >= cc) {
      throw ConfigError(fmt::format("{}: entry ({}, {}) outside '{}' ({}x{})",
                                    where, ref.row, ref.col, ref.var, r, cc));
    }
  }
}

}  // namespace

void SdpProblem::Validate() const {
  for (const auto& lmi : lmis_) {
    const AffineMatrix& e = lmi.expr;
    for (const auto& t : e.matrix_terms()) {
      if (IsScalarVar(*this, t.var)) {
        throw ConfigError(fmt::format(
            "LMI '{}': scalar '{}' used as a matrix term", lmi.name, t.var));
      }
      auto [r, c] = Shape(t.var);
      if (t.transposed) std::swap(r, c);
      if (t.left.cols() != r || t.right.rows() != c) {
        throw ConfigError(fmt::format(
            "LMI '{}': term on '{}' has inner shape {}x{}, variable is {}x{}",
            lmi.name, t.var, t.left.cols(), t.right.rows(), r, c));
      }
      if (t.row_offset + t.left.rows() > e.rows() ||
          t.col_offset + t.right.cols() > e.cols()) {
        throw ConfigError(
            fmt::format("LMI '{}': term on '{}' overflows", lmi.name, t.var));
      }
    }
    for (const auto& t : e.scalar_terms()) {
      if (!IsScalarVar(*this, t.var)) {
        throw ConfigError(fmt::format("LMI '{}': '{}' is not a scalar",
                                      lmi.name, t.var));
      }
    }
  }
  for (const auto& lc : linear_) ValidateLinear(*this, lc.expr, lc.name);
  ValidateLinear(*this, objective_, "objective");
}

namespace {

Json LinearToJson(const LinearExpr& e) {
  Json j;
  j["constant"] = e.constant();
  Json terms = Json::array();
  for (const auto& [ref, c] : e.terms()) {
    Json t;
    t["var"] = ref.var;
    t["row"] = ref.row;
    t["col"] = ref.col;
    t["coeff"] = c;
    terms.push_back(std::move(t));
  }
  j["terms"] = std::move(terms);
  return j;
}

LinearExpr LinearFromJson(const Json& j) {
  LinearExpr e(j.at("constant").get<double>());
  for (const auto& t : j.at("terms")) {
    e.Add(t.at("var").get<std::string>(), t.at("row").get<int>(),
          t.at("col").get<int>(), t.at("coeff").get<double>());
  }
  return e;
}

Json AffineToJson(const AffineMatrix& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["constant"] = MatrixToJson(m.constant());
  Json mt = Json::array();
  for (const auto& t : m.matrix_terms()) {
    Json o;
    o["var"] = t.var;
    o["transposed"] = t.transposed;
    o["row_offset"] = t.row_offset;
    o["col_offset"] = t.col_offset;
    o["left"] = MatrixToJson(t.left);
    o["right"] = MatrixToJson(t.right);
    mt.push_back(std::move(o));
  }
  j["matrix_terms"] = std::move(mt);
  Json st = Json::array();
  for (const auto& t : m.scalar_terms()) {
    Json o;
    o["var"] = t.var;
    o["row_offset"] = t.row_offset;
    o["col_offset"] = t.col_offset;
    o["coeff"] = MatrixToJson(t.coeff);
    st.push_back(std::move(o));
  }
  j["scalar_terms"] = std::move(st);
  return j;
}

AffineMatrix AffineFromJson(const Json& j) {
  AffineMatrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
  m.AddConstant(MatrixFromJson(j.at("constant")));
  for (const auto& o : j.at("matrix_terms")) {
    const Eigen::MatrixXd left = MatrixFromJson(o.at("left"));
    const Eigen::MatrixXd right = MatrixFromJson(o.at("right"));
    AffineMatrix sub(static_cast<int>(left.rows()),
                     static_cast<int>(right.cols()));
    sub.AddProduct(left, o.at("var").get<std::string>(), right,
                   o.at("transposed").get<bool>());
    m.Embed(sub, o.at("row_offset").get<int>(), o.at("col_offset").get<int>());
  }
  for (const auto& o : j.at("scalar_terms")) {
    const Eigen::MatrixXd coeff = MatrixFromJson(o.at("coeff"));
    AffineMatrix sub(static_cast<int>(coeff.rows()),
                     static_cast<int>(coeff.cols()));
    sub.AddScaled(o.at("var").get<std::string>(), coeff);
    m.Embed(sub, o.at("row_offset").get<int>(), o.at("col_offset").get<int>());
  }
  return m;
}

}  // namespace

Json SdpProblem::ToJson() const {
  Json j;
  Json mv = Json::array();
  for (const auto& v : matrix_vars_) {
    Json o;
    o["name"] = v.name;
    o["rows"] = v.rows;
    o["cols"] = v.cols;
    o["symmetric"] = v.symmetric;
    mv.push_back(std::move(o));
  }
  j["matrix_vars"] = std::move(mv);
  Json sv = Json::array();
  for (const auto& v : scalar_vars_) {
    Json o;
    o["name"] = v.name;
    o["nonnegative"] = v.nonnegative;
    sv.push_back(std::move(o));
  }
  j["scalar_vars"] = std::move(sv);
  Json lm = Json::array();
  for (const auto& l : lmis_) {
    Json o;
    o["name"] = l.name;
    o["sense"] = l.sense == LmiSense::kPositive ? "psd" : "nsd";
    o["strict"] = l.strict;
    o["expr"] = AffineToJson(l.expr);
    lm.push_back(std::move(o));
  }
  j["lmi_constraints"] = std::move(lm);
  Json eqs = Json::array();
  Json ineqs = Json::array();
  for (const auto& c : linear_) {
    Json o;
    o["name"] = c.name;
    o["expr"] = LinearToJson(c.expr);
    (c.relation == Relation::kEqual ? eqs : ineqs).push_back(std::move(o));
  }
  j["linear_eqs"] = std::move(eqs);
  j["linear_ineqs"] = std::move(ineqs);
  j["objective"] = LinearToJson(objective_);
  return j;
}

SdpProblem SdpProblem::FromJson(const Json& j) {
  SdpProblem p;
  try {
    for (const auto& o : j.at("matrix_vars")) {
      const auto name = o.at("name").get<std::string>();
      if (o.at("symmetric").get<bool>()) {
        p.AddSymmetricMatrix(name, o.at("rows").get<int>());
      } else {
        p.AddGeneralMatrix(name, o.at("rows").get<int>(),
                           o.at("cols").get<int>());
      }
    }
    for (const auto& o : j.at("scalar_vars")) {
      p.AddScalar(o.at("name").get<std::string>(),
                  o.at("nonnegative").get<bool>());
    }
    for (const auto& o : j.at("lmi_constraints")) {
      p.AddLmi(o.at("name").get<std::string>(), AffineFromJson(o.at("expr")),
               o.at("sense").get<std::string>() == "psd" ? LmiSense::kPositive
                                                         : LmiSense::kNegative,
               o.at("strict").get<bool>());
    }
    for (const auto& o : j.at("linear_eqs")) {
      p.AddEquality(o.at("name").get<std::string>(),
                    LinearFromJson(o.at("expr")));
    }
    for (const auto& o : j.at("linear_ineqs")) {
      p.AddInequality(o.at("name").get<std::string>(),
                      LinearFromJson(o.at("expr")));
    }
    p.SetObjective(LinearFromJson(j.at("objective")));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed SDP problem JSON: ") + e.what());
  }
  return p;
}

std::string SdpProblem::CanonicalJson() const { return ToJson().dump(); }

namespace {

const Eigen::MatrixXd& Lookup(const ValueMap& values, const std::string& var) {
  auto it = values.find(var);
  if (it == values.end()) {
    throw ConfigError(fmt::format("no value for variable '{}'", var));
  }
  return it->second;
}

}  // namespace

Eigen::MatrixXd Evaluate(const AffineMatrix& expr, const ValueMap& values) {
  Eigen::MatrixXd out = expr.constant();
  for (const auto& t : expr.matrix_terms()) {
    const Eigen::MatrixXd& x = Lookup(values, t.var);
    Eigen::MatrixXd prod = t.transposed
                               ? Eigen::MatrixXd(t.left * x.transpose() * t.right)
                               : Eigen::MatrixXd(t.left * x * t.right);
    out.block(t.row_offset, t.col_offset, prod.rows(), prod.cols()) += prod;
  }
  for (const auto& t : expr.scalar_terms()) {
    const double s = Lookup(values, t.var)(0, 0);
    out.block(t.row_offset, t.col_offset, t.coeff.rows(), t.coeff.cols()) +=
        s * t.coeff;
  }
  return out;
}

double Evaluate(const LinearExpr& expr, const ValueMap& values) {
  double v = expr.constant();
  for (const auto& [ref, c] : expr.terms()) {
    v += c * Lookup(values, ref.var)(ref.row, ref.col);
  }
  return v;
}

}  // namespace ddfc::sdp
