#include "ddfc/common/csv.h"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "ddfc/common/errors.h"

namespace ddfc {
namespace {

std::vector<std::string> SplitLine(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool ParseDouble(const std::string& s, double* v) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return false;
  const char* first = s.data() + b;
  const char* last = s.data() + e + 1;
  auto [ptr, ec] = std::from_chars(first, last, *v);
  return ec == std::errc() && ptr == last;
}

}  // namespace

void WriteCsv(const std::string& path, const Eigen::MatrixXd& m,
              const std::vector<std::string>& header) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  if (!header.empty()) {
    if (static_cast<Eigen::Index>(header.size()) != m.cols()) {
      throw ConfigError(fmt::format("{}: {} header names for {} columns", path, header.size(),
                                    m.cols()));
    }
    out << fmt::format("{}\n", fmt::join(header, ","));
  }
  std::string line;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    line.clear();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) line += ',';
      line += fmt::format("{}", m(r, c));
    }
    out << line << '\n';
  }
  if (!out) throw ConfigError("write failed: " + path);
}

Eigen::MatrixXd ReadCsv(const std::string& path, std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = SplitLine(line);
    std::vector<double> vals(cells.size());
    bool numeric = true;
    for (std::size_t i = 0; i < cells.size() && numeric; ++i) {
      numeric = ParseDouble(cells[i], &vals[i]);
    }
    if (!numeric) {
      if (!first) throw ConfigError(fmt::format("{}: non-numeric row '{}'", path, line));
      if (header) *header = cells;
      first = false;
      continue;
    }
    first = false;
    if (!rows.empty() && vals.size() != rows.front().size()) {
      throw ConfigError(fmt::format("{}: ragged row '{}'", path, line));
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

}  // namespace ddfc
