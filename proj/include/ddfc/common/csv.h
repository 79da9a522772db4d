#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ddfc {

/// Numeric table with an optional header row. Values are written with
/// round-trip precision.
void WriteCsv(const std::string& path, const Eigen::MatrixXd& m,
              const std::vector<std::string>& header = {});

/// Reads a numeric table; a first line that does not parse as numbers is
/// taken as the header.
Eigen::MatrixXd ReadCsv(const std::string& path, std::vector<std::string>* header = nullptr);

}  // namespace ddfc
