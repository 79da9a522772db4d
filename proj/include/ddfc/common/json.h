#pragma once

#include <string>

#include <Eigen/Dense>

#include "json.hpp"

namespace ddfc {

using Json = nlohmann::ordered_json;

/// Row-major nested arrays; an empty matrix keeps its shape in a
/// {"rows", "cols"} object so round trips preserve dimensions.
Json MatrixToJson(const Eigen::MatrixXd& m);
Eigen::MatrixXd MatrixFromJson(const Json& j);

Json VectorToJson(const Eigen::VectorXd& v);
Eigen::VectorXd VectorFromJson(const Json& j);

Json ReadJsonFile(const std::string& path);
void WriteJsonFile(const std::string& path, const Json& j);

}  // namespace ddfc
