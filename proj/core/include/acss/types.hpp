#pragma once

#include <Eigen/Dense>

namespace acss {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace acss
