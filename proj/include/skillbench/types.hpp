#pragma once

#include <Eigen/Core>

namespace skillbench {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

} // namespace skillbench
