#pragma once

#include <Eigen/Dense>

namespace uot {

// Row-major so that a point cloud row is one contiguous point.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace uot
