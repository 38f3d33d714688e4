#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace mgtta {

using Scalar = double;
using Index = Eigen::Index;

// Row-major storage so flat data() walks the matrix row by row.
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

}  // namespace mgtta
