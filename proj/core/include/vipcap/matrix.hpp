#pragma once

#include <Eigen/Core>

namespace vipcap {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace vipcap
