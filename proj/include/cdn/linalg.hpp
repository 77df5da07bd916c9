#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace cdn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

} // namespace cdn
