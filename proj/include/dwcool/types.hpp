#pragma once

#include <complex>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace dwcool {

using cplx = std::complex<double>;
using MatrixXd = Eigen::MatrixXd;
using MatrixXc = Eigen::MatrixXcd;
using VectorXd = Eigen::VectorXd;
using VectorXc = Eigen::VectorXcd;
using SparseC = Eigen::SparseMatrix<cplx, Eigen::ColMajor>;
using SparseR = Eigen::SparseMatrix<double, Eigen::ColMajor>;
using TripletC = Eigen::Triplet<cplx>;

inline constexpr cplx I_unit{0.0, 1.0};

}  // namespace dwcool
