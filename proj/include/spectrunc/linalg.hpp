#pragma once

#include <Eigen/Dense>

namespace spectrunc::linalg {

// Ascending eigenvalues of a hermitian matrix; eigenvectors (as columns)
// written to *vectors when given. Only the lower triangle is referenced.
Eigen::VectorXd eigh(const Eigen::MatrixXcd& a, Eigen::MatrixXcd* vectors = nullptr);

// Largest singular value.
double operator_norm(const Eigen::MatrixXcd& a);

}  // namespace spectrunc::linalg
