#pragma once

#include <Eigen/Core>

#include "fmlab/errors.hpp"

namespace fmlab::linalg {

// A symmetric matrix carried together with its eigendecomposition.
// eigvals are sorted ascending; eigvecs columns are the matching
// orthonormal eigenvectors, so entries = eigvecs * diag(eigvals) * eigvecs^T.
struct SpectralMatrix {
  int dim = 0;
  Eigen::MatrixXd entries;
  Eigen::VectorXd eigvals;
  Eigen::MatrixXd eigvecs;

  bool positive_definite() const {
    return dim > 0 && eigvals.minCoeff() > 0.0;
  }

  Eigen::MatrixXd reconstruct() const {
    return eigvecs * eigvals.asDiagonal() * eigvecs.transpose();
  }

  // Solve S y = x through the spectral factors (requires PD).
  Eigen::VectorXd apply_inverse(const Eigen::VectorXd& x) const;

  // log(det S) through the eigenvalues (requires PD).
  double log_det() const;
};

// Eigendecomposition of a dense symmetric matrix via cyclic Jacobi
// rotations (off-diagonal threshold 1e-13 relative, at most 100 sweeps).
// Deterministic: identical input bytes give identical output bytes.
// Throws DimensionError for non-square/asymmetric input and
// ConvergenceError if the sweep cap is exhausted.
SpectralMatrix sym_eig(const Eigen::MatrixXd& S);

// Build a SpectralMatrix directly from spectral parts that are already
// known (e.g. matrices sharing the eigenbasis of a decomposed one).
// eigvals must be ascending; columns of eigvecs orthonormal.
SpectralMatrix spectral_from_parts(const Eigen::VectorXd& eigvals,
                                   const Eigen::MatrixXd& eigvecs);

// Condition number lambda_max / lambda_min of a positive-definite matrix.
// Throws DefinitenessError when any eigenvalue is <= 0.
double cond_number(const SpectralMatrix& S);

// Inverse matrix square root (S + ridge*I)^(-1/2) through the spectral
// factors; ridge defaults to 0 (caller opts in for empirical covariances).
Eigen::MatrixXd inv_sqrt(const SpectralMatrix& S, double ridge = 0.0);

// Matrix square root S^(1/2) (requires PD after ridge).
Eigen::MatrixXd sqrt_pd(const SpectralMatrix& S, double ridge = 0.0);

// Second-moment matrix of a point set (rows are points).
// centered=false: (1/n) * sum x x^T (zero-mean form, the default used by
// whitening); centered=true subtracts the sample mean first (same 1/n
// normalizer). Throws SampleSizeError for n < 2, DimensionError for d < 1.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& points,
                                  bool centered = false);

}  // namespace fmlab::linalg
