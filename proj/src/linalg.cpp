#include "fmlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace fmlab::linalg {

namespace {

constexpr double kOffDiagThreshold = 1e-13;  // relative to ||A||_F
constexpr int kMaxSweeps = 100;

// Frobenius norm of the strictly off-diagonal part.
double off_diag_norm(const Eigen::MatrixXd& A) {
  const int n = static_cast<int>(A.rows());
  double s = 0.0;
  for (int p = 0; p < n; ++p)
    for (int q = p + 1; q < n; ++q) s += 2.0 * A(p, q) * A(p, q);
  return std::sqrt(s);
}

}  // namespace

Eigen::VectorXd SpectralMatrix::apply_inverse(const Eigen::VectorXd& x) const {
  if (!positive_definite())
    throw DefinitenessError("apply_inverse requires a positive-definite matrix");
  Eigen::VectorXd w = eigvecs.transpose() * x;
  w.array() /= eigvals.array();
  return eigvecs * w;
}

double SpectralMatrix::log_det() const {
  if (!positive_definite())
    throw DefinitenessError("log_det requires a positive-definite matrix");
  return eigvals.array().log().sum();
}

SpectralMatrix sym_eig(const Eigen::MatrixXd& S) {
  if (S.rows() != S.cols() || S.rows() < 1)
    throw DimensionError("sym_eig: input must be square with dim >= 1");
  const int n = static_cast<int>(S.rows());

  const double max_abs = S.cwiseAbs().maxCoeff();
  const double sym_tol = 1e-12 * std::max(1.0, max_abs);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::abs(S(i, j) - S(j, i)) > sym_tol)
        throw DimensionError("sym_eig: input is not symmetric within tolerance");

  // Work on the symmetrized copy so tiny asymmetries cannot bias sweeps.
  Eigen::MatrixXd A = 0.5 * (S + S.transpose());
  Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n);
  const double frob = std::max(A.norm(), 1e-300);

  bool converged = off_diag_norm(A) <= kOffDiagThreshold * frob;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t =
            (theta >= 0.0 ? 1.0 : -1.0) /
            (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        const double app = A(p, p);
        const double aqq = A(q, q);
        A(p, p) = app - t * apq;
        A(q, q) = aqq + t * apq;
        A(p, q) = 0.0;
        A(q, p) = 0.0;
        for (int r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double arp = A(r, p);
          const double arq = A(r, q);
          A(r, p) = c * arp - s * arq;
          A(p, r) = A(r, p);
          A(r, q) = s * arp + c * arq;
          A(q, r) = A(r, q);
        }
        for (int r = 0; r < n; ++r) {
          const double vrp = V(r, p);
          const double vrq = V(r, q);
          V(r, p) = c * vrp - s * vrq;
          V(r, q) = s * vrp + c * vrq;
        }
      }
    }
    converged = off_diag_norm(A) <= kOffDiagThreshold * frob;
  }
  if (!converged)
    throw ConvergenceError("sym_eig: Jacobi sweeps exhausted without reaching "
                           "the off-diagonal threshold");

  // Sort eigenpairs ascending; fix each eigenvector's sign so its largest
  // absolute component is positive (stable, deterministic convention).
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd diag = A.diagonal();
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return diag[a] < diag[b]; });

  SpectralMatrix out;
  out.dim = n;
  out.eigvals.resize(n);
  out.eigvecs.resize(n, n);
  for (int i = 0; i < n; ++i) {
    out.eigvals[i] = diag[order[i]];
    Eigen::VectorXd col = V.col(order[i]);
    int arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col[arg] < 0.0) col = -col;
    out.eigvecs.col(i) = col;
  }
  out.entries = 0.5 * (S + S.transpose());
  return out;
}

SpectralMatrix spectral_from_parts(const Eigen::VectorXd& eigvals,
                                   const Eigen::MatrixXd& eigvecs) {
  const int n = static_cast<int>(eigvals.size());
  if (eigvecs.rows() != n || eigvecs.cols() != n || n < 1)
    throw DimensionError("spectral_from_parts: inconsistent dimensions");
  for (int i = 1; i < n; ++i)
    if (eigvals[i] < eigvals[i - 1])
      throw DomainError("spectral_from_parts: eigenvalues must be ascending");
  SpectralMatrix out;
  out.dim = n;
  out.eigvals = eigvals;
  out.eigvecs = eigvecs;
  out.entries = eigvecs * eigvals.asDiagonal() * eigvecs.transpose();
  out.entries = 0.5 * (out.entries + out.entries.transpose().eval());
  return out;
}

double cond_number(const SpectralMatrix& S) {
  if (!S.positive_definite())
    throw DefinitenessError("cond_number requires a positive-definite matrix");
  return S.eigvals[S.dim - 1] / S.eigvals[0];
}

Eigen::MatrixXd inv_sqrt(const SpectralMatrix& S, double ridge) {
  if (ridge < 0.0) throw DomainError("inv_sqrt: ridge must be >= 0");
  Eigen::VectorXd shifted = S.eigvals.array() + ridge;
  if (shifted.minCoeff() <= 0.0)
    throw DefinitenessError("inv_sqrt requires positive eigenvalues after ridge");
  Eigen::VectorXd inv_roots = shifted.array().rsqrt();
  Eigen::MatrixXd M =
      S.eigvecs * inv_roots.asDiagonal() * S.eigvecs.transpose();
  return 0.5 * (M + M.transpose().eval());
}

Eigen::MatrixXd sqrt_pd(const SpectralMatrix& S, double ridge) {
  if (ridge < 0.0) throw DomainError("sqrt_pd: ridge must be >= 0");
  Eigen::VectorXd shifted = S.eigvals.array() + ridge;
  if (shifted.minCoeff() <= 0.0)
    throw DefinitenessError("sqrt_pd requires positive eigenvalues after ridge");
  Eigen::VectorXd roots = shifted.array().sqrt();
  Eigen::MatrixXd M = S.eigvecs * roots.asDiagonal() * S.eigvecs.transpose();
  return 0.5 * (M + M.transpose().eval());
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& points, bool centered) {
  const long n = points.rows();
  if (n < 2) throw SampleSizeError("sample_covariance needs at least 2 points");
  if (points.cols() < 1)
    throw DimensionError("sample_covariance: points must have dim >= 1");
  Eigen::MatrixXd C;
  if (centered) {
    Eigen::RowVectorXd mean = points.colwise().mean();
    Eigen::MatrixXd c = points.rowwise() - mean;
    C = (c.transpose() * c) / static_cast<double>(n);
  } else {
    C = (points.transpose() * points) / static_cast<double>(n);
  }
  return 0.5 * (C + C.transpose().eval());
}

}  // namespace fmlab::linalg
