#include "fmlab/gaussian_transport.hpp"

#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "fmlab/rng.hpp"

namespace fmlab::gauss {

namespace {

void check_t(double t) {
  if (!(t >= 0.0 && t <= 1.0))
    throw DomainError("t must lie in [0, 1]");
}

}  // namespace

GaussianTransport make_transport(linalg::SpectralMatrix H) {
  if (!H.positive_definite())
    throw DefinitenessError("target covariance must be positive-definite");
  GaussianTransport m;
  m.dim = H.dim;
  m.H = std::move(H);
  return m;
}

linalg::SpectralMatrix sigma_t(const GaussianTransport& m, double t) {
  check_t(t);
  Eigen::VectorXd vals = sigma_eigenvalues(m, t);
  return linalg::spectral_from_parts(vals, m.H.eigvecs);
}

Eigen::VectorXd sigma_eigenvalues(const GaussianTransport& m, double t) {
  check_t(t);
  const double c2 = (1.0 - t) * (1.0 - t);
  const double t2 = t * t;
  return (c2 + t2 * m.H.eigvals.array()).matrix();
}

Eigen::VectorXd analytic_score(const GaussianTransport& m, double t,
                               const Eigen::VectorXd& x) {
  check_t(t);
  if (x.size() != m.dim) throw DimensionError("analytic_score: wrong x dim");
  Eigen::VectorXd sig = sigma_eigenvalues(m, t);
  Eigen::VectorXd w = m.H.eigvecs.transpose() * x;
  w.array() /= sig.array();
  return -(m.H.eigvecs * w);
}

Eigen::MatrixXd optimal_velocity_matrix(const GaussianTransport& m, double t) {
  check_t(t);
  // Per eigen-direction: (t lambda_i - (1-t)) / ((1-t)^2 + t^2 lambda_i).
  Eigen::VectorXd sig = sigma_eigenvalues(m, t);
  Eigen::VectorXd num =
      (t * m.H.eigvals.array() - (1.0 - t)).matrix();
  Eigen::VectorXd a = num.array() / sig.array();
  return m.H.eigvecs * a.asDiagonal() * m.H.eigvecs.transpose();
}

std::vector<std::pair<double, double>> condition_trajectory(
    const GaussianTransport& m, const std::vector<double>& ts) {
  if (ts.empty()) throw DomainError("condition_trajectory: empty grid");
  std::vector<std::pair<double, double>> out;
  out.reserve(ts.size());
  const double lmin = m.H.eigvals[0];
  const double lmax = m.H.eigvals[m.dim - 1];
  for (double t : ts) {
    check_t(t);
    const double c2 = (1.0 - t) * (1.0 - t);
    const double t2 = t * t;
    out.emplace_back(t, (c2 + t2 * lmax) / (c2 + t2 * lmin));
  }
  return out;
}

IterationPrediction predicted_gd_iterations(const GaussianTransport& m,
                                            double t, double eta, double eps) {
  check_t(t);
  if (!(eps > 0.0 && eps < 1.0))
    throw DomainError("predicted_gd_iterations: eps must be in (0, 1)");
  Eigen::VectorXd sig = sigma_eigenvalues(m, t);
  const double smin = sig.minCoeff();
  const double smax = sig.maxCoeff();
  if (!(eta > 0.0 && eta < 1.0 / smax))
    throw StabilityError("predicted_gd_iterations: eta outside (0, 1/sigma_max)");
  IterationPrediction p;
  const double rho = std::abs(1.0 - 2.0 * eta * smin);
  const double log_inv_eps = std::log(1.0 / eps);
  // rho == 0 means one exact step kills the slowest mode; clamp to >= 1.
  p.exact = rho == 0.0 ? 1.0 : std::max(1.0, log_inv_eps / (-std::log(rho)));
  p.approx = log_inv_eps / (2.0 * eta * smin);
  return p;
}

GdTrace run_matrix_gd(const linalg::SpectralMatrix& Sigma,
                      const Eigen::MatrixXd& Astar, const Eigen::MatrixXd& A0,
                      double eta, int steps, double t_tag) {
  if (steps < 1) throw DomainError("run_matrix_gd: steps must be >= 1");
  if (!(eta > 0.0)) throw DomainError("run_matrix_gd: eta must be > 0");
  const int d = Sigma.dim;
  if (Astar.rows() != d || Astar.cols() != d || A0.rows() != d ||
      A0.cols() != d)
    throw DimensionError("run_matrix_gd: matrix dims disagree");

  // C = A* Sigma, so the update A <- A - 2 eta (A Sigma - C) has gradient
  // zero exactly at A*.
  const Eigen::MatrixXd C = Astar * Sigma.entries;

  GdTrace trace;
  trace.eta = eta;
  trace.t = t_tag;
  trace.sigma = Sigma.eigvals;
  trace.per_mode_errors.resize(d, steps + 1);
  trace.frobenius_errors.resize(steps + 1);

  Eigen::MatrixXd A = A0;
  Eigen::MatrixXd E = A - Astar;
  trace.per_mode_errors.col(0) = (E * Sigma.eigvecs).row(0).transpose();
  trace.frobenius_errors[0] = E.norm();
  for (int k = 1; k <= steps; ++k) {
    A -= 2.0 * eta * (A * Sigma.entries - C);
    E = A - Astar;
    if (!E.allFinite()) {
      // Divergence is recorded, not raised: flood the remaining columns
      // with the overflow sentinel and stop iterating.
      const double inf = std::numeric_limits<double>::infinity();
      for (int kk = k; kk <= steps; ++kk) {
        trace.per_mode_errors.col(kk).setConstant(inf);
        trace.frobenius_errors[kk] = inf;
      }
      return trace;
    }
    trace.per_mode_errors.col(k) = (E * Sigma.eigvecs).row(0).transpose();
    trace.frobenius_errors[k] = E.norm();
  }
  return trace;
}

GdTrace gd_simulate(const GaussianTransport& m, double t, double eta,
                    int steps, const Eigen::MatrixXd& A0) {
  check_t(t);
  linalg::SpectralMatrix St = sigma_t(m, t);
  return run_matrix_gd(St, optimal_velocity_matrix(m, t), A0, eta, steps, t);
}

SgdTrace sgd_simulate(const GaussianTransport& m, double t, double eta,
                      long steps, std::uint64_t seed) {
  check_t(t);
  if (steps < 1000) throw DomainError("sgd_simulate: steps must be >= 1000");
  Eigen::VectorXd sig = sigma_eigenvalues(m, t);
  const double smax = sig.maxCoeff();
  if (!(eta > 0.0 && eta < 1.0 / smax))
    throw StabilityError("sgd_simulate: eta outside (0, 1/sigma_max)");

  const int d = m.dim;
  const Eigen::MatrixXd Astar = optimal_velocity_matrix(m, t);
  const Eigen::MatrixXd& U = m.H.eigvecs;
  const Eigen::VectorXd lam_sqrt = m.H.eigvals.array().sqrt();

  Rng rng(seed, "sgd_simulate");

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);

  // Trailing 50% of iterations, split into 10 equal blocks. Per-mode error
  // samples are collected only inside the tail to bound memory.
  const long tail_start = steps / 2;
  const long tail_len = steps - tail_start;
  const int n_windows = 10;
  const long block = tail_len / n_windows;
  Eigen::MatrixXd tail(d, tail_len);

  Eigen::VectorXd x0(d), z(d), x1(d), xt(d), y(d), r(d);
  for (long mstep = 0; mstep < steps; ++mstep) {
    for (int i = 0; i < d; ++i) x0[i] = rng.normal();
    for (int i = 0; i < d; ++i) z[i] = rng.normal();
    x1 = U * (lam_sqrt.array() * z.array()).matrix();
    xt = (1.0 - t) * x0 + t * x1;
    y = x1 - x0;
    r = A * xt - y;
    A.noalias() -= (2.0 * eta) * r * xt.transpose();
    if (mstep >= tail_start) {
      // e_i = first row of (A - A*) U, the signed per-mode error scalar.
      tail.col(mstep - tail_start) =
          ((A - Astar) * U).row(0).transpose();
    }
  }
  if (!A.allFinite())
    throw NumericError("sgd_simulate: iterate overflowed to non-finite values");

  SgdTrace trace;
  trace.eta = eta;
  trace.t = t;
  trace.sigma = sig;
  trace.per_mode_variance.resize(d, n_windows);
  trace.noise_scale_estimates.resize(d);
  trace.mean_sq_error.resize(d);
  for (int i = 0; i < d; ++i) {
    for (int w = 0; w < n_windows; ++w) {
      auto seg = tail.row(i).segment(w * block, block);
      const double mean = seg.mean();
      trace.per_mode_variance(i, w) =
          (seg.array() - mean).square().sum() / static_cast<double>(block);
    }
    const double var_mean = trace.per_mode_variance.row(i).mean();
    trace.noise_scale_estimates[i] = var_mean * sig[i] / eta;
    trace.mean_sq_error[i] = tail.row(i).array().square().mean();
  }
  return trace;
}

Eigen::VectorXd sgd_stationary_variance(const GaussianTransport& m, double t,
                                        double eta) {
  check_t(t);
  const int d = m.dim;
  Eigen::VectorXd sig = sigma_eigenvalues(m, t);
  if (!(eta > 0.0 && eta < 1.0 / sig.maxCoeff()))
    throw StabilityError("sgd_stationary_variance: eta outside stable range");

  // Residual covariance at the optimum: r = A* x_t - y with
  // Cov(y) = I + H, Cov(y, x_t) = C = tH - (1-t)I, Cov(x_t) = Sigma_t, so
  // Cov(r) = I + H - C Sigma_t^{-1} C^T (r is independent of x_t).
  const Eigen::MatrixXd& U = m.H.eigvecs;
  Eigen::VectorXd lam = m.H.eigvals;
  Eigen::VectorXd c_modes = (t * lam.array() - (1.0 - t)).matrix();
  Eigen::VectorXd r_modes =
      (1.0 + lam.array()) - c_modes.array().square() / sig.array();
  Eigen::MatrixXd Rcov = U * r_modes.asDiagonal() * U.transpose();

  // Stationary per-mode variance for row j solves, with D = diag(sigma),
  //   v_i (1 - 2 eta sigma_i) - eta * sum_l sigma_l v_l = eta * nu_j^2
  // (Gaussian fourth-moment identity applied to the squared update).
  Eigen::MatrixXd Msys = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    for (int l = 0; l < d; ++l) Msys(i, l) = -eta * sig[l];
    Msys(i, i) += 1.0 - 2.0 * eta * sig[i];
  }
  Eigen::VectorXd v_mean = Eigen::VectorXd::Zero(d);
  for (int j = 0; j < d; ++j) {
    const double nu2 = Rcov(j, j);
    Eigen::VectorXd rhs = Eigen::VectorXd::Constant(d, eta * nu2);
    v_mean += Msys.fullPivLu().solve(rhs);
  }
  return v_mean / static_cast<double>(d);
}

Theorem1Result theorem1_experiment(const linalg::SpectralMatrix& Sigma,
                                   EtaRule rule, double eps) {
  if (!Sigma.positive_definite())
    throw DefinitenessError("theorem1_experiment: Sigma must be PD");
  if (!(eps > 0.0 && eps < 1.0))
    throw DomainError("theorem1_experiment: eps must be in (0, 1)");

  const auto eta_for = [&](double lam_max) {
    switch (rule) {
      case EtaRule::half_inverse_lambda_max:
        return 0.5 / lam_max;
      case EtaRule::inverse_lambda_max:
        return 1.0 / lam_max;
    }
    throw DomainError("theorem1_experiment: unknown eta rule");
  };

  // y = x so A* = I and the exact population gradient is 2(A Cov[x] - Cov[x]).
  // Both runs iterate the dense update until the relative Frobenius error
  // falls below eps, starting from A0 = 0.
  const long cap = 2'000'000;
  const int d = Sigma.dim;
  const auto iterations = [&](const Eigen::MatrixXd& cov, double eta) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
    const Eigen::MatrixXd Astar = Eigen::MatrixXd::Identity(d, d);
    const double e0 = (A - Astar).norm();
    long k = 0;
    while ((A - Astar).norm() > eps * e0) {
      A -= 2.0 * eta * (A * cov - cov);
      ++k;
      if (k >= cap)
        throw ConvergenceError(
            "theorem1_experiment: iteration cap reached (step size at or "
            "beyond the stability boundary)");
    }
    return k;
  };

  Theorem1Result res;
  res.eta_plain = eta_for(Sigma.eigvals.maxCoeff());
  res.k_plain = iterations(Sigma.entries, res.eta_plain);
  // Whitened variable x~ = Sigma^{-1/2} x has identity covariance exactly.
  res.eta_whitened = eta_for(1.0);
  res.k_whitened = iterations(Eigen::MatrixXd::Identity(d, d), res.eta_whitened);
  return res;
}

}  // namespace fmlab::gauss
