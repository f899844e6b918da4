#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fmlab/linalg.hpp"

namespace fmlab::gauss {

// The exactly solvable transport model: reference x0 ~ N(0, I), target
// x1 ~ N(0, H), linear path x_t = (1-t) x0 + t x1. Everything downstream
// (score, optimal velocity, conditioning, GD/SGD dynamics) is closed-form.
struct GaussianTransport {
  linalg::SpectralMatrix H;
  int dim = 0;
};

GaussianTransport make_transport(linalg::SpectralMatrix H);

// Path covariance Sigma_t = (1-t)^2 I + t^2 H; shares H's eigenvectors,
// eigenvalues sigma_i(t) = (1-t)^2 + t^2 lambda_i. t must lie in [0, 1].
linalg::SpectralMatrix sigma_t(const GaussianTransport& m, double t);

// Eigenvalues sigma_i(t) in the same (ascending-in-lambda) order as H.
Eigen::VectorXd sigma_eigenvalues(const GaussianTransport& m, double t);

// Score of the path marginal: -Sigma_t^{-1} x.
Eigen::VectorXd analytic_score(const GaussianTransport& m, double t,
                               const Eigen::VectorXd& x);

// The optimal linear velocity A*(t) = (tH - (1-t)I) Sigma_t^{-1}, i.e. the
// matrix solving the population regression of v* onto linear fields.
Eigen::MatrixXd optimal_velocity_matrix(const GaussianTransport& m, double t);

// (t, kappa(Sigma_t)) over a grid, computed from the eigenvalue formula
// kappa = ((1-t)^2 + t^2 lambda_max) / ((1-t)^2 + t^2 lambda_min).
std::vector<std::pair<double, double>> condition_trajectory(
    const GaussianTransport& m, const std::vector<double>& ts);

// Predicted iteration counts for full-batch GD at step size eta to reach
// relative error eps: exact form log(1/eps)/(-log|1 - 2 eta sigma_min|)
// (clamped to >= 1; the slowest mode's factor may be 0 or negative) and the
// small-step approximation log(1/eps)/(2 eta sigma_min).
struct IterationPrediction {
  double exact = 0.0;
  double approx = 0.0;
};
IterationPrediction predicted_gd_iterations(const GaussianTransport& m,
                                            double t, double eta, double eps);

// Trace of a deterministic (population-gradient) GD run.
// per_mode_errors(i, k): signed error in eigen-direction i at iteration k,
// recorded as the first row of (A_k - A*) U; it obeys the exact recursion
// e_{i,k+1} = (1 - 2 eta sigma_i) e_{i,k}. frobenius_errors[k] = ||A_k - A*||_F.
struct GdTrace {
  double eta = 0.0;
  double t = 0.0;
  Eigen::MatrixXd per_mode_errors;   // d x (steps+1)
  Eigen::VectorXd frobenius_errors;  // steps+1
  Eigen::VectorXd sigma;             // sigma_i used by the run (ascending)
};

// Full-batch GD A_{k+1} = A_k - 2 eta (A_k Sigma_t - C), C = tH - (1-t)I.
// Divergent runs are recorded, not raised (errors may overflow to inf).
GdTrace gd_simulate(const GaussianTransport& m, double t, double eta,
                    int steps, const Eigen::MatrixXd& A0);

// Shared core: population GD on L(A) = E||A x - y||^2 with x-covariance
// Sigma and optimum Astar, starting from A0. Used by the Gaussian and
// mixture labs alike.
GdTrace run_matrix_gd(const linalg::SpectralMatrix& Sigma,
                      const Eigen::MatrixXd& Astar, const Eigen::MatrixXd& A0,
                      double eta, int steps, double t_tag);

// Trace of a single-sample SGD run.
// per_mode_variance(i, w): variance of e_i within trailing window w (the
// trailing 50% of iterations split into 10 equal blocks, block mean removed).
// noise_scale_estimates[i]: mean-over-windows of Var(e_i) * sigma_i / eta,
// the constancy diagnostic suggested by the steady-state heuristic.
struct SgdTrace {
  double eta = 0.0;
  double t = 0.0;
  Eigen::MatrixXd per_mode_variance;  // d x 10
  Eigen::VectorXd noise_scale_estimates;
  Eigen::VectorXd sigma;
  Eigen::VectorXd mean_sq_error;  // per-mode mean of e_i^2 over the tail
};

// Single-sample SGD A_{m+1} = A_m - 2 eta (A_m x_t - y) x_t^T with fresh
// draws x0 ~ N(0, I), x1 ~ N(0, H), y = x1 - x0, starting from A0 = 0.
// Requires 0 < eta < 1/sigma_max(t) and steps >= 1000.
SgdTrace sgd_simulate(const GaussianTransport& m, double t, double eta,
                      long steps, std::uint64_t seed);

// Exact stationary per-mode variances of the SGD error (averaged over
// rows), from the stationary-covariance fixed point of the update. This is
// the independent oracle the unit tests freeze sgd_simulate against.
Eigen::VectorXd sgd_stationary_variance(const GaussianTransport& m, double t,
                                        double eta);

// Step-size policies for the plain-vs-whitened comparison. Named by what
// they compute from the problem's top curvature:
//   half_inverse_lambda_max: eta = 1/(2 lambda_max)  (strictly stable; the
//     whitened problem gets eta = 1/2 and converges in one step)
//   inverse_lambda_max: eta = 1/lambda_max  (stability boundary; the top
//     mode's factor is -1 and plain GD cannot converge -- kept for
//     boundary experiments)
enum class EtaRule { half_inverse_lambda_max, inverse_lambda_max };

struct Theorem1Result {
  long k_plain = 0;
  long k_whitened = 0;
  double eta_plain = 0.0;
  double eta_whitened = 0.0;
};

// Population GD on L(A) = E||A x - y||^2 with y = x (so A* = I), run once
// with x-covariance Sigma and once on the whitened variable
// x~ = Sigma^{-1/2} x; returns iterations until ||A_k - A*||_F falls below
// eps relative to the initial error (A0 = 0).
Theorem1Result theorem1_experiment(const linalg::SpectralMatrix& Sigma,
                                   EtaRule rule, double eps);

}  // namespace fmlab::gauss
