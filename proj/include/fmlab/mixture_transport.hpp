#pragma once

#include <vector>

#include <Eigen/Core>

#include "fmlab/gaussian_transport.hpp"
#include "fmlab/linalg.hpp"

namespace fmlab::gmm {

// Zero-mean Gaussian mixture target: x1 ~ sum_k pi_k N(0, H_k).
// Nonzero means are out of scope and rejected at construction.
struct ZeroMeanGmm {
  Eigen::VectorXd weights;                       // pi_k, sum 1
  std::vector<linalg::SpectralMatrix> components;  // H_k, each PD
  int dim = 0;
};

ZeroMeanGmm make_gmm(const Eigen::VectorXd& weights,
                     std::vector<linalg::SpectralMatrix> components);

// Path covariance of component k: Sigma_{t,k} = (1-t)^2 I + t^2 H_k.
linalg::SpectralMatrix component_sigma_t(const ZeroMeanGmm& g, int k, double t);

// Posterior component weights w_k(x) proportional to pi_k N(x; 0, Sigma_{t,k}),
// computed in log-space with max-subtraction.
Eigen::VectorXd posterior_weights(const ZeroMeanGmm& g, double t,
                                  const Eigen::VectorXd& x);

// Score of the mixture marginal: -sum_k w_k(x) Sigma_{t,k}^{-1} x.
Eigen::VectorXd mixture_score(const ZeroMeanGmm& g, double t,
                              const Eigen::VectorXd& x);

// Log-density of the mixture marginal at time t (used by score tests).
double mixture_log_density(const ZeroMeanGmm& g, double t,
                           const Eigen::VectorXd& x);

// Optimal mixture velocity: sum_k w_k(x) A*_k(t) x.
Eigen::VectorXd mixture_velocity(const ZeroMeanGmm& g, double t,
                                 const Eigen::VectorXd& x);

// Per-component whitening transforms T_k = Lambda_k^{-1/2} U_k^T with their
// exact inverses U_k Lambda_k^{1/2}.
struct WhitenedGmm {
  std::vector<Eigen::MatrixXd> transforms;
  std::vector<Eigen::MatrixXd> inverse_transforms;
};

WhitenedGmm whitening_transforms(const ZeroMeanGmm& g);

// The optimal velocity matrix of a whitened component: every component
// shares ((2t-1) / ((1-t)^2 + t^2)) * I.
Eigen::MatrixXd whitened_optimal_matrix(double t, int dim);

// Optimal velocity matrix of component k when the WHOLE path (both
// endpoints) is mapped through T_k. Its pullback T_k^{-1} A~ T_k equals
// A*_k(t) exactly, which is what makes per-component recovery of the
// original-space velocity possible. (The isotropic whitened_optimal_matrix
// conjugates to a scalar field and does not recover A*_k; see tests.)
Eigen::MatrixXd path_whitened_optimal_matrix(const linalg::SpectralMatrix& Hk,
                                             double t);

// K independent population-GD recursions under perfect gating. When
// whitened, every component uses Sigma~ = ((1-t)^2 + t^2) I and the shared
// isotropic optimum, so all components contract identically.
std::vector<gauss::GdTrace> gated_gd_simulate(const ZeroMeanGmm& g, double t,
                                              double eta, int steps,
                                              bool whitened);

// The globally slowest mode under perfect gating: min over (k, i) of
// sigma_{k,i}(t). Returns {component, mode, sigma}.
struct SlowestMode {
  int component = 0;
  int mode = 0;
  double sigma = 0.0;
};
SlowestMode slowest_mode(const ZeroMeanGmm& g, double t);

}  // namespace fmlab::gmm
