#include "fmlab/mixture_transport.hpp"

#include <cmath>
#include <limits>

namespace fmlab::gmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_t(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("t must lie in [0, 1]");
}

void check_component(const ZeroMeanGmm& g, int k) {
  if (k < 0 || k >= static_cast<int>(g.components.size()))
    throw DimensionError("component index out of range");
}

// Log-density of N(0, Sigma_{t,k}) at x via the shared eigenbasis of H_k.
double component_log_density(const ZeroMeanGmm& g, int k, double t,
                             const Eigen::VectorXd& x) {
  const auto& H = g.components[k];
  const double c2 = (1.0 - t) * (1.0 - t);
  const double t2 = t * t;
  Eigen::VectorXd sig = (c2 + t2 * H.eigvals.array()).matrix();
  Eigen::VectorXd w = H.eigvecs.transpose() * x;
  const double quad = (w.array().square() / sig.array()).sum();
  const double logdet = sig.array().log().sum();
  return -0.5 * (quad + logdet + g.dim * kLog2Pi);
}

}  // namespace

ZeroMeanGmm make_gmm(const Eigen::VectorXd& weights,
                     std::vector<linalg::SpectralMatrix> components) {
  const int K = static_cast<int>(weights.size());
  if (K < 1 || static_cast<int>(components.size()) != K)
    throw DimensionError("make_gmm: weights/components count mismatch");
  if (weights.minCoeff() <= 0.0)
    throw DomainError("make_gmm: all mixture weights must be > 0");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw DomainError("make_gmm: mixture weights must sum to 1");
  const int d = components[0].dim;
  for (const auto& H : components) {
    if (H.dim != d) throw DimensionError("make_gmm: components must share dim");
    if (!H.positive_definite())
      throw DefinitenessError("make_gmm: every component must be PD");
  }
  ZeroMeanGmm g;
  g.weights = weights;
  g.components = std::move(components);
  g.dim = d;
  return g;
}

linalg::SpectralMatrix component_sigma_t(const ZeroMeanGmm& g, int k,
                                         double t) {
  check_component(g, k);
  check_t(t);
  const auto& H = g.components[k];
  const double c2 = (1.0 - t) * (1.0 - t);
  const double t2 = t * t;
  Eigen::VectorXd vals = (c2 + t2 * H.eigvals.array()).matrix();
  return linalg::spectral_from_parts(vals, H.eigvecs);
}

Eigen::VectorXd posterior_weights(const ZeroMeanGmm& g, double t,
                                  const Eigen::VectorXd& x) {
  check_t(t);
  if (x.size() != g.dim) throw DimensionError("posterior_weights: wrong x dim");
  const int K = static_cast<int>(g.components.size());
  Eigen::VectorXd logw(K);
  for (int k = 0; k < K; ++k)
    logw[k] = std::log(g.weights[k]) + component_log_density(g, k, t, x);
  const double m = logw.maxCoeff();
  Eigen::VectorXd w = (logw.array() - m).exp();
  return w / w.sum();
}

double mixture_log_density(const ZeroMeanGmm& g, double t,
                           const Eigen::VectorXd& x) {
  check_t(t);
  const int K = static_cast<int>(g.components.size());
  Eigen::VectorXd logw(K);
  for (int k = 0; k < K; ++k)
    logw[k] = std::log(g.weights[k]) + component_log_density(g, k, t, x);
  const double m = logw.maxCoeff();
  return m + std::log((logw.array() - m).exp().sum());
}

Eigen::VectorXd mixture_score(const ZeroMeanGmm& g, double t,
                              const Eigen::VectorXd& x) {
  check_t(t);
  if (x.size() != g.dim) throw DimensionError("mixture_score: wrong x dim");
  Eigen::VectorXd w = posterior_weights(g, t, x);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(g.dim);
  const double c2 = (1.0 - t) * (1.0 - t);
  const double t2 = t * t;
  for (int k = 0; k < static_cast<int>(g.components.size()); ++k) {
    const auto& H = g.components[k];
    Eigen::VectorXd sig = (c2 + t2 * H.eigvals.array()).matrix();
    Eigen::VectorXd m = H.eigvecs.transpose() * x;
    m.array() /= sig.array();
    out -= w[k] * (H.eigvecs * m);
  }
  return out;
}

Eigen::VectorXd mixture_velocity(const ZeroMeanGmm& g, double t,
                                 const Eigen::VectorXd& x) {
  check_t(t);
  if (x.size() != g.dim) throw DimensionError("mixture_velocity: wrong x dim");
  Eigen::VectorXd w = posterior_weights(g, t, x);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(g.dim);
  const double c2 = (1.0 - t) * (1.0 - t);
  const double t2 = t * t;
  for (int k = 0; k < static_cast<int>(g.components.size()); ++k) {
    const auto& H = g.components[k];
    Eigen::VectorXd sig = (c2 + t2 * H.eigvals.array()).matrix();
    Eigen::VectorXd a =
        (t * H.eigvals.array() - (1.0 - t)) / sig.array();
    Eigen::VectorXd m = H.eigvecs.transpose() * x;
    out += w[k] * (H.eigvecs * (a.array() * m.array()).matrix());
  }
  return out;
}

WhitenedGmm whitening_transforms(const ZeroMeanGmm& g) {
  WhitenedGmm wg;
  wg.transforms.reserve(g.components.size());
  wg.inverse_transforms.reserve(g.components.size());
  for (const auto& H : g.components) {
    if (!H.positive_definite())
      throw DefinitenessError("whitening_transforms: component not PD");
    Eigen::VectorXd inv_roots = H.eigvals.array().rsqrt();
    Eigen::VectorXd roots = H.eigvals.array().sqrt();
    // T_k = Lambda^{-1/2} U^T, T_k^{-1} = U Lambda^{1/2}.
    wg.transforms.push_back(inv_roots.asDiagonal() * H.eigvecs.transpose());
    wg.inverse_transforms.push_back(H.eigvecs * roots.asDiagonal());
  }
  return wg;
}

Eigen::MatrixXd whitened_optimal_matrix(double t, int dim) {
  check_t(t);
  if (dim < 1) throw DimensionError("whitened_optimal_matrix: dim must be >= 1");
  const double denom = (1.0 - t) * (1.0 - t) + t * t;
  return ((2.0 * t - 1.0) / denom) * Eigen::MatrixXd::Identity(dim, dim);
}

Eigen::MatrixXd path_whitened_optimal_matrix(const linalg::SpectralMatrix& Hk,
                                             double t) {
  check_t(t);
  if (!Hk.positive_definite())
    throw DefinitenessError("path_whitened_optimal_matrix: component not PD");
  // With the whole path mapped through T = Lambda^{-1/2} U^T, the base
  // becomes N(0, Lambda^{-1}) and the target N(0, I); per eigen-direction
  // the optimum is (t - (1-t)/lambda) / ((1-t)^2/lambda + t^2), diagonal in
  // the transformed coordinates.
  const double c1 = 1.0 - t;
  Eigen::VectorXd a =
      ((t - c1 / Hk.eigvals.array()) /
       (c1 * c1 / Hk.eigvals.array() + t * t))
          .matrix();
  return a.asDiagonal();
}

std::vector<gauss::GdTrace> gated_gd_simulate(const ZeroMeanGmm& g, double t,
                                              double eta, int steps,
                                              bool whitened) {
  check_t(t);
  if (!(eta > 0.0)) throw DomainError("gated_gd_simulate: eta must be > 0");
  std::vector<gauss::GdTrace> traces;
  traces.reserve(g.components.size());
  const int d = g.dim;
  const Eigen::MatrixXd A0 = Eigen::MatrixXd::Zero(d, d);
  for (int k = 0; k < static_cast<int>(g.components.size()); ++k) {
    if (whitened) {
      const double iso = (1.0 - t) * (1.0 - t) + t * t;
      linalg::SpectralMatrix Sig = linalg::spectral_from_parts(
          Eigen::VectorXd::Constant(d, iso), Eigen::MatrixXd::Identity(d, d));
      traces.push_back(gauss::run_matrix_gd(
          Sig, whitened_optimal_matrix(t, d), A0, eta, steps, t));
    } else {
      linalg::SpectralMatrix Sig = component_sigma_t(g, k, t);
      const auto& H = g.components[k];
      Eigen::VectorXd a =
          ((t * H.eigvals.array() - (1.0 - t)) / Sig.eigvals.array()).matrix();
      Eigen::MatrixXd Astar =
          H.eigvecs * a.asDiagonal() * H.eigvecs.transpose();
      traces.push_back(gauss::run_matrix_gd(Sig, Astar, A0, eta, steps, t));
    }
  }
  return traces;
}

SlowestMode slowest_mode(const ZeroMeanGmm& g, double t) {
  check_t(t);
  SlowestMode best;
  best.sigma = std::numeric_limits<double>::infinity();
  const double c2 = (1.0 - t) * (1.0 - t);
  const double t2 = t * t;
  for (int k = 0; k < static_cast<int>(g.components.size()); ++k) {
    const auto& lam = g.components[k].eigvals;
    for (int i = 0; i < g.dim; ++i) {
      const double s = c2 + t2 * lam[i];
      if (s < best.sigma) best = {k, i, s};
    }
  }
  return best;
}

}  // namespace fmlab::gmm
