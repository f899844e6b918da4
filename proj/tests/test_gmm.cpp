// Zero-mean Gaussian-mixture transport: posterior gating, mixture score and
// velocity, per-component whitening, and the gated regression dynamics.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "fmlab/errors.hpp"
#include "fmlab/gaussian_transport.hpp"
#include "fmlab/linalg.hpp"
#include "fmlab/mixture_transport.hpp"
#include "fmlab/rng.hpp"

using namespace fmlab;
using gmm::ZeroMeanGmm;
using linalg::SpectralMatrix;

namespace {

constexpr double kTwoPi = 6.2831853071795864769;

Eigen::MatrixXd rotation2(double angle) {
  Eigen::MatrixXd R(2, 2);
  R << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return R;
}

SpectralMatrix spd2(double l1, double l2, double angle) {
  return linalg::spectral_from_parts(Eigen::Vector2d(l1, l2),
                                     rotation2(angle));
}

ZeroMeanGmm two_component() {
  std::vector<SpectralMatrix> comps = {spd2(1.0, 100.0, 0.0),
                                       spd2(1.0, 100.0, 0.6)};
  return gmm::make_gmm(Eigen::Vector2d(0.5, 0.5), comps);
}

// Density of N(0, S) evaluated the pedestrian way (dense inverse and
// determinant), as an independent cross-check of the log-space code.
double dense_gaussian_pdf(const Eigen::MatrixXd& S, const Eigen::VectorXd& x) {
  const int d = x.size();
  const double quad = x.dot(S.inverse() * x);
  return std::exp(-0.5 * quad) /
         std::sqrt(std::pow(kTwoPi, d) * S.determinant());
}

}  // namespace

TEST_CASE("make_gmm validates weights and component shapes") {
  std::vector<SpectralMatrix> comps = {spd2(1.0, 2.0, 0.0),
                                       spd2(1.0, 2.0, 0.3)};
  CHECK_THROWS_AS(gmm::make_gmm(Eigen::Vector2d(0.7, 0.7), comps),
                  DomainError);
  CHECK_THROWS_AS(gmm::make_gmm(Eigen::Vector2d(-0.2, 1.2), comps),
                  DomainError);
  std::vector<SpectralMatrix> bad = {
      spd2(1.0, 2.0, 0.0),
      linalg::spectral_from_parts(Eigen::Vector3d(1.0, 1.0, 1.0),
                                  Eigen::MatrixXd::Identity(3, 3))};
  CHECK_THROWS_AS(gmm::make_gmm(Eigen::Vector2d(0.5, 0.5), bad),
                  DimensionError);
  std::vector<SpectralMatrix> nonpd = {
      spd2(1.0, 2.0, 0.0),
      linalg::spectral_from_parts(Eigen::Vector2d(0.0, 1.0),
                                  Eigen::MatrixXd::Identity(2, 2))};
  CHECK_THROWS_AS(gmm::make_gmm(Eigen::Vector2d(0.5, 0.5), nonpd),
                  DefinitenessError);
}

TEST_CASE("component path covariance matches the per-mode formula") {
  ZeroMeanGmm g = two_component();
  for (double t : {0.1, 0.5, 0.9}) {
    for (int k = 0; k < 2; ++k) {
      SpectralMatrix St = gmm::component_sigma_t(g, k, t);
      for (int i = 0; i < 2; ++i) {
        const double want =
            (1 - t) * (1 - t) + t * t * g.components[k].eigvals[i];
        CHECK(St.eigvals[i] == doctest::Approx(want).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("posterior weights match dense Bayes and sum to one") {
  ZeroMeanGmm g = two_component();
  Rng r(3, "x");
  for (double t : {0.3, 0.8}) {
    for (int rep = 0; rep < 10; ++rep) {
      Eigen::VectorXd x = 3.0 * r.normal_vec(2);
      Eigen::VectorXd w = gmm::posterior_weights(g, t, x);
      CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(w.minCoeff() >= 0.0);
      double p0 = 0.5 * dense_gaussian_pdf(
                            gmm::component_sigma_t(g, 0, t).entries, x);
      double p1 = 0.5 * dense_gaussian_pdf(
                            gmm::component_sigma_t(g, 1, t).entries, x);
      CHECK(w[0] == doctest::Approx(p0 / (p0 + p1)).epsilon(1e-10));
    }
  }
}

TEST_CASE("posterior gating saturates far along a dominant direction") {
  // Component 0 is wide along x, component 1 wide along y.
  std::vector<SpectralMatrix> comps = {
      linalg::sym_eig(Eigen::Vector2d(100.0, 1.0).asDiagonal().toDenseMatrix()),
      linalg::sym_eig(Eigen::Vector2d(1.0, 100.0).asDiagonal().toDenseMatrix())};
  ZeroMeanGmm g = gmm::make_gmm(Eigen::Vector2d(0.5, 0.5), comps);
  Eigen::VectorXd far_x(2);
  far_x << 15.0, 0.0;
  Eigen::VectorXd w = gmm::posterior_weights(g, 0.95, far_x);
  CHECK(w[0] > 0.999);
}

TEST_CASE("mixture log-density matches the dense two-term sum") {
  ZeroMeanGmm g = two_component();
  Rng r(8, "x");
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd x = 2.0 * r.normal_vec(2);
    const double dense =
        0.5 * dense_gaussian_pdf(gmm::component_sigma_t(g, 0, 0.6).entries,
                                 x) +
        0.5 * dense_gaussian_pdf(gmm::component_sigma_t(g, 1, 0.6).entries, x);
    CHECK(gmm::mixture_log_density(g, 0.6, x) ==
          doctest::Approx(std::log(dense)).epsilon(1e-10));
  }
}

TEST_CASE("mixture score is the gradient of the mixture log-density") {
  ZeroMeanGmm g = two_component();
  Rng r(11, "x");
  const double h = 1e-5;
  for (double t : {0.2, 0.7}) {
    for (int rep = 0; rep < 6; ++rep) {
      Eigen::VectorXd x = 2.0 * r.normal_vec(2);
      Eigen::VectorXd s = gmm::mixture_score(g, t, x);
      for (int i = 0; i < 2; ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (gmm::mixture_log_density(g, t, xp) -
                           gmm::mixture_log_density(g, t, xm)) /
                          (2 * h);
        CHECK(s[i] == doctest::Approx(fd).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("single-component mixture reduces to the Gaussian transport") {
  SpectralMatrix H = spd2(2.0, 30.0, 0.4);
  std::vector<SpectralMatrix> comps = {H};
  ZeroMeanGmm g = gmm::make_gmm(Eigen::VectorXd::Ones(1), comps);
  gauss::GaussianTransport m = gauss::make_transport(H);
  Rng r(5, "x");
  for (double t : {0.25, 0.75}) {
    Eigen::MatrixXd Astar = gauss::optimal_velocity_matrix(m, t);
    for (int rep = 0; rep < 5; ++rep) {
      Eigen::VectorXd x = 2.0 * r.normal_vec(2);
      CHECK((gmm::posterior_weights(g, t, x) - Eigen::VectorXd::Ones(1))
                .norm() < 1e-14);
      CHECK((gmm::mixture_score(g, t, x) - gauss::analytic_score(m, t, x))
                .norm() < 1e-11);
      CHECK((gmm::mixture_velocity(g, t, x) - Astar * x).norm() < 1e-11);
    }
  }
}

TEST_CASE("mixture velocity is the conditional-mean minimizer of CFM loss") {
  ZeroMeanGmm g = two_component();
  const double t = 0.6;
  const long n = 40000;
  Rng r(21, "mc");
  std::vector<Eigen::VectorXd> roots;
  for (const auto& c : g.components)
    roots.push_back(c.eigvals.array().sqrt().matrix());

  double loss_opt = 0.0;
  double loss_scale = 0.0, loss_shift = 0.0;  // perturbed fields
  double ortho = 0.0, ortho_sq = 0.0;         // residual . v(x_t)
  for (long i = 0; i < n; ++i) {
    const int k = r.uniform() < 0.5 ? 0 : 1;
    Eigen::VectorXd z = r.normal_vec(2);
    Eigen::VectorXd x1 =
        g.components[k].eigvecs * (roots[k].array() * z.array()).matrix();
    Eigen::VectorXd x0 = r.normal_vec(2);
    Eigen::VectorXd xt = (1 - t) * x0 + t * x1;
    Eigen::VectorXd target = x1 - x0;
    Eigen::VectorXd v = gmm::mixture_velocity(g, t, xt);
    loss_opt += (v - target).squaredNorm();
    loss_scale += (1.05 * v - target).squaredNorm();
    Eigen::VectorXd shifted = v + Eigen::Vector2d(0.3, -0.2);
    loss_shift += (shifted - target).squaredNorm();
    const double dot = (v - target).dot(v);
    ortho += dot;
    ortho_sq += dot * dot;
  }
  loss_opt /= n;
  loss_scale /= n;
  loss_shift /= n;
  ortho /= n;
  const double ortho_se =
      std::sqrt((ortho_sq / n - ortho * ortho) / static_cast<double>(n));
  // orthogonality of the residual to any function of x_t, here v itself
  CHECK(std::abs(ortho) < 4.0 * ortho_se + 1e-9);
  CHECK(loss_opt < loss_scale);
  CHECK(loss_opt < loss_shift);
}

TEST_CASE("whitening transforms flatten each component exactly") {
  ZeroMeanGmm g = two_component();
  gmm::WhitenedGmm w = gmm::whitening_transforms(g);
  REQUIRE(w.transforms.size() == 2);
  for (int k = 0; k < 2; ++k) {
    const Eigen::MatrixXd& T = w.transforms[k];
    CHECK((T * g.components[k].entries * T.transpose() -
           Eigen::MatrixXd::Identity(2, 2))
              .norm() < 1e-12);
    CHECK((w.inverse_transforms[k] * T - Eigen::MatrixXd::Identity(2, 2))
              .norm() < 1e-12);
  }
}

TEST_CASE("whitened path covariance has condition number one at every t") {
  ZeroMeanGmm g = two_component();
  gmm::WhitenedGmm w = gmm::whitening_transforms(g);
  for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double iso = (1 - t) * (1 - t) + t * t;
    for (int k = 0; k < 2; ++k) {
      // whitened target covariance T H T^T = I, so the path covariance is
      // (1-t)^2 I + t^2 I elementwise
      Eigen::MatrixXd Ht =
          w.transforms[k] * g.components[k].entries *
          w.transforms[k].transpose();
      Eigen::MatrixXd St = (1 - t) * (1 - t) *
                               Eigen::MatrixXd::Identity(2, 2) +
                           t * t * Ht;
      SpectralMatrix Ss = linalg::sym_eig(St);
      CHECK(linalg::cond_number(Ss) == doctest::Approx(1.0).epsilon(1e-10));
      CHECK(Ss.eigvals.maxCoeff() == doctest::Approx(iso).epsilon(1e-10));
    }
  }
}

TEST_CASE("whitened optimal matrix is the scalar formula times identity") {
  for (double t : {0.1, 0.5, 0.7}) {
    Eigen::MatrixXd W = gmm::whitened_optimal_matrix(t, 3);
    const double want = (2 * t - 1) / ((1 - t) * (1 - t) + t * t);
    CHECK((W - want * Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-14);
  }
  CHECK(gmm::whitened_optimal_matrix(0.7, 2)(0, 0) ==
        doctest::Approx(0.68965517241379304).epsilon(1e-14));
}

TEST_CASE("path-whitened optimum pulls back to the component optimum") {
  // Whitening the whole path (both endpoints through T_k) gives a diagonal
  // optimum whose conjugation recovers A*_k; the isotropic shared optimum
  // does not. Both facts matter: the first is what makes per-component
  // recovery work, the second is why gating cannot be skipped.
  ZeroMeanGmm g = two_component();
  gmm::WhitenedGmm w = gmm::whitening_transforms(g);
  gauss::GaussianTransport m1 = gauss::make_transport(g.components[1]);
  for (double t : {0.2, 0.5, 0.8}) {
    Eigen::MatrixXd Atil = gmm::path_whitened_optimal_matrix(g.components[1], t);
    Eigen::MatrixXd pulled =
        w.inverse_transforms[1] * Atil * w.transforms[1];
    Eigen::MatrixXd Astar = gauss::optimal_velocity_matrix(m1, t);
    CHECK((pulled - Astar).norm() < 1e-12 * (1.0 + Astar.norm()));

    Eigen::MatrixXd iso_pulled = w.inverse_transforms[1] *
                                 gmm::whitened_optimal_matrix(t, 2) *
                                 w.transforms[1];
    if (t != 0.5) CHECK((iso_pulled - Astar).norm() > 0.05);
  }
}

TEST_CASE("gated whitened GD contracts all components identically") {
  ZeroMeanGmm g = two_component();
  const double t = 0.3;
  const double iso = (1 - t) * (1 - t) + t * t;
  const double eta = 0.5 / iso;  // deadbeat: factor 1 - 2 eta iso = 0
  auto traces = gmm::gated_gd_simulate(g, t, eta, 5, true);
  REQUIRE(traces.size() == 2);
  CHECK((traces[0].frobenius_errors - traces[1].frobenius_errors)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK(traces[0].frobenius_errors[0] > 0.0);
  CHECK(traces[0].frobenius_errors[1] < 1e-14);
}

TEST_CASE("gated plain GD is governed by the globally slowest mode") {
  std::vector<SpectralMatrix> comps = {spd2(1.0, 100.0, 0.0),
                                       spd2(0.5, 100.0, 0.6)};
  ZeroMeanGmm g = gmm::make_gmm(Eigen::Vector2d(0.5, 0.5), comps);
  const double t = 0.3;
  gmm::SlowestMode sm = gmm::slowest_mode(g, t);
  CHECK(sm.component == 1);
  CHECK(sm.mode == 0);
  CHECK(sm.sigma == doctest::Approx(0.49 + 0.09 * 0.5).epsilon(1e-14));

  double smax = 0.0;
  for (int k = 0; k < 2; ++k)
    smax = std::max(smax, gmm::component_sigma_t(g, k, t).eigvals.maxCoeff());
  const double eta = 0.5 / smax;
  auto traces = gmm::gated_gd_simulate(g, t, eta, 400, false);
  // late decay rate of the slowest component trace matches its factor
  const double factor = 1.0 - 2.0 * eta * sm.sigma;
  const double measured = traces[sm.component].frobenius_errors[400] /
                          traces[sm.component].frobenius_errors[399];
  CHECK(measured == doctest::Approx(factor).epsilon(1e-6));
  // and the other component decays strictly faster at the same step count
  CHECK(traces[0].frobenius_errors[400] / traces[0].frobenius_errors[0] <
        traces[1].frobenius_errors[400] / traces[1].frobenius_errors[0]);
}

TEST_CASE("per-mode factors in gated plain GD match the sigma spectrum") {
  ZeroMeanGmm g = two_component();
  const double t = 0.4;
  double smax = 0.0;
  for (int k = 0; k < 2; ++k)
    smax = std::max(smax, gmm::component_sigma_t(g, k, t).eigvals.maxCoeff());
  const double eta = 0.4 / smax;
  auto traces = gmm::gated_gd_simulate(g, t, eta, 50, false);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd sig = gmm::component_sigma_t(g, k, t).eigvals;
    for (int i = 0; i < 2; ++i) {
      const double factor = 1.0 - 2.0 * eta * sig[i];
      CHECK(traces[k].per_mode_errors(i, 50) ==
            doctest::Approx(traces[k].per_mode_errors(i, 0) *
                            std::pow(factor, 50))
                .epsilon(1e-11));
    }
  }
}

TEST_CASE("gated_gd_simulate validates t and eta") {
  ZeroMeanGmm g = two_component();
  CHECK_THROWS_AS(gmm::gated_gd_simulate(g, 1.5, 0.1, 10, false),
                  DomainError);
  CHECK_THROWS_AS(gmm::gated_gd_simulate(g, 0.5, -0.1, 10, false),
                  DomainError);
}
