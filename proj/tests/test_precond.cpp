// Preconditioners: exact whitening algebra, coupling-flow invertibility and
// log-determinants, likelihood training, and the pushforward wrapper.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "fmlab/datasets.hpp"
#include "fmlab/errors.hpp"
#include "fmlab/flow_matching.hpp"
#include "fmlab/linalg.hpp"
#include "fmlab/preconditioner.hpp"
#include "fmlab/rng.hpp"

using namespace fmlab;
using precond::CouplingFlow;
using precond::NfArch;
using precond::Preconditioner;

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

CouplingFlow perturbed_flow(int dim, int n_layers, std::uint64_t seed) {
  NfArch arch;
  arch.n_layers = n_layers;
  arch.hidden = {8};
  CouplingFlow f = precond::make_coupling_flow(dim, arch, seed);
  Rng r(seed, "perturb");
  for (auto& layer : f.layers) {
    for (long i = 0; i < layer.scale_net.params.size(); ++i)
      layer.scale_net.params[i] += 0.3 * r.normal();
    for (long i = 0; i < layer.shift_net.params.size(); ++i)
      layer.shift_net.params[i] += 0.3 * r.normal();
  }
  return f;
}

}  // namespace

TEST_CASE("identity preconditioner is the identity with zero log-det") {
  auto p = precond::identity_precond(3);
  CHECK(p->kind() == Preconditioner::Kind::identity);
  CHECK(p->dim() == 3);
  Rng r(1, "x");
  Eigen::VectorXd x = r.normal_vec(3);
  CHECK((p->forward(x) - x).norm() == 0.0);
  CHECK((p->inverse(x) - x).norm() == 0.0);
  REQUIRE(p->log_det(x).has_value());
  CHECK(*p->log_det(x) == 0.0);
  auto back = precond::precond_from_json(p->to_json());
  CHECK(back->kind() == Preconditioner::Kind::identity);
  CHECK(back->dim() == 3);
}

TEST_CASE("whitening on a hand-built cloud is the exact inverse square root") {
  // rows (+-2, 0), (0, +-4): uncentered second moment diag(2, 8)
  Eigen::MatrixXd P(4, 2);
  P << 2.0, 0.0, -2.0, 0.0, 0.0, 4.0, 0.0, -4.0;
  auto p = precond::whitening_from_data(P, 0.0);
  CHECK(p->kind() == Preconditioner::Kind::whitening);
  Eigen::VectorXd x(2);
  x << 1.0, 1.0;
  Eigen::VectorXd y = p->forward(x);
  CHECK(y[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-13));
  CHECK(y[1] == doctest::Approx(1.0 / std::sqrt(8.0)).epsilon(1e-13));
  CHECK((p->inverse(y) - x).norm() < 1e-12);
  REQUIRE(p->log_det(x).has_value());
  CHECK(*p->log_det(x) ==
        doctest::Approx(-0.5 * (std::log(2.0) + std::log(8.0)))
            .epsilon(1e-13));
  // log-det is constant for a linear map
  CHECK(*p->log_det(x) == *p->log_det(2.0 * x));
}

TEST_CASE("centered whitening removes the sample mean first") {
  Eigen::MatrixXd P(4, 2);
  P << 2.0, 0.0, -2.0, 0.0, 0.0, 4.0, 0.0, -4.0;
  Eigen::MatrixXd Q = P;
  Q.col(0).array() += 7.0;  // shifted cloud, same shape
  auto p = precond::whitening_from_data(Q, 0.0, /*centered=*/true);
  // the image of the (shifted) cloud is mean-free and white
  Eigen::MatrixXd Z = p->forward_batch(Q);
  CHECK(Z.colwise().mean().norm() < 1e-12);
  Eigen::MatrixXd C = linalg::sample_covariance(Z, true);
  CHECK((C - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-12);
}

TEST_CASE("whitening makes an elongated Gaussian sample white within 5%") {
  linalg::SpectralMatrix H = linalg::spectral_from_parts(
      Eigen::Vector2d(1.0, 100.0), Eigen::MatrixXd::Identity(2, 2));
  data::LabeledPoints pts = data::gaussian_sample(H, 20000, 31);
  auto p = precond::whitening_from_data(pts.points, 1e-6);
  Eigen::MatrixXd Z = p->forward_batch(pts.points);
  Eigen::MatrixXd C = linalg::sample_covariance(Z);
  CHECK((C - Eigen::MatrixXd::Identity(2, 2)).norm() < 0.05);
  // and the fitted map sends fresh points from the same law close to white
  data::LabeledPoints fresh = data::gaussian_sample(H, 20000, 77);
  Eigen::MatrixXd Zf = p->forward_batch(fresh.points);
  Eigen::MatrixXd Cf = linalg::sample_covariance(Zf);
  CHECK((Cf - Eigen::MatrixXd::Identity(2, 2)).norm() < 0.1);
}

TEST_CASE("whitening validates sample size, ridge, and definiteness") {
  CHECK_THROWS_AS(precond::whitening_from_data(Eigen::MatrixXd::Zero(2, 2), 0.0),
                  SampleSizeError);
  CHECK_THROWS_AS(
      precond::whitening_from_data(Eigen::MatrixXd::Random(10, 2), -1e-3),
      DomainError);
  CHECK_THROWS_AS(precond::whitening_from_data(Eigen::MatrixXd::Zero(10, 2), 0.0),
                  DefinitenessError);
  CHECK_NOTHROW(precond::whitening_from_data(Eigen::MatrixXd::Zero(10, 2), 0.5));
}

TEST_CASE("whitening round-trips through JSON with identical outputs") {
  linalg::SpectralMatrix H = linalg::spectral_from_parts(
      Eigen::Vector2d(1.0, 25.0), Eigen::MatrixXd::Identity(2, 2));
  data::LabeledPoints pts = data::gaussian_sample(H, 500, 5);
  auto p = precond::whitening_from_data(pts.points, 1e-6);
  auto back = precond::precond_from_json(p->to_json());
  Rng r(9, "probe");
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd x = r.normal_vec(2);
    CHECK((p->forward(x) - back->forward(x)).norm() == 0.0);
    CHECK((p->inverse(x) - back->inverse(x)).norm() == 0.0);
  }
}

TEST_CASE("coupling flow structure at d=2: alternating frozen halves") {
  NfArch arch;
  arch.n_layers = 4;
  arch.hidden = {8};
  CouplingFlow f = precond::make_coupling_flow(2, arch, 11);
  REQUIRE(f.layers.size() == 4);
  for (int l = 0; l < 4; ++l) {
    const auto& layer = f.layers[l];
    REQUIRE(layer.frozen_idx.size() == 1);
    REQUIRE(layer.active_idx.size() == 1);
    CHECK(layer.frozen_idx[0] == (l % 2 == 0 ? 0 : 1));
    CHECK(layer.active_idx[0] == (l % 2 == 0 ? 1 : 0));
    CHECK(layer.scale_net.input_dim() == 1);
    CHECK(layer.scale_net.output_dim() == 1);
  }
}

TEST_CASE("higher-dimensional layers partition the coordinates") {
  NfArch arch;
  arch.n_layers = 6;
  arch.hidden = {8};
  for (int d : {3, 5}) {
    CouplingFlow f = precond::make_coupling_flow(d, arch, 13);
    for (const auto& layer : f.layers) {
      std::vector<bool> seen(d, false);
      for (int i : layer.frozen_idx) seen[i] = true;
      for (int i : layer.active_idx) {
        CHECK_FALSE(seen[i]);
        seen[i] = true;
      }
      for (int i = 0; i < d; ++i) CHECK(seen[i]);
      CHECK(static_cast<int>(layer.frozen_idx.size()) == d / 2);
    }
  }
}

TEST_CASE("a freshly built flow is the identity map with zero log-det") {
  for (bool zero_init : {false, true}) {
    NfArch arch;
    arch.n_layers = 6;
    arch.hidden = {16, 16};
    arch.zero_init = zero_init;
    CouplingFlow f = precond::make_coupling_flow(2, arch, 21);
    Rng r(3, "x");
    for (int i = 0; i < 5; ++i) {
      Eigen::VectorXd x = r.normal_vec(2);
      precond::CouplingOut out = precond::coupling_forward(f, x);
      CHECK((out.y - x).norm() == 0.0);
      CHECK(out.log_det == 0.0);
    }
  }
}

TEST_CASE("make_coupling_flow validates dimension and layer count") {
  NfArch arch;
  CHECK_THROWS_AS(precond::make_coupling_flow(1, arch, 1), DimensionError);
  arch.n_layers = 3;
  CHECK_THROWS_AS(precond::make_coupling_flow(2, arch, 1), DomainError);
  arch.n_layers = 0;
  CHECK_THROWS_AS(precond::make_coupling_flow(2, arch, 1), DomainError);
}

TEST_CASE("a perturbed flow inverts exactly and batches consistently") {
  for (int d : {2, 4}) {
    CouplingFlow f = perturbed_flow(d, 6, 100 + d);
    Rng r(7, "pts");
    Eigen::MatrixXd X = r.normal_mat(16, d);
    precond::CouplingBatchOut out = precond::coupling_forward_batch(f, X);
    Eigen::MatrixXd back = precond::coupling_inverse_batch(f, out.Y);
    CHECK((back - X).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((out.Y - X).cwiseAbs().maxCoeff() > 0.01);  // genuinely non-trivial
    for (int i = 0; i < 16; ++i) {
      precond::CouplingOut single =
          precond::coupling_forward(f, X.row(i).transpose());
      // batched and single paths use different reduction orders
      CHECK((single.y - out.Y.row(i).transpose()).norm() < 1e-12);
      CHECK(single.log_det == doctest::Approx(out.log_det[i]).epsilon(1e-12));
      CHECK((precond::coupling_inverse(f, single.y) - X.row(i).transpose())
                .norm() < 1e-12);
    }
  }
}

TEST_CASE("the analytic log-det matches a finite-difference Jacobian") {
  CouplingFlow f = perturbed_flow(2, 6, 33);
  Rng r(4, "pts");
  const double h = 1e-6;
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd x = r.normal_vec(2);
    Eigen::Matrix2d J;
    for (int j = 0; j < 2; ++j) {
      Eigen::VectorXd xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      Eigen::VectorXd diff = (precond::coupling_forward(f, xp).y -
                              precond::coupling_forward(f, xm).y) /
                             (2 * h);
      J.col(j) = diff;
    }
    const double fd_logdet = std::log(std::abs(J.determinant()));
    const double got = precond::coupling_forward(f, x).log_det;
    CHECK(got == doctest::Approx(fd_logdet).epsilon(1e-5));
  }
}

TEST_CASE("scale clamping bounds the per-coordinate stretch") {
  CouplingFlow f = perturbed_flow(2, 2, 5);
  // blow up the scale net: the clamp must cap |S| at scale_clamp
  for (long i = 0; i < f.layers[0].scale_net.params.size(); ++i)
    f.layers[0].scale_net.params[i] = 50.0;
  Rng r(2, "x");
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd x = r.normal_vec(2);
    const double ld = precond::coupling_forward(f, x).log_det;
    // two layers, one active coordinate each: |log det| <= 2 * clamp
    CHECK(std::abs(ld) <= 2.0 * f.scale_clamp + 1e-12);
  }
}

TEST_CASE("nf_nll of the identity flow is the Gaussian energy plus constant") {
  NfArch arch;
  arch.zero_init = true;
  CouplingFlow f = precond::make_coupling_flow(2, arch, 3);
  Rng r(8, "pts");
  Eigen::MatrixXd X = r.normal_mat(4000, 2);
  const double direct = 0.5 * X.array().square().rowwise().sum().mean() +
                        kLog2Pi;  // (d/2) log 2pi with d = 2
  const double got = precond::nf_nll(f, X);
  CHECK(got == doctest::Approx(direct).epsilon(1e-12));
  // statistically: E[|x|^2]/2 = 1 for a standard normal, so ~ 1 + log(2 pi)
  CHECK(std::abs(got - 2.8378770664093454) < 0.05);
}

TEST_CASE("likelihood training beats the identity map on an elongated target") {
  // identity-map NLL on N(0, diag(1,100)) is (1 + 100)/2 + log(2 pi)
  const double identity_nll = 52.337877066409348;
  linalg::SpectralMatrix H = linalg::spectral_from_parts(
      Eigen::Vector2d(1.0, 100.0), Eigen::MatrixXd::Identity(2, 2));
  NfArch arch;
  arch.n_layers = 4;
  arch.hidden = {16};
  precond::NfHyper hyper;
  hyper.lr = 3e-3;
  hyper.batch = 128;
  hyper.seed = 19;
  precond::NfTrainer trainer(data::gaussian_sampler(H), 2, arch, hyper);
  trainer.run(500);
  const CouplingFlow& f = trainer.flow();
  REQUIRE(f.train_log.size() == 500);

  Rng hr(555, "heldout");
  Eigen::MatrixXd X = data::gaussian_sampler(H)(4000, hr);
  const double nll = precond::nf_nll(f, X);
  CAPTURE(nll);
  CHECK(nll < identity_nll - 1.0);
  // sanity floor: cannot beat the true differential entropy
  const double optimal_nll = 5.1404621594033912;  // 1 + log(2pi) + log(10)
  CHECK(nll > optimal_nll - 0.5);
}

TEST_CASE("nf training is bit-deterministic in the seed") {
  linalg::SpectralMatrix H = linalg::spectral_from_parts(
      Eigen::Vector2d(1.0, 9.0), Eigen::MatrixXd::Identity(2, 2));
  NfArch arch;
  arch.n_layers = 2;
  arch.hidden = {8};
  precond::NfHyper hyper;
  hyper.seed = 40;
  hyper.batch = 32;
  auto train = [&] {
    precond::NfTrainer tr(data::gaussian_sampler(H), 2, arch, hyper);
    tr.run(40);
    return std::move(tr).take();
  };
  CouplingFlow a = train();
  CouplingFlow b = train();
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK((a.layers[l].scale_net.params - b.layers[l].scale_net.params)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK((a.layers[l].shift_net.params - b.layers[l].shift_net.params)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  for (std::size_t i = 0; i < a.train_log.size(); ++i)
    CHECK(a.train_log[i].second == b.train_log[i].second);
}

TEST_CASE("coupling flows round-trip through JSON with identical outputs") {
  CouplingFlow f = perturbed_flow(2, 4, 71);
  f.train_log = {{0, 3.5}, {10, 2.5}};
  nlohmann::json doc = precond::coupling_to_json(f);
  CouplingFlow back = precond::coupling_from_json(doc);
  CHECK(back.dim == 2);
  CHECK(back.scale_clamp == f.scale_clamp);
  Rng r(3, "pts");
  for (int i = 0; i < 8; ++i) {
    Eigen::VectorXd x = r.normal_vec(2);
    precond::CouplingOut a = precond::coupling_forward(f, x);
    precond::CouplingOut b = precond::coupling_forward(back, x);
    CHECK((a.y - b.y).norm() == 0.0);
    CHECK(a.log_det == b.log_det);
  }
  // and through the preconditioner wrapper + dispatcher
  auto p = precond::nf_precond(f);
  CHECK(p->kind() == Preconditioner::Kind::normalizing_flow);
  auto pd = precond::precond_from_json(p->to_json());
  Eigen::VectorXd x = r.normal_vec(2);
  CHECK((pd->forward(x) - p->forward(x)).norm() == 0.0);
  CHECK((pd->inverse(p->forward(x)) - x).norm() < 1e-12);
}

TEST_CASE("pushforward of the zero field is the identity, log-det absent") {
  flow::TrainedField zf;
  zf.model = nn::make_zero_mlp({3, 4, 2}, nn::Activation::tanh_act);
  zf.data_dim = 2;
  auto p = precond::flow_pushforward_precond(zf, 16);
  CHECK(p->kind() == Preconditioner::Kind::flow_pushforward);
  CHECK(p->dim() == 2);
  Rng r(2, "x");
  Eigen::VectorXd x = r.normal_vec(2);
  CHECK((p->forward(x) - x).norm() == 0.0);
  CHECK((p->inverse(x) - x).norm() == 0.0);
  CHECK_FALSE(p->log_det(x).has_value());
  CHECK_THROWS_AS(precond::flow_pushforward_precond(zf, 0), DomainError);
}

TEST_CASE("pushforward forward/inverse round-trip on a trained field") {
  linalg::SpectralMatrix H = linalg::spectral_from_parts(
      Eigen::Vector2d(1.0, 16.0), Eigen::MatrixXd::Identity(2, 2));
  flow::TrainHyper hyper;
  hyper.seed = 23;
  hyper.batch = 64;
  flow::TrainedField f =
      flow::cfm_train(data::gaussian_sampler(H),
                      flow::Schedule{flow::ScheduleKind::linear}, 2, {16},
                      nn::Activation::tanh_act, hyper);
  auto p = precond::flow_pushforward_precond(f, 100);
  Rng r(6, "pts");
  Eigen::MatrixXd X = r.normal_mat(40, 2);
  Eigen::MatrixXd Z = p->forward_batch(X);
  Eigen::MatrixXd back = p->inverse_batch(Z);
  CHECK((back - X).cwiseAbs().maxCoeff() < 1e-3);
  // JSON round trip reproduces the map exactly
  auto pd = precond::precond_from_json(p->to_json());
  CHECK((pd->forward_batch(X) - Z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a converged low-capacity pushforward reduces the empirical spread") {
  // The elongated Gaussian has second-moment eigenvalues (1, 100); a
  // trained low-capacity field pushed backward must shrink that ratio.
  linalg::SpectralMatrix H = linalg::spectral_from_parts(
      Eigen::Vector2d(1.0, 100.0), Eigen::MatrixXd::Identity(2, 2));
  flow::TrainHyper hyper;
  hyper.seed = 29;
  hyper.batch = 128;
  hyper.steps = 3000;
  flow::TrainedField f =
      flow::cfm_train(data::gaussian_sampler(H),
                      flow::Schedule{flow::ScheduleKind::linear}, 2, {27},
                      nn::Activation::tanh_act, hyper);
  // budget check: genuinely low-capacity
  CHECK(f.model.param_count() <= 200);

  data::LabeledPoints pts = data::gaussian_sample(H, 4000, 91);
  auto p = precond::flow_pushforward_precond(f, 40);
  Eigen::MatrixXd Z = precond::precondition_dataset(*p, pts.points);
  const double kappa_raw =
      linalg::cond_number(linalg::sym_eig(linalg::sample_covariance(pts.points)));
  const double kappa_pre =
      linalg::cond_number(linalg::sym_eig(linalg::sample_covariance(Z)));
  CAPTURE(kappa_raw);
  CAPTURE(kappa_pre);
  CHECK(kappa_pre < kappa_raw);
}

TEST_CASE("precondition_dataset reports every failing row at once") {
  CouplingFlow f = perturbed_flow(2, 2, 44);
  auto p = precond::nf_precond(f);
  Eigen::MatrixXd X(4, 2);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  X << 0.0, 0.0, nan, 1.0, 1.0, 2.0, inf, 0.0;
  try {
    precond::precondition_dataset(*p, X);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("1") != std::string::npos);
    CHECK(msg.find("3") != std::string::npos);
  }
  // clean data passes through row-aligned
  Eigen::MatrixXd good = Eigen::MatrixXd::Random(5, 2);
  Eigen::MatrixXd out = precond::precondition_dataset(*p, good);
  for (int i = 0; i < 5; ++i)
    CHECK((out.row(i).transpose() - p->forward(good.row(i).transpose()))
              .norm() < 1e-12);
}

TEST_CASE("kind names are stable strings") {
  CHECK(precond::kind_to_string(Preconditioner::Kind::identity) == "identity");
  CHECK(precond::kind_to_string(Preconditioner::Kind::whitening) == "whitening");
  CHECK(precond::kind_to_string(Preconditioner::Kind::normalizing_flow) ==
        "normalizing_flow");
  CHECK(precond::kind_to_string(Preconditioner::Kind::flow_pushforward) ==
        "flow_pushforward");
}
