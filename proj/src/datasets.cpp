#include "fmlab/datasets.hpp"

#include <array>
#include <cmath>

#include "fmlab/io.hpp"
#include "fmlab/rng.hpp"

namespace fmlab::data {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::VectorXd gaussian_point(const linalg::SpectralMatrix& H,
                               const Eigen::VectorXd& roots, Rng& rng) {
  Eigen::VectorXd z(H.dim);
  for (int j = 0; j < H.dim; ++j) z[j] = rng.normal();
  return H.eigvecs * (roots.array() * z.array()).matrix();
}

// Black cells of the 4x4 tiling, lexicographic in (i, j).
constexpr std::array<std::pair<int, int>, 8> kBlackCells = {{
    {0, 0}, {0, 2}, {1, 1}, {1, 3}, {2, 0}, {2, 2}, {3, 1}, {3, 3},
}};

}  // namespace

LabeledPoints gaussian_sample(const linalg::SpectralMatrix& H, long n,
                              std::uint64_t seed) {
  if (n < 1) throw DomainError("gaussian_sample: n must be >= 1");
  if (!H.positive_definite())
    throw DefinitenessError("gaussian_sample: H must be positive definite");
  const Eigen::VectorXd roots = H.eigvals.array().sqrt().matrix();
  Rng rng(seed, "gaussian");
  LabeledPoints out;
  out.dim = H.dim;
  out.seed = seed;
  out.generator_id = "gaussian";
  out.points.resize(n, H.dim);
  for (long i = 0; i < n; ++i)
    out.points.row(i) = gaussian_point(H, roots, rng).transpose();
  return out;
}

LabeledPoints gmm_sample(const gmm::ZeroMeanGmm& mixture, long n,
                         std::uint64_t seed) {
  if (n < 1) throw DomainError("gmm_sample: n must be >= 1");
  std::vector<Eigen::VectorXd> roots;
  roots.reserve(mixture.components.size());
  for (const auto& c : mixture.components)
    roots.push_back(c.eigvals.array().sqrt().matrix());
  Rng rng(seed, "gmm");
  LabeledPoints out;
  out.dim = mixture.dim;
  out.seed = seed;
  out.generator_id = "gmm";
  out.points.resize(n, mixture.dim);
  out.labels.emplace(n);
  const int K = static_cast<int>(mixture.components.size());
  for (long i = 0; i < n; ++i) {
    const double u = rng.uniform();
    int k = K - 1;
    double cum = 0.0;
    for (int c = 0; c < K; ++c) {
      cum += mixture.weights[c];
      if (u < cum) {
        k = c;
        break;
      }
    }
    (*out.labels)[i] = k;
    out.points.row(i) =
        gaussian_point(mixture.components[k], roots[k], rng).transpose();
  }
  return out;
}

double swiss_roll_scale() { return 4.5 * kPi / 2.5; }

LabeledPoints swiss_roll(long n, double noise, std::uint64_t seed) {
  if (n < 1) throw DomainError("swiss_roll: n must be >= 1");
  if (noise < 0.0) throw DomainError("swiss_roll: noise must be >= 0");
  const double scale = swiss_roll_scale();
  Rng rng(seed, "swiss_roll");
  LabeledPoints out;
  out.dim = 2;
  out.seed = seed;
  out.generator_id = "swiss_roll";
  out.points.resize(n, 2);
  for (long i = 0; i < n; ++i) {
    const double u = rng.uniform(1.5 * kPi, 4.5 * kPi);
    // Noise draws happen even at noise = 0 so the point stream does not
    // depend on the noise level.
    const double e0 = rng.normal();
    const double e1 = rng.normal();
    out.points(i, 0) = u * std::cos(u) / scale + noise * e0;
    out.points(i, 1) = u * std::sin(u) / scale + noise * e1;
  }
  return out;
}

LabeledPoints checkerboard(long n, std::uint64_t seed) {
  if (n < 1) throw DomainError("checkerboard: n must be >= 1");
  Rng rng(seed, "checkerboard");
  LabeledPoints out;
  out.dim = 2;
  out.seed = seed;
  out.generator_id = "checkerboard";
  out.points.resize(n, 2);
  out.labels.emplace(n);
  for (long i = 0; i < n; ++i) {
    const auto [ci, cj] = kBlackCells[rng.uniform_int(8)];
    const double ux = rng.uniform();
    const double uy = rng.uniform();
    out.points(i, 0) = -4.0 + 2.0 * ci + 2.0 * ux;
    out.points(i, 1) = -4.0 + 2.0 * cj + 2.0 * uy;
    (*out.labels)[i] = ci * 4 + cj;
  }
  return out;
}

std::string to_csv(const LabeledPoints& pts) {
  std::vector<std::string> header;
  for (int j = 0; j < pts.dim; ++j) header.push_back("x" + std::to_string(j));
  if (pts.labels) header.push_back("label");
  io::CsvWriter w(header);
  std::vector<std::string> row(header.size());
  for (long i = 0; i < pts.points.rows(); ++i) {
    for (int j = 0; j < pts.dim; ++j)
      row[j] = io::format_double(pts.points(i, j));
    if (pts.labels) row[pts.dim] = std::to_string((*pts.labels)[i]);
    w.add_row(row);
  }
  return w.str();
}

flow::Sampler gaussian_sampler(linalg::SpectralMatrix H) {
  if (!H.positive_definite())
    throw DefinitenessError("gaussian_sampler: H must be positive definite");
  Eigen::VectorXd roots = H.eigvals.array().sqrt().matrix();
  return [H = std::move(H), roots = std::move(roots)](int n, Rng& rng) {
    Eigen::MatrixXd X(n, H.dim);
    for (int i = 0; i < n; ++i)
      X.row(i) = gaussian_point(H, roots, rng).transpose();
    return X;
  };
}

flow::Sampler gmm_sampler(gmm::ZeroMeanGmm mixture) {
  std::vector<Eigen::VectorXd> roots;
  for (const auto& c : mixture.components)
    roots.push_back(c.eigvals.array().sqrt().matrix());
  return [mix = std::move(mixture), roots = std::move(roots)](int n,
                                                              Rng& rng) {
    Eigen::MatrixXd X(n, mix.dim);
    const int K = static_cast<int>(mix.components.size());
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform();
      int k = K - 1;
      double cum = 0.0;
      for (int c = 0; c < K; ++c) {
        cum += mix.weights[c];
        if (u < cum) {
          k = c;
          break;
        }
      }
      X.row(i) = gaussian_point(mix.components[k], roots[k], rng).transpose();
    }
    return X;
  };
}

flow::Sampler swiss_roll_sampler(double noise) {
  if (noise < 0.0) throw DomainError("swiss_roll_sampler: noise must be >= 0");
  const double scale = swiss_roll_scale();
  return [noise, scale](int n, Rng& rng) {
    Eigen::MatrixXd X(n, 2);
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform(1.5 * kPi, 4.5 * kPi);
      const double e0 = rng.normal();
      const double e1 = rng.normal();
      X(i, 0) = u * std::cos(u) / scale + noise * e0;
      X(i, 1) = u * std::sin(u) / scale + noise * e1;
    }
    return X;
  };
}

flow::Sampler checkerboard_sampler() {
  return [](int n, Rng& rng) {
    Eigen::MatrixXd X(n, 2);
    for (int i = 0; i < n; ++i) {
      const auto [ci, cj] = kBlackCells[rng.uniform_int(8)];
      X(i, 0) = -4.0 + 2.0 * ci + 2.0 * rng.uniform();
      X(i, 1) = -4.0 + 2.0 * cj + 2.0 * rng.uniform();
    }
    return X;
  };
}

}  // namespace fmlab::data
