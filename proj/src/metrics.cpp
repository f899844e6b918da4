#include "fmlab/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "fmlab/io.hpp"
#include "fmlab/linalg.hpp"
#include "fmlab/rng.hpp"

namespace fmlab::metrics {

namespace {

constexpr long kMedianCap = 2048;
constexpr long kBlock = 512;

// Fixed-order blockwise sum of the multi-bandwidth RBF kernel over all pairs
// (including the diagonal); memory stays O(block * n).
double kernel_pair_sum(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                       const std::vector<double>& widths) {
  const Eigen::VectorXd a2 = A.rowwise().squaredNorm();
  const Eigen::VectorXd b2 = B.rowwise().squaredNorm();
  std::vector<double> inv_two_h2(widths.size());
  for (std::size_t k = 0; k < widths.size(); ++k)
    inv_two_h2[k] = 1.0 / (2.0 * widths[k] * widths[k]);
  double total = 0.0;
  for (long i0 = 0; i0 < A.rows(); i0 += kBlock) {
    const long bi = std::min(kBlock, A.rows() - i0);
    Eigen::MatrixXd d2m = -2.0 * (A.middleRows(i0, bi) * B.transpose());
    d2m.colwise() += a2.segment(i0, bi);
    d2m.rowwise() += b2.transpose();
    const Eigen::ArrayXXd d2 = d2m.array().max(0.0);
    double block = 0.0;
    for (std::size_t k = 0; k < widths.size(); ++k)
      block += (-inv_two_h2[k] * d2).exp().sum();
    total += block;
  }
  return total;
}

}  // namespace

double median_pairwise_distance(const Eigen::MatrixXd& X,
                                const Eigen::MatrixXd& Y) {
  const long n_pool = X.rows() + Y.rows();
  const long m = std::min(n_pool, kMedianCap);
  Eigen::MatrixXd pool(m, X.cols());
  // Evenly strided subsample of the pooled rows (X then Y), deterministic.
  for (long i = 0; i < m; ++i) {
    const long src = (i * n_pool) / m;
    pool.row(i) = src < X.rows() ? X.row(src) : Y.row(src - X.rows());
  }
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(m) * (m - 1) / 2);
  for (long i = 0; i < m; ++i)
    for (long j = i + 1; j < m; ++j)
      dists.push_back((pool.row(i) - pool.row(j)).norm());
  if (dists.empty()) return 1.0;  // single pooled point; any width works
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  double med = dists[mid];
  if (dists.size() % 2 == 0) {
    std::nth_element(dists.begin(), dists.begin() + (mid - 1),
                     dists.begin() + mid);
    med = 0.5 * (med + dists[mid - 1]);
  }
  return med > 0.0 ? med : 1.0;
}

namespace {

// Lexicographic order on (rows, entries) so mathematically symmetric
// computations can run on canonically ordered arguments and return
// bit-identical results either way.
bool lex_less(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.rows() != B.rows()) return A.rows() < B.rows();
  for (long i = 0; i < A.rows(); ++i)
    for (long j = 0; j < A.cols(); ++j) {
      if (A(i, j) < B(i, j)) return true;
      if (A(i, j) > B(i, j)) return false;
    }
  return false;
}

// Right-continuous empirical quantile of a sorted sample at probability p.
double sorted_quantile(const std::vector<double>& s, double p) {
  const long n = static_cast<long>(s.size());
  long idx = static_cast<long>(std::floor(p * n));
  idx = std::min(idx, n - 1);
  return s[idx];
}

}  // namespace

MetricReport mmd_rbf(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                     const BandwidthSpec& bandwidths) {
  if (X.rows() < 1 || Y.rows() < 1)
    throw SampleSizeError("mmd_rbf: both sets must be nonempty");
  if (X.cols() != Y.cols()) throw DimensionError("mmd_rbf: dim mismatch");
  const bool swap = lex_less(Y, X);
  const Eigen::MatrixXd& A = swap ? Y : X;
  const Eigen::MatrixXd& B = swap ? X : Y;

  std::vector<double> widths = bandwidths.values;
  double median = 0.0;
  if (bandwidths.kind == BandwidthSpec::Kind::median_scaled) {
    median = median_pairwise_distance(A, B);
    for (double& w : widths) w *= median;
  }
  for (double w : widths)
    if (!(w > 0.0)) throw DomainError("mmd_rbf: bandwidths must be positive");

  const double na = static_cast<double>(A.rows());
  const double nb = static_cast<double>(B.rows());
  const double vaa = kernel_pair_sum(A, A, widths) / (na * na);
  const double vbb = kernel_pair_sum(B, B, widths) / (nb * nb);
  const double vab = kernel_pair_sum(A, B, widths) / (na * nb);

  MetricReport r;
  r.name = "mmd_rbf";
  r.value = vaa + vbb - 2.0 * vab;
  r.n_x = X.rows();
  r.n_y = Y.rows();
  r.params["bandwidths"] = widths;
  r.params["bandwidth_rule"] =
      bandwidths.kind == BandwidthSpec::Kind::median_scaled ? "median_scaled"
                                                            : "explicit";
  if (bandwidths.kind == BandwidthSpec::Kind::median_scaled)
    r.params["median_distance"] = median;
  return r;
}

MetricReport sliced_distance(const Eigen::MatrixXd& X,
                             const Eigen::MatrixXd& Y, int n_projections,
                             std::uint64_t seed) {
  if (X.rows() < 1 || Y.rows() < 1)
    throw SampleSizeError("sliced_distance: both sets must be nonempty");
  if (X.cols() != Y.cols())
    throw DimensionError("sliced_distance: dim mismatch");
  if (n_projections < 1)
    throw DomainError("sliced_distance: n_projections must be >= 1");
  const int d = static_cast<int>(X.cols());
  const bool swap = lex_less(Y, X);
  const Eigen::MatrixXd& A = swap ? Y : X;
  const Eigen::MatrixXd& B = swap ? X : Y;

  Rng rng(seed, "sliced");
  const long m = std::max(A.rows(), B.rows());
  double total = 0.0;
  std::vector<double> pa(A.rows()), pb(B.rows());
  for (int p = 0; p < n_projections; ++p) {
    Eigen::VectorXd dir = rng.normal_vec(d);
    while (dir.norm() < 1e-12) dir = rng.normal_vec(d);
    dir /= dir.norm();
    Eigen::VectorXd projA = A * dir, projB = B * dir;
    pa.assign(projA.data(), projA.data() + projA.size());
    pb.assign(projB.data(), projB.data() + projB.size());
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    double w2sq = 0.0;
    for (long i = 0; i < m; ++i) {
      const double prob = (i + 0.5) / static_cast<double>(m);
      const double diff = sorted_quantile(pa, prob) - sorted_quantile(pb, prob);
      w2sq += diff * diff;
    }
    total += std::sqrt(w2sq / static_cast<double>(m));
  }

  MetricReport r;
  r.name = "sliced_w2";
  r.value = total / n_projections;
  r.n_x = X.rows();
  r.n_y = Y.rows();
  r.params["n_projections"] = n_projections;
  r.params["seed"] = seed;
  return r;
}

std::vector<std::pair<double, double>> empirical_condition_trajectory(
    const data::LabeledPoints& points, const flow::Schedule& schedule,
    const std::vector<double>& ts, long n_pairs, std::uint64_t seed) {
  const int d = points.dim;
  if (n_pairs < d + 1)
    throw SampleSizeError(
        "empirical_condition_trajectory: n_pairs must be >= dim+1");
  if (points.size() < 1)
    throw SampleSizeError("empirical_condition_trajectory: empty point set");
  for (double t : ts)
    if (!(t > 0.0 && t < 1.0))
      throw DomainError(
          "empirical_condition_trajectory: grid must lie in (0,1)");

  // One pool of pairs shared by every grid point: per pair, a resampled
  // target row then a standard-normal source draw.
  Rng rng(seed, "empirical_kappa");
  Eigen::MatrixXd X1(n_pairs, d), X0(n_pairs, d);
  for (long i = 0; i < n_pairs; ++i) {
    const long idx = static_cast<long>(rng.uniform_int(
        static_cast<std::uint64_t>(points.size())));
    X1.row(i) = points.points.row(idx);
    for (int j = 0; j < d; ++j) X0(i, j) = rng.normal();
  }

  std::vector<std::pair<double, double>> out;
  out.reserve(ts.size());
  for (double t : ts) {
    const Eigen::MatrixXd Xt = schedule.s(t) * X1 + schedule.c(t) * X0;
    const Eigen::MatrixXd C =
        Xt.transpose() * Xt / static_cast<double>(n_pairs);
    out.emplace_back(t, linalg::cond_number(linalg::sym_eig(C)));
  }
  return out;
}

const std::vector<std::string>& report_header() {
  static const std::vector<std::string> h = {"metric", "value", "n_x",
                                             "n_y",    "seed",  "params_json"};
  return h;
}

std::vector<std::string> report_row(const MetricReport& r) {
  const std::string seed = r.params.contains("seed")
                               ? r.params.at("seed").dump()
                               : std::string("");
  return {r.name,
          io::format_double(r.value),
          std::to_string(r.n_x),
          std::to_string(r.n_y),
          seed,
          r.params.dump()};
}

}  // namespace fmlab::metrics
