#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fmlab/datasets.hpp"
#include "fmlab/errors.hpp"
#include "fmlab/flow_matching.hpp"

namespace fmlab::metrics {

struct MetricReport {
  std::string name;
  double value = 0.0;
  nlohmann::json params;  // bandwidths / n_projections / seed
  long n_x = 0;
  long n_y = 0;
};

// Bandwidths for the sum-of-RBF kernel: either an explicit list of kernel
// widths, or factors applied to the median pairwise distance of the pooled
// sample (subsampled to at most 2048 points for the median).
struct BandwidthSpec {
  enum class Kind { explicit_list, median_scaled } kind = Kind::median_scaled;
  std::vector<double> values = {0.5, 1.0, 2.0};

  static BandwidthSpec median() { return {}; }
  static BandwidthSpec explicit_list(std::vector<double> widths) {
    return {Kind::explicit_list, std::move(widths)};
  }
};

// Median pairwise distance of the pooled sample (the `median` bandwidth
// rule), subsampled to at most 2048 points; falls back to 1 when degenerate.
double median_pairwise_distance(const Eigen::MatrixXd& X,
                                const Eigen::MatrixXd& Y);

// Biased V-statistic estimate of squared MMD under k(a,b) =
// sum_h exp(-|a-b|^2 / (2 h^2)). Exactly zero when X and Y are the same
// multiset and exactly symmetric in its arguments.
MetricReport mmd_rbf(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                     const BandwidthSpec& bandwidths = BandwidthSpec::median());

// Average over seeded random unit directions of the 1D 2-Wasserstein
// distance between the projected samples (sorted-sample / quantile form).
MetricReport sliced_distance(const Eigen::MatrixXd& X,
                             const Eigen::MatrixXd& Y, int n_projections,
                             std::uint64_t seed);

// Condition number of the uncentered covariance of x_t = s(t) x1 + c(t) x0
// over Monte Carlo pairs, per grid point. Pairs are shared across the grid
// (common random numbers) so the trajectory is smooth in t.
std::vector<std::pair<double, double>> empirical_condition_trajectory(
    const data::LabeledPoints& points, const flow::Schedule& schedule,
    const std::vector<double>& ts, long n_pairs, std::uint64_t seed);

// CSV row cells in the order metric,value,n_x,n_y,seed,params_json.
std::vector<std::string> report_row(const MetricReport& r);
const std::vector<std::string>& report_header();

}  // namespace fmlab::metrics
