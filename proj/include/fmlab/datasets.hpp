#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fmlab/errors.hpp"
#include "fmlab/flow_matching.hpp"
#include "fmlab/linalg.hpp"
#include "fmlab/mixture_transport.hpp"

namespace fmlab::data {

struct LabeledPoints {
  Eigen::MatrixXd points;                 // n x dim
  std::optional<std::vector<int>> labels; // component / cell index per point
  int dim = 0;
  std::uint64_t seed = 0;
  std::string generator_id;

  long size() const { return points.rows(); }
};

// x = U * Lambda^{1/2} * z with z standard normal, drawn point by point so a
// length-n sample is the prefix of a length-2n sample at the same seed.
LabeledPoints gaussian_sample(const linalg::SpectralMatrix& H, long n,
                              std::uint64_t seed);

// Component index by CDF inversion over the weights, then a draw from that
// component; labels record the chosen index.
LabeledPoints gmm_sample(const gmm::ZeroMeanGmm& mixture, long n,
                         std::uint64_t seed);

// u ~ Uniform[1.5*pi, 4.5*pi]; point = (u cos u, u sin u)/scale + noise*N(0,I)
// with scale = 4.5*pi/2.5 so the clean curve fills [-2.5, 2.5]^2.
LabeledPoints swiss_roll(long n, double noise, std::uint64_t seed);
double swiss_roll_scale();

// Uniform over the 8 "black" cells ((i+j) even) of the 4x4 tiling of
// [-4,4]^2; labels record the cell index i*4+j.
LabeledPoints checkerboard(long n, std::uint64_t seed);

// CSV with header x0,...,x{d-1}[,label]; 17-significant-digit decimals.
std::string to_csv(const LabeledPoints& pts);

// Adapters exposing generators as streaming samplers for trainers. Each call
// consumes the passed-in stream, so consecutive batches differ.
flow::Sampler gaussian_sampler(linalg::SpectralMatrix H);
flow::Sampler gmm_sampler(gmm::ZeroMeanGmm mixture);
flow::Sampler swiss_roll_sampler(double noise);
flow::Sampler checkerboard_sampler();

}  // namespace fmlab::data
