#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fmlab/flow_matching.hpp"
#include "fmlab/linalg.hpp"
#include "fmlab/mlp.hpp"
#include "json.hpp"

namespace fmlab::precond {

// An invertible map applied to target data so the induced regression
// problem is better conditioned; sampling applies the inverse afterward.
class Preconditioner {
 public:
  enum class Kind { identity, whitening, normalizing_flow, flow_pushforward };

  virtual ~Preconditioner() = default;
  virtual Kind kind() const = 0;
  virtual int dim() const = 0;
  virtual Eigen::VectorXd forward(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd inverse(const Eigen::VectorXd& y) const = 0;
  // log |det D forward(x)|; absent for kinds without a tractable one.
  virtual std::optional<double> log_det(const Eigen::VectorXd& x) const = 0;

  // Row-wise batched maps (default to per-row loops; overridden where a
  // faster whole-batch form exists).
  virtual Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& X) const;
  virtual Eigen::MatrixXd inverse_batch(const Eigen::MatrixXd& Y) const;

  virtual nlohmann::json to_json() const = 0;
};

std::string kind_to_string(Preconditioner::Kind k);

std::unique_ptr<Preconditioner> identity_precond(int dim);

// Linear whitening fit on data: forward = W (x - mu) with
// W = (Cov + ridge I)^{-1/2}; mu = 0 unless centered. log|det| is the
// constant -1/2 sum log(sigma_i + ridge).
std::unique_ptr<Preconditioner> whitening_from_data(const Eigen::MatrixXd& points,
                                                    double ridge,
                                                    bool centered = false);

// An affine coupling stack (RealNVP style). Each layer freezes half the
// coordinates and shifts/scales the other half as a function of the frozen
// ones; scales are clamped via scale_clamp * tanh(raw / scale_clamp). At
// d = 2 the frozen half alternates per layer; for d > 2 each layer applies
// a seeded random permutation first.
struct CouplingLayer {
  std::vector<int> frozen_idx;
  std::vector<int> active_idx;
  nn::Mlp scale_net;  // |frozen| -> |active|
  nn::Mlp shift_net;  // |frozen| -> |active|
};

struct CouplingFlow {
  int dim = 0;
  double scale_clamp = 3.0;
  std::vector<CouplingLayer> layers;
  std::uint64_t seed = 0;
  std::vector<std::pair<long, double>> train_log;  // (step, minibatch NLL)

  long param_count() const;
};

struct CouplingOut {
  Eigen::VectorXd y;
  double log_det = 0.0;
};

CouplingOut coupling_forward(const CouplingFlow& flow, const Eigen::VectorXd& x);
Eigen::VectorXd coupling_inverse(const CouplingFlow& flow,
                                 const Eigen::VectorXd& y);

// Batched forms; log_det per row.
struct CouplingBatchOut {
  Eigen::MatrixXd Y;
  Eigen::VectorXd log_det;
};
CouplingBatchOut coupling_forward_batch(const CouplingFlow& flow,
                                        const Eigen::MatrixXd& X);
Eigen::MatrixXd coupling_inverse_batch(const CouplingFlow& flow,
                                       const Eigen::MatrixXd& Y);

// Exact mean NLL of points under the flow's pullback of N(0, I):
// mean of 1/2 ||P(x)||^2 - log|det DP(x)| + (d/2) log 2pi.
double nf_nll(const CouplingFlow& flow, const Eigen::MatrixXd& X);

struct NfArch {
  int n_layers = 6;
  std::vector<int> hidden = {32, 32};
  double scale_clamp = 3.0;
  // zero_init starts every coupling net at exactly zero (the identity
  // flow); default is a seeded init whose final layers are zeroed, so the
  // flow starts at the identity but hidden units are alive.
  bool zero_init = false;
};

struct NfHyper {
  double lr = 1e-3;
  int batch = 256;
  long steps = 2000;
  std::uint64_t seed = 0;
};

// Maximum-likelihood trainer for the coupling flow (incremental, like
// CfmTrainer).
class NfTrainer {
 public:
  NfTrainer(flow::Sampler target, int dim, const NfArch& arch,
            const NfHyper& hyper);

  double step();  // one minibatch NLL gradient step; returns the NLL
  void run(long steps);
  const CouplingFlow& flow() const { return flow_; }
  CouplingFlow take() && { return std::move(flow_); }

 private:
  flow::Sampler target_;
  NfHyper hyper_;
  CouplingFlow flow_;
  nn::OptimizerState opt_;
  Rng rng_;
  long steps_done_ = 0;
};

CouplingFlow nf_train(flow::Sampler target, int dim, const NfArch& arch,
                      const NfHyper& hyper);

// Construct a fresh (untrained) coupling flow.
CouplingFlow make_coupling_flow(int dim, const NfArch& arch, std::uint64_t seed);

// Preconditioner wrappers.
std::unique_ptr<Preconditioner> nf_precond(CouplingFlow flow);

// Pushforward preconditioner: forward integrates the low-capacity field's
// dynamics backward in time (data -> Gaussian-like), inverse integrates
// forward; log_det is absent.
std::unique_ptr<Preconditioner> flow_pushforward_precond(
    flow::TrainedField low_capacity_field, int n_steps);

// Elementwise forward map over a point set; order and labels preserved by
// construction (rows map to rows).
Eigen::MatrixXd precondition_dataset(const Preconditioner& p,
                                     const Eigen::MatrixXd& points);

// JSON round trip.
nlohmann::json coupling_to_json(const CouplingFlow& flow);
CouplingFlow coupling_from_json(const nlohmann::json& doc);
std::unique_ptr<Preconditioner> precond_from_json(const nlohmann::json& doc);

}  // namespace fmlab::precond
