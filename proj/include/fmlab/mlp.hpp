#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fmlab/errors.hpp"
#include "json.hpp"

namespace fmlab::nn {

enum class Activation { tanh_act, relu, silu };

Activation activation_from_string(const std::string& s);
std::string activation_to_string(Activation a);

// Per-forward caches reused by the backward pass.
struct Workspace {
  std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts[l] = layer l output
  std::vector<Eigen::MatrixXd> pre;   // pre-activations per hidden layer
};

// Fully connected network on flat parameters: per layer a weight matrix
// (out x in, column-major) followed by its bias, layers in order. Hidden
// layers apply the activation; the final layer is affine.
struct Mlp {
  std::vector<int> layer_sizes;  // input, hidden..., output
  Activation activation = Activation::tanh_act;
  Eigen::VectorXd params;

  long param_count() const;
  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  // Batched forward: X is n x input_dim, result n x output_dim. When ws is
  // given the intermediates needed by backward_batch are cached in it.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& X,
                                Workspace* ws = nullptr) const;

  // Reverse accumulation from dL/doutput (n x output_dim) to dL/dparams;
  // optionally also fills dL/dinput. Requires the workspace of the forward
  // pass over the same parameters.
  Eigen::VectorXd backward_batch(const Workspace& ws, const Eigen::MatrixXd& dY,
                                 Eigen::MatrixXd* dX = nullptr) const;
};

// Scaled-uniform initialization: weights uniform in
// +-sqrt(6/(fan_in+fan_out)), zero biases, drawn deterministically from seed.
Mlp make_mlp(const std::vector<int>& layer_sizes, Activation activation,
             std::uint64_t seed);

// All parameters zero (identity-free baseline used by a few tests).
Mlp make_zero_mlp(const std::vector<int>& layer_sizes, Activation activation);

// A loss closure maps the batched outputs to a scalar plus its gradient
// with respect to those outputs (the seed of reverse accumulation).
struct LossResult {
  double value = 0.0;
  Eigen::MatrixXd dY;
};
using LossClosure = std::function<LossResult(const Eigen::MatrixXd& Y)>;

struct GradResult {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

// Gradient of loss(model(X)) with respect to the flat parameters.
GradResult grad(const Mlp& model, const Eigen::MatrixXd& X,
                const LossClosure& loss);

// First-order optimizers over flat parameter vectors.
struct OptimizerState {
  enum class Kind { sgd, adam };
  Kind kind = Kind::sgd;
  long step_count = 0;
  Eigen::VectorXd first_moment;   // adam only
  Eigen::VectorXd second_moment;  // adam only
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_stab = 1e-8;
};

OptimizerState make_sgd(double lr);
OptimizerState make_adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                         double eps_stab = 1e-8);
OptimizerState optimizer_from_string(const std::string& kind, double lr);

// In-place parameter update; throws NumericError on non-finite gradients.
void optimizer_step(OptimizerState& state, Eigen::VectorXd& params,
                    const Eigen::VectorXd& grads);

// Checkpoint round trip (JSON document, decimal-literal parameters).
nlohmann::json to_checkpoint(const Mlp& model, std::uint64_t seed);
Mlp from_checkpoint(const nlohmann::json& doc, std::uint64_t* seed_out = nullptr);

}  // namespace fmlab::nn
