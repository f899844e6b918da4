#include "fmlab/mlp.hpp"

#include <cmath>

#include "fmlab/rng.hpp"

namespace fmlab::nn {

namespace {

void check_sizes(const std::vector<int>& sizes) {
  if (sizes.size() < 2)
    throw DimensionError("Mlp needs at least input and output layer sizes");
  for (int s : sizes)
    if (s < 1) throw DimensionError("Mlp layer sizes must be positive");
}

// Activation applied elementwise to pre-activations.
Eigen::MatrixXd apply_activation(Activation a, const Eigen::MatrixXd& Z) {
  switch (a) {
    case Activation::tanh_act:
      return Z.array().tanh();
    case Activation::relu:
      return Z.cwiseMax(0.0);
    case Activation::silu:
      return (Z.array() / (1.0 + (-Z.array()).exp())).matrix();
  }
  throw DomainError("unknown activation");
}

// Derivative with respect to the pre-activation. relu uses subgradient 0 at 0.
Eigen::MatrixXd activation_derivative(Activation a, const Eigen::MatrixXd& Z) {
  switch (a) {
    case Activation::tanh_act: {
      Eigen::ArrayXXd th = Z.array().tanh();
      return (1.0 - th.square()).matrix();
    }
    case Activation::relu:
      return (Z.array() > 0.0).cast<double>().matrix();
    case Activation::silu: {
      Eigen::ArrayXXd sg = 1.0 / (1.0 + (-Z.array()).exp());
      return (sg * (1.0 + Z.array() * (1.0 - sg))).matrix();
    }
  }
  throw DomainError("unknown activation");
}

}  // namespace

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh_act;
  if (s == "relu") return Activation::relu;
  if (s == "silu") return Activation::silu;
  throw ValidationError("unknown activation: " + s);
}

std::string activation_to_string(Activation a) {
  switch (a) {
    case Activation::tanh_act:
      return "tanh";
    case Activation::relu:
      return "relu";
    case Activation::silu:
      return "silu";
  }
  return "?";
}

long Mlp::param_count() const {
  long n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += static_cast<long>(layer_sizes[l]) * layer_sizes[l + 1] +
         layer_sizes[l + 1];
  return n;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  return forward_batch(x.transpose()).row(0).transpose();
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& X,
                                   Workspace* ws) const {
  check_sizes(layer_sizes);
  if (X.cols() != layer_sizes.front())
    throw DimensionError("Mlp forward: input dim mismatch");
  const int L = static_cast<int>(layer_sizes.size()) - 1;
  if (ws) {
    ws->acts.assign(1, X);
    ws->pre.clear();
  }
  Eigen::MatrixXd cur = X;
  long off = 0;
  for (int l = 0; l < L; ++l) {
    const int in = layer_sizes[l];
    const int out = layer_sizes[l + 1];
    Eigen::Map<const Eigen::MatrixXd> W(params.data() + off, out, in);
    Eigen::Map<const Eigen::VectorXd> b(params.data() + off + 1L * out * in,
                                        out);
    off += 1L * out * in + out;
    Eigen::MatrixXd Z = cur * W.transpose();
    Z.rowwise() += b.transpose();
    if (!Z.allFinite())
      throw NumericError("Mlp forward: non-finite values at layer " +
                         std::to_string(l));
    if (l + 1 < L) {
      if (ws) ws->pre.push_back(Z);
      cur = apply_activation(activation, Z);
    } else {
      cur = std::move(Z);
    }
    if (ws) ws->acts.push_back(cur);
  }
  return cur;
}

Eigen::VectorXd Mlp::backward_batch(const Workspace& ws,
                                    const Eigen::MatrixXd& dY,
                                    Eigen::MatrixXd* dX) const {
  const int L = static_cast<int>(layer_sizes.size()) - 1;
  Eigen::VectorXd grad_flat(param_count());

  // Offsets of each layer's weight block.
  std::vector<long> offsets(L);
  long off = 0;
  for (int l = 0; l < L; ++l) {
    offsets[l] = off;
    off += 1L * layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  }

  Eigen::MatrixXd G = dY;  // dL/d(pre-activation of layer l), walking down
  for (int l = L - 1; l >= 0; --l) {
    const int in = layer_sizes[l];
    const int out = layer_sizes[l + 1];
    const Eigen::MatrixXd& Ain = ws.acts[l];
    Eigen::Map<Eigen::MatrixXd> dW(grad_flat.data() + offsets[l], out, in);
    Eigen::Map<Eigen::VectorXd> db(
        grad_flat.data() + offsets[l] + 1L * out * in, out);
    dW.noalias() = G.transpose() * Ain;
    db = G.colwise().sum().transpose();
    if (l > 0 || dX) {
      Eigen::Map<const Eigen::MatrixXd> W(params.data() + offsets[l], out, in);
      Eigen::MatrixXd Gin = G * W;
      if (l > 0) {
        Gin.array() *= activation_derivative(activation, ws.pre[l - 1]).array();
        G = std::move(Gin);
      } else if (dX) {
        *dX = std::move(Gin);
      }
    }
  }
  return grad_flat;
}

Mlp make_mlp(const std::vector<int>& layer_sizes, Activation activation,
             std::uint64_t seed) {
  check_sizes(layer_sizes);
  Mlp m;
  m.layer_sizes = layer_sizes;
  m.activation = activation;
  m.params.resize(m.param_count());
  Rng rng(seed, "mlp_init");
  long off = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int in = layer_sizes[l];
    const int out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (in + out));
    for (long i = 0; i < 1L * out * in; ++i)
      m.params[off + i] = rng.uniform(-bound, bound);
    off += 1L * out * in;
    for (int i = 0; i < out; ++i) m.params[off + i] = 0.0;
    off += out;
  }
  return m;
}

Mlp make_zero_mlp(const std::vector<int>& layer_sizes, Activation activation) {
  check_sizes(layer_sizes);
  Mlp m;
  m.layer_sizes = layer_sizes;
  m.activation = activation;
  m.params = Eigen::VectorXd::Zero(m.param_count());
  return m;
}

GradResult grad(const Mlp& model, const Eigen::MatrixXd& X,
                const LossClosure& loss) {
  Workspace ws;
  Eigen::MatrixXd Y = model.forward_batch(X, &ws);
  LossResult lr = loss(Y);
  if (!std::isfinite(lr.value))
    throw NumericError("grad: loss is non-finite");
  GradResult out;
  out.loss = lr.value;
  out.grad = model.backward_batch(ws, lr.dY);
  return out;
}

OptimizerState make_sgd(double lr) {
  OptimizerState s;
  s.kind = OptimizerState::Kind::sgd;
  s.lr = lr;
  return s;
}

OptimizerState make_adam(double lr, double beta1, double beta2,
                         double eps_stab) {
  OptimizerState s;
  s.kind = OptimizerState::Kind::adam;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps_stab = eps_stab;
  return s;
}

OptimizerState optimizer_from_string(const std::string& kind, double lr) {
  if (kind == "sgd") return make_sgd(lr);
  if (kind == "adam") return make_adam(lr);
  throw ValidationError("unknown optimizer: " + kind);
}

void optimizer_step(OptimizerState& state, Eigen::VectorXd& params,
                    const Eigen::VectorXd& grads) {
  if (params.size() != grads.size())
    throw DimensionError("optimizer_step: params/grads length mismatch");
  if (!grads.allFinite())
    throw NumericError("optimizer_step: non-finite gradients");
  state.step_count += 1;
  if (state.kind == OptimizerState::Kind::sgd) {
    params -= state.lr * grads;
    return;
  }
  if (state.first_moment.size() != params.size()) {
    state.first_moment = Eigen::VectorXd::Zero(params.size());
    state.second_moment = Eigen::VectorXd::Zero(params.size());
  }
  state.first_moment =
      state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment = state.beta2 * state.second_moment +
                        (1.0 - state.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(state.beta1, state.step_count);
  const double c2 = 1.0 - std::pow(state.beta2, state.step_count);
  Eigen::ArrayXd mhat = state.first_moment.array() / c1;
  Eigen::ArrayXd vhat = state.second_moment.array() / c2;
  params.array() -= state.lr * mhat / (vhat.sqrt() + state.eps_stab);
}

nlohmann::json to_checkpoint(const Mlp& model, std::uint64_t seed) {
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["layer_sizes"] = model.layer_sizes;
  doc["activation"] = activation_to_string(model.activation);
  std::vector<double> p(model.params.data(),
                        model.params.data() + model.params.size());
  doc["params"] = p;
  doc["seed"] = seed;
  return doc;
}

Mlp from_checkpoint(const nlohmann::json& doc, std::uint64_t* seed_out) {
  if (!doc.contains("layer_sizes") || !doc.contains("activation") ||
      !doc.contains("params"))
    throw ValidationError("checkpoint: missing required fields");
  Mlp m;
  m.layer_sizes = doc.at("layer_sizes").get<std::vector<int>>();
  check_sizes(m.layer_sizes);
  m.activation = activation_from_string(doc.at("activation").get<std::string>());
  std::vector<double> p = doc.at("params").get<std::vector<double>>();
  if (static_cast<long>(p.size()) != m.param_count())
    throw ValidationError("checkpoint: parameter count mismatch");
  m.params = Eigen::Map<Eigen::VectorXd>(p.data(), p.size());
  if (seed_out) *seed_out = doc.value("seed", std::uint64_t{0});
  return m;
}

}  // namespace fmlab::nn
