#include "fmlab/preconditioner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fmlab/rng.hpp"

namespace fmlab::precond {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Zero the final affine layer of a net so the stack starts as the identity
// map while hidden units keep a live seeded initialization.
void zero_last_layer(nn::Mlp& m) {
  const auto& sz = m.layer_sizes;
  const int L = static_cast<int>(sz.size()) - 1;
  long off = 0;
  for (int l = 0; l < L - 1; ++l) off += 1L * sz[l] * sz[l + 1] + sz[l + 1];
  m.params.segment(off, 1L * sz[L - 1] * sz[L] + sz[L]).setZero();
}

std::vector<int> iota_vec(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

Eigen::MatrixXd gather_cols(const Eigen::MatrixXd& X,
                            const std::vector<int>& idx) {
  Eigen::MatrixXd out(X.rows(), idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(j) = X.col(idx[j]);
  return out;
}

void scatter_cols(Eigen::MatrixXd& X, const std::vector<int>& idx,
                  const Eigen::MatrixXd& v) {
  for (std::size_t j = 0; j < idx.size(); ++j) X.col(idx[j]) = v.col(j);
}

}  // namespace

Eigen::MatrixXd Preconditioner::forward_batch(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd out(X.rows(), X.cols());
  for (long i = 0; i < X.rows(); ++i)
    out.row(i) = forward(X.row(i).transpose()).transpose();
  return out;
}

Eigen::MatrixXd Preconditioner::inverse_batch(const Eigen::MatrixXd& Y) const {
  Eigen::MatrixXd out(Y.rows(), Y.cols());
  for (long i = 0; i < Y.rows(); ++i)
    out.row(i) = inverse(Y.row(i).transpose()).transpose();
  return out;
}

std::string kind_to_string(Preconditioner::Kind k) {
  switch (k) {
    case Preconditioner::Kind::identity:
      return "identity";
    case Preconditioner::Kind::whitening:
      return "whitening";
    case Preconditioner::Kind::normalizing_flow:
      return "normalizing_flow";
    case Preconditioner::Kind::flow_pushforward:
      return "flow_pushforward";
  }
  return "?";
}

namespace {

class IdentityPrecond final : public Preconditioner {
 public:
  explicit IdentityPrecond(int dim) : dim_(dim) {
    if (dim < 1) throw DimensionError("identity preconditioner: dim >= 1");
  }
  Kind kind() const override { return Kind::identity; }
  int dim() const override { return dim_; }
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const override { return x; }
  Eigen::VectorXd inverse(const Eigen::VectorXd& y) const override { return y; }
  std::optional<double> log_det(const Eigen::VectorXd&) const override {
    return 0.0;
  }
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& X) const override {
    return X;
  }
  Eigen::MatrixXd inverse_batch(const Eigen::MatrixXd& Y) const override {
    return Y;
  }
  nlohmann::json to_json() const override {
    return {{"format_version", 1}, {"kind", "identity"}, {"dim", dim_}};
  }

 private:
  int dim_;
};

class WhiteningPrecond final : public Preconditioner {
 public:
  WhiteningPrecond(linalg::SpectralMatrix cov, double ridge,
                   Eigen::VectorXd mean)
      : cov_(std::move(cov)), ridge_(ridge), mean_(std::move(mean)) {
    W_ = linalg::inv_sqrt(cov_, ridge_);
    Winv_ = linalg::sqrt_pd(cov_, ridge_);
    log_det_ = -0.5 * (cov_.eigvals.array() + ridge_).log().sum();
  }
  Kind kind() const override { return Kind::whitening; }
  int dim() const override { return cov_.dim; }
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const override {
    return W_ * (x - mean_);
  }
  Eigen::VectorXd inverse(const Eigen::VectorXd& y) const override {
    return Winv_ * y + mean_;
  }
  std::optional<double> log_det(const Eigen::VectorXd&) const override {
    return log_det_;
  }
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& X) const override {
    return (X.rowwise() - mean_.transpose()) * W_.transpose();
  }
  Eigen::MatrixXd inverse_batch(const Eigen::MatrixXd& Y) const override {
    return (Y * Winv_.transpose()).rowwise() + mean_.transpose();
  }
  nlohmann::json to_json() const override {
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["kind"] = "whitening";
    doc["dim"] = cov_.dim;
    doc["ridge"] = ridge_;
    doc["cov_eigvals"] = std::vector<double>(
        cov_.eigvals.data(), cov_.eigvals.data() + cov_.eigvals.size());
    std::vector<std::vector<double>> vecs(cov_.dim,
                                          std::vector<double>(cov_.dim));
    for (int i = 0; i < cov_.dim; ++i)
      for (int j = 0; j < cov_.dim; ++j) vecs[i][j] = cov_.eigvecs(i, j);
    // row-major entries of the eigenvector matrix
    doc["cov_eigvecs"] = vecs;
    doc["mean"] =
        std::vector<double>(mean_.data(), mean_.data() + mean_.size());
    return doc;
  }

 private:
  linalg::SpectralMatrix cov_;
  double ridge_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd W_, Winv_;
  double log_det_;
};

class NfPrecond final : public Preconditioner {
 public:
  explicit NfPrecond(CouplingFlow flow) : flow_(std::move(flow)) {}
  Kind kind() const override { return Kind::normalizing_flow; }
  int dim() const override { return flow_.dim; }
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const override {
    return coupling_forward(flow_, x).y;
  }
  Eigen::VectorXd inverse(const Eigen::VectorXd& y) const override {
    return coupling_inverse(flow_, y);
  }
  std::optional<double> log_det(const Eigen::VectorXd& x) const override {
    return coupling_forward(flow_, x).log_det;
  }
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& X) const override {
    return coupling_forward_batch(flow_, X).Y;
  }
  Eigen::MatrixXd inverse_batch(const Eigen::MatrixXd& Y) const override {
    return coupling_inverse_batch(flow_, Y);
  }
  nlohmann::json to_json() const override { return coupling_to_json(flow_); }
  const CouplingFlow& flow() const { return flow_; }

 private:
  CouplingFlow flow_;
};

class PushforwardPrecond final : public Preconditioner {
 public:
  PushforwardPrecond(flow::TrainedField field, int n_steps)
      : field_(std::move(field)), n_steps_(n_steps) {
    if (n_steps < 1)
      throw DomainError("flow_pushforward_precond: n_steps must be >= 1");
  }
  Kind kind() const override { return Kind::flow_pushforward; }
  int dim() const override { return field_.data_dim; }
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const override {
    return flow::integrate_backward(field_.as_field(), x, n_steps_,
                                    flow::Method::rk4);
  }
  Eigen::VectorXd inverse(const Eigen::VectorXd& y) const override {
    return flow::integrate_forward(field_.as_field(), y, n_steps_,
                                   flow::Method::rk4)
        .x_end;
  }
  std::optional<double> log_det(const Eigen::VectorXd&) const override {
    return std::nullopt;
  }
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& X) const override {
    return flow::integrate_backward_batch(field_.as_batch_field(), X, n_steps_,
                                          flow::Method::rk4);
  }
  Eigen::MatrixXd inverse_batch(const Eigen::MatrixXd& Y) const override {
    return flow::integrate_forward_batch(field_.as_batch_field(), Y, n_steps_,
                                         flow::Method::rk4);
  }
  nlohmann::json to_json() const override {
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["kind"] = "flow_pushforward";
    doc["n_steps"] = n_steps_;
    doc["field"] = flow::field_to_json(field_);
    return doc;
  }

 private:
  flow::TrainedField field_;
  int n_steps_;
};

}  // namespace

std::unique_ptr<Preconditioner> identity_precond(int dim) {
  return std::make_unique<IdentityPrecond>(dim);
}

std::unique_ptr<Preconditioner> whitening_from_data(const Eigen::MatrixXd& points,
                                                    double ridge,
                                                    bool centered) {
  if (points.rows() < points.cols() + 1)
    throw SampleSizeError("whitening_from_data needs at least d+1 points");
  if (ridge < 0.0) throw DomainError("whitening_from_data: ridge >= 0");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(points.cols());
  if (centered) mean = points.colwise().mean().transpose();
  Eigen::MatrixXd C = linalg::sample_covariance(points, centered);
  linalg::SpectralMatrix S = linalg::sym_eig(C);
  if (S.eigvals.minCoeff() + ridge <= 0.0)
    throw DefinitenessError(
        "whitening_from_data: sample covariance singular and ridge is 0");
  return std::make_unique<WhiteningPrecond>(std::move(S), ridge,
                                            std::move(mean));
}

long CouplingFlow::param_count() const {
  long n = 0;
  for (const auto& l : layers)
    n += l.scale_net.param_count() + l.shift_net.param_count();
  return n;
}

CouplingFlow make_coupling_flow(int dim, const NfArch& arch,
                                std::uint64_t seed) {
  if (dim < 2)
    throw DimensionError("coupling flow needs dim >= 2 (half splits)");
  if (arch.n_layers < 2 || arch.n_layers % 2 != 0)
    throw DomainError("coupling flow: n_layers must be even and >= 2");
  CouplingFlow f;
  f.dim = dim;
  f.scale_clamp = arch.scale_clamp;
  f.seed = seed;
  Rng mask_rng(seed, "nf_masks");
  for (int l = 0; l < arch.n_layers; ++l) {
    CouplingLayer layer;
    if (dim == 2) {
      // A permutation of two coordinates is a swap; alternate deterministically.
      if (l % 2 == 0) {
        layer.frozen_idx = {0};
        layer.active_idx = {1};
      } else {
        layer.frozen_idx = {1};
        layer.active_idx = {0};
      }
    } else {
      std::vector<int> perm = iota_vec(dim);
      // Fisher-Yates with the flow's seeded stream.
      for (int i = dim - 1; i > 0; --i) {
        const int j = static_cast<int>(mask_rng.uniform_int(i + 1));
        std::swap(perm[i], perm[j]);
      }
      const int half = dim / 2;
      layer.frozen_idx.assign(perm.begin(), perm.begin() + half);
      layer.active_idx.assign(perm.begin() + half, perm.end());
    }
    const int fin = static_cast<int>(layer.frozen_idx.size());
    const int act = static_cast<int>(layer.active_idx.size());
    std::vector<int> sizes;
    sizes.push_back(fin);
    sizes.insert(sizes.end(), arch.hidden.begin(), arch.hidden.end());
    sizes.push_back(act);
    if (arch.zero_init) {
      layer.scale_net = nn::make_zero_mlp(sizes, nn::Activation::tanh_act);
      layer.shift_net = nn::make_zero_mlp(sizes, nn::Activation::tanh_act);
    } else {
      // Distinct deterministic seed per (layer, net role).
      const std::uint64_t s1 =
          Rng::mix64(seed ^ Rng::fnv1a("nf_scale") ^ (0x9e37ULL * (l + 1)));
      const std::uint64_t s2 =
          Rng::mix64(seed ^ Rng::fnv1a("nf_shift") ^ (0x7f4aULL * (l + 1)));
      layer.scale_net = nn::make_mlp(sizes, nn::Activation::tanh_act, s1);
      layer.shift_net = nn::make_mlp(sizes, nn::Activation::tanh_act, s2);
      zero_last_layer(layer.scale_net);
      zero_last_layer(layer.shift_net);
    }
    f.layers.push_back(std::move(layer));
  }
  return f;
}

CouplingBatchOut coupling_forward_batch(const CouplingFlow& flow,
                                        const Eigen::MatrixXd& X) {
  if (X.cols() != flow.dim)
    throw DimensionError("coupling_forward: dim mismatch");
  CouplingBatchOut out;
  out.Y = X;
  out.log_det = Eigen::VectorXd::Zero(X.rows());
  int layer_index = 0;
  for (const auto& layer : flow.layers) {
    Eigen::MatrixXd XA = gather_cols(out.Y, layer.frozen_idx);
    Eigen::MatrixXd XB = gather_cols(out.Y, layer.active_idx);
    Eigen::MatrixXd Sraw = layer.scale_net.forward_batch(XA);
    Eigen::ArrayXXd S =
        flow.scale_clamp * (Sraw.array() / flow.scale_clamp).tanh();
    Eigen::MatrixXd T = layer.shift_net.forward_batch(XA);
    Eigen::MatrixXd YB = (XB.array() * S.exp()).matrix() + T;
    if (!YB.allFinite())
      throw NumericError("coupling_forward: non-finite output at layer " +
                         std::to_string(layer_index));
    scatter_cols(out.Y, layer.active_idx, YB);
    out.log_det += S.rowwise().sum().matrix();
    ++layer_index;
  }
  return out;
}

CouplingOut coupling_forward(const CouplingFlow& flow,
                             const Eigen::VectorXd& x) {
  CouplingBatchOut b = coupling_forward_batch(flow, x.transpose());
  return {b.Y.row(0).transpose(), b.log_det[0]};
}

Eigen::MatrixXd coupling_inverse_batch(const CouplingFlow& flow,
                                       const Eigen::MatrixXd& Y) {
  if (Y.cols() != flow.dim)
    throw DimensionError("coupling_inverse: dim mismatch");
  Eigen::MatrixXd X = Y;
  for (auto it = flow.layers.rbegin(); it != flow.layers.rend(); ++it) {
    const auto& layer = *it;
    Eigen::MatrixXd XA = gather_cols(X, layer.frozen_idx);  // unchanged half
    Eigen::MatrixXd YB = gather_cols(X, layer.active_idx);
    Eigen::MatrixXd Sraw = layer.scale_net.forward_batch(XA);
    Eigen::ArrayXXd S =
        flow.scale_clamp * (Sraw.array() / flow.scale_clamp).tanh();
    Eigen::MatrixXd T = layer.shift_net.forward_batch(XA);
    Eigen::MatrixXd XB = ((YB - T).array() * (-S).exp()).matrix();
    if (!XB.allFinite())
      throw NumericError("coupling_inverse: non-finite output");
    scatter_cols(X, layer.active_idx, XB);
  }
  return X;
}

Eigen::VectorXd coupling_inverse(const CouplingFlow& flow,
                                 const Eigen::VectorXd& y) {
  return coupling_inverse_batch(flow, y.transpose()).row(0).transpose();
}

double nf_nll(const CouplingFlow& flow, const Eigen::MatrixXd& X) {
  CouplingBatchOut out = coupling_forward_batch(flow, X);
  const double quad = 0.5 * out.Y.array().square().rowwise().sum().mean();
  return quad - out.log_det.mean() + 0.5 * flow.dim * kLog2Pi;
}

NfTrainer::NfTrainer(flow::Sampler target, int dim, const NfArch& arch,
                     const NfHyper& hyper)
    : target_(std::move(target)),
      hyper_(hyper),
      flow_(make_coupling_flow(dim, arch, hyper.seed)),
      opt_(nn::make_adam(hyper.lr)),
      rng_(hyper.seed, "nf_train") {
  if (hyper.batch < 1) throw DomainError("NfTrainer: batch must be >= 1");
}

double NfTrainer::step() {
  const int n = hyper_.batch;
  const int d = flow_.dim;
  Eigen::MatrixXd X = target_(n, rng_);
  if (X.rows() != n || X.cols() != d)
    throw DimensionError("NfTrainer: sampler returned wrong shape");

  // Forward through the stack, caching what the scale/shift backprop needs.
  const std::size_t L = flow_.layers.size();
  std::vector<nn::Workspace> ws_scale(L), ws_shift(L);
  std::vector<Eigen::MatrixXd> cache_XB(L);
  std::vector<Eigen::ArrayXXd> cache_expS(L), cache_dS(L);
  Eigen::MatrixXd Y = X;
  Eigen::VectorXd log_det = Eigen::VectorXd::Zero(n);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = flow_.layers[l];
    Eigen::MatrixXd XA = gather_cols(Y, layer.frozen_idx);
    Eigen::MatrixXd XB = gather_cols(Y, layer.active_idx);
    Eigen::MatrixXd Sraw = layer.scale_net.forward_batch(XA, &ws_scale[l]);
    Eigen::ArrayXXd Th = (Sraw.array() / flow_.scale_clamp).tanh();
    Eigen::ArrayXXd S = flow_.scale_clamp * Th;
    Eigen::MatrixXd T = layer.shift_net.forward_batch(XA, &ws_shift[l]);
    cache_XB[l] = XB;
    cache_expS[l] = S.exp();
    cache_dS[l] = 1.0 - Th.square();  // dS/dSraw
    Eigen::MatrixXd YB = (XB.array() * cache_expS[l]).matrix() + T;
    scatter_cols(Y, layer.active_idx, YB);
    log_det += S.rowwise().sum().matrix();
  }
  const double nll = 0.5 * Y.array().square().rowwise().sum().mean() -
                     log_det.mean() + 0.5 * d * kLog2Pi;
  if (!std::isfinite(nll))
    throw NumericError("nf_train: non-finite loss at step " +
                       std::to_string(steps_done_));

  // Reverse pass. G = dNLL/dY; the -mean(log_det) term feeds dNLL/dS
  // directly inside each layer.
  const double inv_n = 1.0 / n;
  Eigen::MatrixXd G = inv_n * Y;
  std::vector<Eigen::VectorXd> net_grads(2 * L);
  for (std::size_t li = L; li-- > 0;) {
    const auto& layer = flow_.layers[li];
    Eigen::MatrixXd GA = gather_cols(G, layer.frozen_idx);
    Eigen::MatrixXd GB = gather_cols(G, layer.active_idx);
    Eigen::ArrayXXd dXB = GB.array() * cache_expS[li];
    Eigen::ArrayXXd dS =
        GB.array() * cache_XB[li].array() * cache_expS[li] - inv_n;
    Eigen::MatrixXd dSraw = (dS * cache_dS[li]).matrix();
    Eigen::MatrixXd dXA_scale, dXA_shift;
    net_grads[2 * li] =
        layer.scale_net.backward_batch(ws_scale[li], dSraw, &dXA_scale);
    net_grads[2 * li + 1] =
        layer.shift_net.backward_batch(ws_shift[li], GB, &dXA_shift);
    Eigen::MatrixXd GAnew = GA + dXA_scale + dXA_shift;
    scatter_cols(G, layer.frozen_idx, GAnew);
    scatter_cols(G, layer.active_idx, dXB.matrix());
  }

  // One flat optimizer step over all nets, then scatter back.
  long total = flow_.param_count();
  Eigen::VectorXd params(total), grads(total);
  long off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    auto& sc = flow_.layers[l].scale_net;
    auto& sh = flow_.layers[l].shift_net;
    params.segment(off, sc.params.size()) = sc.params;
    grads.segment(off, sc.params.size()) = net_grads[2 * l];
    off += sc.params.size();
    params.segment(off, sh.params.size()) = sh.params;
    grads.segment(off, sh.params.size()) = net_grads[2 * l + 1];
    off += sh.params.size();
  }
  nn::optimizer_step(opt_, params, grads);
  off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    auto& sc = flow_.layers[l].scale_net;
    auto& sh = flow_.layers[l].shift_net;
    sc.params = params.segment(off, sc.params.size());
    off += sc.params.size();
    sh.params = params.segment(off, sh.params.size());
    off += sh.params.size();
  }
  flow_.train_log.emplace_back(steps_done_, nll);
  ++steps_done_;
  return nll;
}

void NfTrainer::run(long steps) {
  for (long i = 0; i < steps; ++i) step();
}

CouplingFlow nf_train(flow::Sampler target, int dim, const NfArch& arch,
                      const NfHyper& hyper) {
  NfTrainer tr(std::move(target), dim, arch, hyper);
  tr.run(hyper.steps);
  return std::move(tr).take();
}

std::unique_ptr<Preconditioner> nf_precond(CouplingFlow flow) {
  return std::make_unique<NfPrecond>(std::move(flow));
}

std::unique_ptr<Preconditioner> flow_pushforward_precond(
    flow::TrainedField low_capacity_field, int n_steps) {
  return std::make_unique<PushforwardPrecond>(std::move(low_capacity_field),
                                              n_steps);
}

Eigen::MatrixXd precondition_dataset(const Preconditioner& p,
                                     const Eigen::MatrixXd& points) {
  try {
    return p.forward_batch(points);
  } catch (const NumericError&) {
    // Identify every failing row so the caller sees all bad indices at once.
    std::string bad;
    Eigen::MatrixXd out(points.rows(), points.cols());
    for (long i = 0; i < points.rows(); ++i) {
      try {
        out.row(i) = p.forward(points.row(i).transpose()).transpose();
      } catch (const NumericError&) {
        bad += (bad.empty() ? "" : ", ") + std::to_string(i);
      }
    }
    throw NumericError("precondition_dataset: numeric failure at rows [" +
                       bad + "]");
  }
}

nlohmann::json coupling_to_json(const CouplingFlow& flow) {
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["kind"] = "normalizing_flow";
  doc["dim"] = flow.dim;
  doc["scale_clamp"] = flow.scale_clamp;
  doc["seed"] = flow.seed;
  doc["layers"] = nlohmann::json::array();
  for (const auto& l : flow.layers) {
    nlohmann::json jl;
    jl["frozen_idx"] = l.frozen_idx;
    jl["active_idx"] = l.active_idx;
    jl["scale_net"] = nn::to_checkpoint(l.scale_net, flow.seed);
    jl["shift_net"] = nn::to_checkpoint(l.shift_net, flow.seed);
    doc["layers"].push_back(jl);
  }
  return doc;
}

CouplingFlow coupling_from_json(const nlohmann::json& doc) {
  CouplingFlow f;
  f.dim = doc.at("dim").get<int>();
  f.scale_clamp = doc.at("scale_clamp").get<double>();
  f.seed = doc.value("seed", std::uint64_t{0});
  for (const auto& jl : doc.at("layers")) {
    CouplingLayer l;
    l.frozen_idx = jl.at("frozen_idx").get<std::vector<int>>();
    l.active_idx = jl.at("active_idx").get<std::vector<int>>();
    l.scale_net = nn::from_checkpoint(jl.at("scale_net"));
    l.shift_net = nn::from_checkpoint(jl.at("shift_net"));
    f.layers.push_back(std::move(l));
  }
  return f;
}

std::unique_ptr<Preconditioner> precond_from_json(const nlohmann::json& doc) {
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "identity")
    return identity_precond(doc.at("dim").get<int>());
  if (kind == "whitening") {
    const int d = doc.at("dim").get<int>();
    Eigen::VectorXd vals(d);
    auto v = doc.at("cov_eigvals").get<std::vector<double>>();
    for (int i = 0; i < d; ++i) vals[i] = v[i];
    Eigen::MatrixXd vecs(d, d);
    auto rows = doc.at("cov_eigvecs").get<std::vector<std::vector<double>>>();
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) vecs(i, j) = rows[i][j];
    Eigen::VectorXd mean(d);
    auto mv = doc.at("mean").get<std::vector<double>>();
    for (int i = 0; i < d; ++i) mean[i] = mv[i];
    linalg::SpectralMatrix S = linalg::spectral_from_parts(vals, vecs);
    return std::make_unique<WhiteningPrecond>(std::move(S),
                                              doc.at("ridge").get<double>(),
                                              std::move(mean));
  }
  if (kind == "normalizing_flow") return nf_precond(coupling_from_json(doc));
  if (kind == "flow_pushforward")
    return flow_pushforward_precond(flow::field_from_json(doc.at("field")),
                                    doc.at("n_steps").get<int>());
  throw ValidationError("unknown preconditioner kind: " + kind);
}

}  // namespace fmlab::precond
