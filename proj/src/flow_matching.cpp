#include "fmlab/flow_matching.hpp"

#include <cmath>

namespace fmlab::flow {

namespace {

constexpr double kHalfPi = 1.5707963267948966192313216916398;

void check_t(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("t must lie in [0, 1]");
}

}  // namespace

double Schedule::s(double t) const {
  return kind == ScheduleKind::linear ? t : std::sin(kHalfPi * t);
}

double Schedule::c(double t) const {
  return kind == ScheduleKind::linear ? 1.0 - t : std::cos(kHalfPi * t);
}

double Schedule::ds(double t) const {
  return kind == ScheduleKind::linear ? 1.0 : kHalfPi * std::cos(kHalfPi * t);
}

double Schedule::dc(double t) const {
  return kind == ScheduleKind::linear ? -1.0 : -kHalfPi * std::sin(kHalfPi * t);
}

Schedule schedule_from_string(const std::string& s) {
  Schedule sch;
  if (s == "linear") {
    sch.kind = ScheduleKind::linear;
  } else if (s == "sine_cosine") {
    sch.kind = ScheduleKind::sine_cosine;
  } else {
    throw ValidationError("unknown schedule: " + s);
  }
  return sch;
}

std::string schedule_to_string(const Schedule& s) {
  return s.kind == ScheduleKind::linear ? "linear" : "sine_cosine";
}

Interp interpolate(const Schedule& sch, const Eigen::VectorXd& x0,
                   const Eigen::VectorXd& x1, double t) {
  check_t(t);
  if (x0.size() != x1.size())
    throw DimensionError("interpolate: endpoint dims disagree");
  Interp out;
  out.x_t = sch.s(t) * x1 + sch.c(t) * x0;
  out.v_star = sch.ds(t) * x1 + sch.dc(t) * x0;
  return out;
}

Eigen::VectorXd TrainedField::velocity(const Eigen::VectorXd& x,
                                       double t) const {
  Eigen::VectorXd in(x.size() + 1);
  in.head(x.size()) = x;
  in[x.size()] = t;
  return model.forward(in);
}

Eigen::MatrixXd TrainedField::velocity_batch(const Eigen::MatrixXd& X,
                                             double t) const {
  Eigen::MatrixXd in(X.rows(), X.cols() + 1);
  in.leftCols(X.cols()) = X;
  in.col(X.cols()).setConstant(t);
  return model.forward_batch(in);
}

Field TrainedField::as_field() const {
  return [this](const Eigen::VectorXd& x, double t) {
    return velocity(x, t);
  };
}

BatchField TrainedField::as_batch_field() const {
  return [this](const Eigen::MatrixXd& X, double t) {
    return velocity_batch(X, t);
  };
}

CfmTrainer::CfmTrainer(Sampler target, Sampler source, int data_dim,
                       const Schedule& schedule, const std::vector<int>& hidden,
                       nn::Activation act, const TrainHyper& hyper)
    : target_(std::move(target)),
      source_(std::move(source)),
      data_dim_(data_dim),
      hyper_(hyper),
      opt_(nn::optimizer_from_string(hyper.optimizer, hyper.lr)),
      rng_(hyper.seed, "cfm_train") {
  if (data_dim < 1) throw DimensionError("CfmTrainer: data_dim must be >= 1");
  if (hyper.batch < 1) throw DomainError("CfmTrainer: batch must be >= 1");
  std::vector<int> sizes;
  sizes.push_back(data_dim + 1);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(data_dim);
  field_.model = nn::make_mlp(sizes, act, hyper.seed);
  field_.schedule = schedule;
  field_.seed = hyper.seed;
  field_.data_dim = data_dim;
}

double CfmTrainer::step() {
  const int n = hyper_.batch;
  const int d = data_dim_;
  // Fixed draw order per step: target batch, then source batch (standard
  // normal unless a source sampler is given), then the per-pair times.
  Eigen::MatrixXd X1 = target_(n, rng_);
  if (X1.rows() != n || X1.cols() != d)
    throw DimensionError("CfmTrainer: target sampler returned wrong shape");
  Eigen::MatrixXd X0 = source_ ? source_(n, rng_) : rng_.normal_mat(n, d);
  if (X0.rows() != n || X0.cols() != d)
    throw DimensionError("CfmTrainer: source sampler returned wrong shape");

  Eigen::MatrixXd input(n, d + 1);
  Eigen::MatrixXd target_v(n, d);
  const Schedule& sch = field_.schedule;
  for (int i = 0; i < n; ++i) {
    const double t = rng_.uniform();
    input.row(i).head(d) =
        sch.s(t) * X1.row(i) + sch.c(t) * X0.row(i);
    input(i, d) = t;
    target_v.row(i) = sch.ds(t) * X1.row(i) + sch.dc(t) * X0.row(i);
  }

  nn::Workspace ws;
  Eigen::MatrixXd Y = field_.model.forward_batch(input, &ws);
  const double scale = 1.0 / (static_cast<double>(n) * d);
  Eigen::MatrixXd R = Y - target_v;
  const double loss = R.squaredNorm() * scale;
  if (!std::isfinite(loss))
    throw NumericError("cfm_train: non-finite loss at step " +
                       std::to_string(steps_done_));
  Eigen::MatrixXd dY = (2.0 * scale) * R;
  Eigen::VectorXd g = field_.model.backward_batch(ws, dY);
  nn::optimizer_step(opt_, field_.model.params, g);
  field_.train_log.emplace_back(steps_done_, loss);
  ++steps_done_;
  return loss;
}

void CfmTrainer::run(long steps) {
  for (long i = 0; i < steps; ++i) step();
}

TrainedField cfm_train(Sampler target, const Schedule& schedule, int data_dim,
                       const std::vector<int>& hidden, nn::Activation act,
                       const TrainHyper& hyper, Sampler source) {
  if (hyper.steps < 0) throw DomainError("cfm_train: steps must be >= 0");
  CfmTrainer trainer(std::move(target), std::move(source), data_dim, schedule,
                     hidden, act, hyper);
  trainer.run(hyper.steps);
  return std::move(trainer).take();
}

double cfm_loss(const TrainedField& field, const Eigen::MatrixXd& X0,
                const Eigen::MatrixXd& X1, const Eigen::VectorXd& ts) {
  const int n = static_cast<int>(X0.rows());
  const int d = field.data_dim;
  if (X1.rows() != n || ts.size() != n)
    throw DimensionError("cfm_loss: batch sizes disagree");
  Eigen::MatrixXd input(n, d + 1);
  Eigen::MatrixXd target_v(n, d);
  for (int i = 0; i < n; ++i) {
    const double t = ts[i];
    input.row(i).head(d) =
        field.schedule.s(t) * X1.row(i) + field.schedule.c(t) * X0.row(i);
    input(i, d) = t;
    target_v.row(i) =
        field.schedule.ds(t) * X1.row(i) + field.schedule.dc(t) * X0.row(i);
  }
  Eigen::MatrixXd Y = field.model.forward_batch(input);
  return (Y - target_v).squaredNorm() / (static_cast<double>(n) * d);
}

Method method_from_string(const std::string& s) {
  if (s == "euler") return Method::euler;
  if (s == "rk4") return Method::rk4;
  throw ValidationError("unknown integration method: " + s);
}

namespace {

// Shared fixed-step driver over matrix states: dX/du = F(X, u), u from 0
// to 1. Callers encode forward/backward time through F.
Eigen::MatrixXd drive(const BatchField& F, Eigen::MatrixXd X, int n_steps,
                      Method method,
                      std::vector<Eigen::MatrixXd>* trajectory) {
  if (n_steps < 1) throw DomainError("integrate: n_steps must be >= 1");
  const double h = 1.0 / n_steps;
  if (trajectory) trajectory->push_back(X);
  for (int k = 0; k < n_steps; ++k) {
    const double u = k * h;
    if (method == Method::euler) {
      X += h * F(X, u);
    } else {
      Eigen::MatrixXd k1 = F(X, u);
      Eigen::MatrixXd k2 = F(X + 0.5 * h * k1, u + 0.5 * h);
      Eigen::MatrixXd k3 = F(X + 0.5 * h * k2, u + 0.5 * h);
      Eigen::MatrixXd k4 = F(X + h * k3, u + h);
      X += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!X.allFinite())
      throw NumericError("integrate: non-finite state at step " +
                         std::to_string(k + 1));
    if (trajectory) trajectory->push_back(X);
  }
  return X;
}

}  // namespace

IntegrateResult integrate_forward(const Field& v, const Eigen::VectorXd& x_start,
                                  int n_steps, Method method,
                                  bool keep_trajectory) {
  std::vector<Eigen::MatrixXd> traj;
  BatchField F = [&v](const Eigen::MatrixXd& X, double t) {
    Eigen::MatrixXd out(X.rows(), X.cols());
    for (long i = 0; i < X.rows(); ++i)
      out.row(i) = v(X.row(i).transpose(), t).transpose();
    return out;
  };
  Eigen::MatrixXd X = drive(F, x_start.transpose(), n_steps, method,
                            keep_trajectory ? &traj : nullptr);
  IntegrateResult res;
  res.x_end = X.row(0).transpose();
  for (const auto& m : traj) res.trajectory.push_back(m.row(0).transpose());
  return res;
}

Eigen::VectorXd integrate_backward(const Field& v, const Eigen::VectorXd& x_data,
                                   int n_steps, Method method) {
  BatchField F = [&v](const Eigen::MatrixXd& X, double tau) {
    Eigen::MatrixXd out(X.rows(), X.cols());
    for (long i = 0; i < X.rows(); ++i)
      out.row(i) = -v(X.row(i).transpose(), 1.0 - tau).transpose();
    return out;
  };
  Eigen::MatrixXd X = drive(F, x_data.transpose(), n_steps, method, nullptr);
  return X.row(0).transpose();
}

Eigen::MatrixXd integrate_forward_batch(const BatchField& v,
                                        const Eigen::MatrixXd& X, int n_steps,
                                        Method method) {
  return drive(v, X, n_steps, method, nullptr);
}

Eigen::MatrixXd integrate_backward_batch(const BatchField& v,
                                         const Eigen::MatrixXd& X, int n_steps,
                                         Method method) {
  BatchField F = [&v](const Eigen::MatrixXd& S, double tau) {
    return (-v(S, 1.0 - tau)).eval();
  };
  return drive(F, X, n_steps, method, nullptr);
}

nlohmann::json field_to_json(const TrainedField& f) {
  nlohmann::json doc = nn::to_checkpoint(f.model, f.seed);
  doc["schedule_kind"] = schedule_to_string(f.schedule);
  doc["data_dim"] = f.data_dim;
  return doc;
}

TrainedField field_from_json(const nlohmann::json& doc) {
  TrainedField f;
  std::uint64_t seed = 0;
  f.model = nn::from_checkpoint(doc, &seed);
  f.seed = seed;
  f.schedule = schedule_from_string(doc.at("schedule_kind").get<std::string>());
  f.data_dim = doc.at("data_dim").get<int>();
  if (f.model.input_dim() != f.data_dim + 1 ||
      f.model.output_dim() != f.data_dim)
    throw ValidationError("field checkpoint: model dims inconsistent with data_dim");
  return f;
}

}  // namespace fmlab::flow
