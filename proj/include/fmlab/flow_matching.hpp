#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fmlab/mlp.hpp"
#include "fmlab/rng.hpp"
#include "json.hpp"

namespace fmlab::flow {

// Interpolation schedule x_t = s(t) x1 + c(t) x0 with s(0)=0, s(1)=1,
// c(0)=1, c(1)=0.
enum class ScheduleKind { linear, sine_cosine };

struct Schedule {
  ScheduleKind kind = ScheduleKind::linear;

  double s(double t) const;
  double c(double t) const;
  double ds(double t) const;
  double dc(double t) const;
};

Schedule schedule_from_string(const std::string& s);
std::string schedule_to_string(const Schedule& s);

struct Interp {
  Eigen::VectorXd x_t;
  Eigen::VectorXd v_star;
};

// x_t = s(t) x1 + c(t) x0 and the regression target
// v*(x_t, t) = s'(t) x1 + c'(t) x0.
Interp interpolate(const Schedule& sch, const Eigen::VectorXd& x0,
                   const Eigen::VectorXd& x1, double t);

// A point source draws n points (rows) using the caller's RNG stream.
using Sampler = std::function<Eigen::MatrixXd(int n, Rng& rng)>;

// A velocity field for integration: v(x, t).
using Field = std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)>;
// Batched form: rows of X share the same t.
using BatchField = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, double)>;

// A learned velocity field: MLP over [x, t] with the schedule it was
// trained against and its full loss log.
struct TrainedField {
  nn::Mlp model;  // input data_dim + 1, output data_dim
  Schedule schedule;
  std::vector<std::pair<long, double>> train_log;
  std::uint64_t seed = 0;
  int data_dim = 0;

  Eigen::VectorXd velocity(const Eigen::VectorXd& x, double t) const;
  Eigen::MatrixXd velocity_batch(const Eigen::MatrixXd& X, double t) const;
  Field as_field() const;
  BatchField as_batch_field() const;
};

struct TrainHyper {
  double lr = 1e-3;
  int batch = 128;
  long steps = 1000;
  std::string optimizer = "adam";
  std::uint64_t seed = 0;
};

// Incremental CFM trainer so callers can interleave evaluation with
// training without disturbing determinism (all randomness lives in streams
// derived from hyper.seed).
class CfmTrainer {
 public:
  // layer_sizes spans input (data_dim+1) through output (data_dim);
  // source == nullptr means the standard x0 ~ N(0, I) reference.
  CfmTrainer(Sampler target, Sampler source, int data_dim,
             const Schedule& schedule, const std::vector<int>& hidden,
             nn::Activation act, const TrainHyper& hyper);

  double step();        // one minibatch gradient step; returns its loss
  void run(long steps);
  long steps_done() const { return steps_done_; }
  const TrainedField& field() const { return field_; }
  TrainedField take() && { return std::move(field_); }

 private:
  Sampler target_;
  Sampler source_;
  int data_dim_;
  TrainHyper hyper_;
  TrainedField field_;
  nn::OptimizerState opt_;
  Rng rng_;
  long steps_done_ = 0;
};

// Convenience wrapper: construct, run hyper.steps, return the field.
TrainedField cfm_train(Sampler target, const Schedule& schedule,
                       int data_dim, const std::vector<int>& hidden,
                       nn::Activation act, const TrainHyper& hyper,
                       Sampler source = nullptr);

// Mean squared CFM objective of a frozen field on one batch (used by tests).
double cfm_loss(const TrainedField& field, const Eigen::MatrixXd& X0,
                const Eigen::MatrixXd& X1, const Eigen::VectorXd& ts);

enum class Method { euler, rk4 };
Method method_from_string(const std::string& s);

struct IntegrateResult {
  Eigen::VectorXd x_end;
  std::vector<Eigen::VectorXd> trajectory;  // filled when keep_trajectory
};

// Fixed-step integration of dx/dt = v(x, t) from t=0 to t=1.
IntegrateResult integrate_forward(const Field& v, const Eigen::VectorXd& x_start,
                                  int n_steps, Method method,
                                  bool keep_trajectory = false);

// Reverse-time integration from the data end (t=1) to the reference end
// (t=0): dx/dtau = -v(x, 1-tau) over tau in [0, 1]. Inverse of
// integrate_forward up to integration error.
Eigen::VectorXd integrate_backward(const Field& v, const Eigen::VectorXd& x_data,
                                   int n_steps, Method method);

// Batched variants (rows are independent states; the hot path).
Eigen::MatrixXd integrate_forward_batch(const BatchField& v,
                                        const Eigen::MatrixXd& X, int n_steps,
                                        Method method);
Eigen::MatrixXd integrate_backward_batch(const BatchField& v,
                                         const Eigen::MatrixXd& X, int n_steps,
                                         Method method);

// Serialization: the model checkpoint plus schedule and data dim.
nlohmann::json field_to_json(const TrainedField& f);
TrainedField field_from_json(const nlohmann::json& doc);

}  // namespace fmlab::flow
