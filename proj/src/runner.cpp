#include "fmlab/runner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fmlab/gaussian_transport.hpp"
#include "fmlab/io.hpp"
#include "fmlab/metrics.hpp"
#include "fmlab/mixture_transport.hpp"
#include "fmlab/rng.hpp"

namespace fmlab::run {

namespace {

const char* kVersion = "0.1.0";

std::vector<double> default_grid(double lo, double hi, double step) {
  std::vector<double> ts;
  const long n = std::lround((hi - lo) / step);
  for (long i = 0; i <= n; ++i) ts.push_back(lo + step * static_cast<double>(i));
  return ts;
}

nlohmann::json grid_json(const std::vector<double>& ts) {
  nlohmann::json a = nlohmann::json::array();
  for (double t : ts) a.push_back(t);
  return a;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

// ----- dataset spec defaults & validation ------------------------------

nlohmann::json normalize_dataset_spec(nlohmann::json spec) {
  require(spec.is_object() && spec.contains("kind"),
          "dataset spec must be an object with a \"kind\"");
  const std::string kind = spec.at("kind").get<std::string>();
  if (kind == "gaussian") {
    require(spec.contains("eigvals"), "gaussian spec needs \"eigvals\"");
    for (double v : spec.at("eigvals").get<std::vector<double>>())
      require(v > 0.0, "gaussian eigvals must be positive");
  } else if (kind == "gmm") {
    require(spec.contains("weights") && spec.contains("components"),
            "gmm spec needs \"weights\" and \"components\"");
  } else if (kind == "swiss_roll") {
    if (!spec.contains("noise")) spec["noise"] = 0.05;
    require(spec.at("noise").get<double>() >= 0.0,
            "swiss_roll noise must be >= 0");
  } else if (kind == "checkerboard") {
    // no parameters
  } else {
    throw ValidationError("unknown dataset kind: " + kind);
  }
  return spec;
}

nlohmann::json normalize_precond_spec(nlohmann::json spec) {
  if (spec.is_null()) spec = nlohmann::json{{"kind", "none"}};
  if (spec.is_string()) spec = nlohmann::json{{"kind", spec}};
  require(spec.is_object() && spec.contains("kind"),
          "preconditioner spec must be \"none\" or an object with a \"kind\"");
  const std::string kind = spec.at("kind").get<std::string>();
  if (kind == "none") {
    // nothing
  } else if (kind == "whitening") {
    if (!spec.contains("ridge")) spec["ridge"] = 1e-6;
    if (!spec.contains("fit_n")) spec["fit_n"] = 4096;
    if (!spec.contains("centered")) spec["centered"] = false;
    require(spec.at("ridge").get<double>() >= 0.0, "whitening ridge >= 0");
    require(spec.at("fit_n").get<long>() >= 2, "whitening fit_n >= 2");
  } else if (kind == "normalizing_flow") {
    if (!spec.contains("n_layers")) spec["n_layers"] = 6;
    if (!spec.contains("hidden")) spec["hidden"] = {32, 32};
    if (!spec.contains("scale_clamp")) spec["scale_clamp"] = 3.0;
    if (!spec.contains("steps")) spec["steps"] = 3000;
    if (!spec.contains("batch")) spec["batch"] = 256;
    if (!spec.contains("lr")) spec["lr"] = 1e-3;
    require(spec.at("n_layers").get<int>() >= 2 &&
                spec.at("n_layers").get<int>() % 2 == 0,
            "normalizing_flow n_layers must be even and >= 2");
    require(spec.at("steps").get<long>() >= 0, "normalizing_flow steps >= 0");
  } else if (kind == "flow_pushforward") {
    if (!spec.contains("hidden")) spec["hidden"] = {27};
    if (!spec.contains("steps")) spec["steps"] = 3000;
    if (!spec.contains("batch")) spec["batch"] = 128;
    if (!spec.contains("lr")) spec["lr"] = 1e-3;
    if (!spec.contains("optimizer")) spec["optimizer"] = "adam";
    if (!spec.contains("integrate_steps")) spec["integrate_steps"] = 40;
    require(spec.at("integrate_steps").get<int>() >= 1,
            "flow_pushforward integrate_steps >= 1");
    require(spec.at("steps").get<long>() >= 0, "flow_pushforward steps >= 0");
  } else {
    throw ValidationError("unknown preconditioner kind: " + kind);
  }
  return spec;
}

std::vector<double> grid_from(const nlohmann::json& cfg, const char* key,
                              std::vector<double> fallback) {
  if (!cfg.contains(key)) return fallback;
  return cfg.at(key).get<std::vector<double>>();
}

// ----- artifact emission -------------------------------------------------

class Emitter {
 public:
  explicit Emitter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void csv(const std::string& rel, const io::CsvWriter& w) {
    io::write_text_file(dir_ / rel, w.str());
    files_.push_back(rel);
  }
  void text(const std::string& rel, const std::string& content) {
    io::write_text_file(dir_ / rel, content);
    files_.push_back(rel);
  }
  const std::vector<std::string>& files() const { return files_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

std::string fd(double v) { return io::format_double(v); }

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
  long n = 0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  r.n = static_cast<long>(xs.size());
  if (r.n == 0) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(r.n);
  if (r.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(r.n - 1));
  }
  return r;
}

}  // namespace

// ----- config ------------------------------------------------------------

ExperimentConfig config_from_json(nlohmann::json doc) {
  require(doc.is_object(), "config must be a JSON object");
  require(doc.contains("experiment"), "config needs \"experiment\"");
  ExperimentConfig cfg;
  cfg.experiment = doc.at("experiment").get<std::string>();
  static const std::set<std::string> kExperiments = {
      "gaussian_analytic", "theorem1",         "gmm_bottleneck",
      "fm_2d",             "precond_compare",  "kappa_diagnostic",
      "checkerboard_swissroll"};
  require(kExperiments.count(cfg.experiment) == 1,
          "unknown experiment: " + cfg.experiment);

  // Experiment-specific default target / source / budgets.
  if (!doc.contains("target")) {
    if (cfg.experiment == "fm_2d")
      doc["target"] = {{"kind", "swiss_roll"}, {"noise", 0.05}};
    else if (cfg.experiment == "checkerboard_swissroll")
      doc["target"] = {{"kind", "swiss_roll"}, {"noise", 0.05}};
    else if (cfg.experiment == "gmm_bottleneck")
      doc["target"] = {
          {"kind", "gmm"},
          {"weights", {0.5, 0.5}},
          {"components",
           {{{"eigvals", {1.0, 100.0}}},
            {{"eigvals", {1.0, 100.0}}, {"rotation_seed", 11}}}}};
    else if (cfg.experiment == "gaussian_analytic")
      doc["target"] = {{"kind", "gaussian"}, {"eigvals", {1.0, 1000.0}}};
    else
      doc["target"] = {{"kind", "gaussian"}, {"eigvals", {1.0, 100.0}}};
  }
  if (cfg.experiment == "checkerboard_swissroll" && !doc.contains("source"))
    doc["source"] = {{"kind", "checkerboard"}};

  if (!doc.contains("schedule")) doc["schedule"] = "linear";
  if (!doc.contains("model"))
    doc["model"] = {{"hidden", {64, 64}}, {"activation", "tanh"}};
  if (!doc["model"].contains("hidden")) doc["model"]["hidden"] = {64, 64};
  if (!doc["model"].contains("activation"))
    doc["model"]["activation"] = "tanh";
  if (!doc.contains("hyper")) doc["hyper"] = nlohmann::json::object();
  if (!doc["hyper"].contains("lr")) doc["hyper"]["lr"] = 1e-3;
  if (!doc["hyper"].contains("batch")) doc["hyper"]["batch"] = 128;
  if (!doc["hyper"].contains("steps")) {
    doc["hyper"]["steps"] =
        cfg.experiment == "precond_compare" ? 10000 : 5000;
  }
  if (!doc["hyper"].contains("optimizer")) doc["hyper"]["optimizer"] = "adam";
  if (!doc.contains("precond")) doc["precond"] = {{"kind", "none"}};
  if (!doc.contains("seeds")) doc["seeds"] = {1};
  if (!doc.contains("output_dir")) doc["output_dir"] = "";

  // Evaluation knobs for the training experiments.
  if (cfg.experiment == "fm_2d" || cfg.experiment == "precond_compare" ||
      cfg.experiment == "checkerboard_swissroll") {
    if (!doc.contains("eval_every")) doc["eval_every"] = 500;
    if (!doc.contains("eval_n")) doc["eval_n"] = 512;
    if (!doc.contains("eval_steps")) doc["eval_steps"] = 40;
    if (!doc.contains("final_n")) doc["final_n"] = 2000;
    if (!doc.contains("final_steps")) doc["final_steps"] = 80;
    if (!doc.contains("sliced_projections")) doc["sliced_projections"] = 128;
  }
  if (cfg.experiment == "gaussian_analytic") {
    if (!doc.contains("ts")) doc["ts"] = grid_json(default_grid(0.01, 0.99, 0.01));
    if (!doc.contains("gd_t")) doc["gd_t"] = 0.9;
    if (!doc.contains("gd_steps")) doc["gd_steps"] = 400;
    if (!doc.contains("eta_scale")) doc["eta_scale"] = 0.5;
    if (!doc.contains("eps")) doc["eps"] = 1e-6;
  }
  if (cfg.experiment == "theorem1") {
    if (!doc.contains("kappas")) doc["kappas"] = {10.0, 100.0, 1000.0};
    if (!doc.contains("dim")) doc["dim"] = 2;
    if (!doc.contains("eps")) doc["eps"] = 1e-6;
    if (!doc.contains("eta_rule")) doc["eta_rule"] = "half_inverse_lambda_max";
  }
  if (cfg.experiment == "gmm_bottleneck") {
    if (!doc.contains("ts")) doc["ts"] = grid_json(default_grid(0.1, 0.9, 0.1));
    if (!doc.contains("t_star")) doc["t_star"] = 0.7;
    if (!doc.contains("gd_steps")) doc["gd_steps"] = 300;
  }
  if (cfg.experiment == "kappa_diagnostic") {
    if (!doc.contains("ts")) doc["ts"] = grid_json(default_grid(0.1, 0.9, 0.1));
    if (!doc.contains("n_pairs")) doc["n_pairs"] = 100000;
    if (!doc.contains("n_points")) doc["n_points"] = 20000;
    if (!doc.contains("arms"))
      doc["arms"] = {nlohmann::json{{"kind", "none"}},
                     nlohmann::json{{"kind", "whitening"}}};
  }
  if (cfg.experiment == "precond_compare" && !doc.contains("arms"))
    doc["arms"] = {nlohmann::json{{"kind", "none"}},
                   nlohmann::json{{"kind", "whitening"}},
                   nlohmann::json{{"kind", "normalizing_flow"}},
                   nlohmann::json{{"kind", "flow_pushforward"}}};

  // Normalize nested specs (fills their defaults).
  doc["target"] = normalize_dataset_spec(doc["target"]);
  if (doc.contains("source") && !doc["source"].is_null())
    doc["source"] = normalize_dataset_spec(doc["source"]);
  doc["precond"] = normalize_precond_spec(doc["precond"]);
  if (doc.contains("arms")) {
    require(doc["arms"].is_array() && !doc["arms"].empty(),
            "\"arms\" must be a non-empty array of preconditioner specs");
    for (auto& arm : doc["arms"]) arm = normalize_precond_spec(arm);
  }

  cfg.target = doc["target"];
  cfg.source = doc.contains("source") ? doc["source"] : nlohmann::json();
  cfg.schedule = doc["schedule"].get<std::string>();
  cfg.model = doc["model"];
  cfg.precond = doc["precond"];
  cfg.hyper = doc["hyper"];
  cfg.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
  cfg.output_dir = doc["output_dir"].get<std::string>();
  cfg.raw = doc;

  // Fail-fast: everything referenced must construct before compute starts.
  require(!cfg.seeds.empty(), "seed list must be non-empty");
  flow::schedule_from_string(cfg.schedule);
  nn::activation_from_string(cfg.model.at("activation").get<std::string>());
  const auto hidden = cfg.model.at("hidden").get<std::vector<int>>();
  require(!hidden.empty(), "model hidden layers must be non-empty");
  for (int h : hidden) require(h >= 1, "hidden layer sizes must be >= 1");
  require(cfg.hyper.at("lr").get<double>() > 0.0, "hyper.lr must be > 0");
  require(cfg.hyper.at("batch").get<int>() >= 1, "hyper.batch must be >= 1");
  require(cfg.hyper.at("steps").get<long>() >= 1, "hyper.steps must be >= 1");
  nn::optimizer_from_string(cfg.hyper.at("optimizer").get<std::string>(),
                            cfg.hyper.at("lr").get<double>());
  sampler_from_spec(cfg.target);  // constructs (and checks PD etc.)
  if (!cfg.source.is_null()) sampler_from_spec(cfg.source);
  if (cfg.experiment == "gmm_bottleneck")
    require(cfg.target.at("kind") == "gmm",
            "gmm_bottleneck requires a gmm target");
  if (cfg.experiment == "gaussian_analytic")
    require(cfg.target.at("kind") == "gaussian",
            "gaussian_analytic requires a gaussian target");
  if (cfg.experiment == "kappa_diagnostic") {
    for (double t : cfg.raw.at("ts").get<std::vector<double>>())
      require(t > 0.0 && t < 1.0, "kappa_diagnostic grid must lie in (0,1)");
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  return config_from_json(io::read_json_file(path));
}

std::string config_hash(const ExperimentConfig& cfg) {
  nlohmann::json doc = cfg.raw;
  doc.erase("output_dir");
  return io::config_hash_hex(doc);
}

nlohmann::json manifest_to_json(const RunManifest& m) {
  return {{"format_version", 1},
          {"config_hash", m.config_hash},
          {"started_at", m.started_at},
          {"finished_at", m.finished_at},
          {"emitted_files", m.emitted_files},
          {"versions", m.versions}};
}

RunManifest manifest_from_json(const nlohmann::json& doc) {
  RunManifest m;
  m.config_hash = doc.at("config_hash").get<std::string>();
  m.started_at = doc.at("started_at").get<std::string>();
  m.finished_at = doc.at("finished_at").get<std::string>();
  m.emitted_files = doc.at("emitted_files").get<std::vector<std::string>>();
  m.versions = doc.at("versions");
  return m;
}

// ----- spec builders -------------------------------------------------------

linalg::SpectralMatrix spd_from_spec(const nlohmann::json& spec) {
  require(spec.at("kind") == "gaussian",
          "spd_from_spec expects a gaussian dataset spec");
  std::vector<double> vals = spec.at("eigvals").get<std::vector<double>>();
  std::sort(vals.begin(), vals.end());
  const int d = static_cast<int>(vals.size());
  require(d >= 1, "gaussian eigvals must be non-empty");
  Eigen::VectorXd ev(d);
  for (int i = 0; i < d; ++i) {
    require(vals[i] > 0.0, "gaussian eigvals must be positive");
    ev[i] = vals[i];
  }
  Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(d, d);
  if (spec.contains("rotation_seed")) {
    Rng rng(spec.at("rotation_seed").get<std::uint64_t>(), "rotation");
    const Eigen::MatrixXd G = rng.normal_mat(d, d);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
    basis = qr.householderQ();
    const Eigen::MatrixXd R =
        qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < d; ++j)
      if (R(j, j) < 0) basis.col(j) = -basis.col(j);
  }
  return linalg::spectral_from_parts(ev, basis);
}

gmm::ZeroMeanGmm gmm_from_spec(const nlohmann::json& spec) {
  require(spec.at("kind") == "gmm", "gmm_from_spec expects a gmm spec");
  const auto wlist = spec.at("weights").get<std::vector<double>>();
  Eigen::VectorXd w(wlist.size());
  for (std::size_t i = 0; i < wlist.size(); ++i) w[i] = wlist[i];
  std::vector<linalg::SpectralMatrix> comps;
  for (const auto& c : spec.at("components")) {
    nlohmann::json cs = c;
    cs["kind"] = "gaussian";
    comps.push_back(spd_from_spec(cs));
  }
  return gmm::make_gmm(w, comps);
}

std::pair<flow::Sampler, int> sampler_from_spec(const nlohmann::json& spec) {
  const std::string kind = spec.at("kind").get<std::string>();
  if (kind == "gaussian") {
    linalg::SpectralMatrix H = spd_from_spec(spec);
    const int d = H.dim;
    return {data::gaussian_sampler(std::move(H)), d};
  }
  if (kind == "gmm") {
    gmm::ZeroMeanGmm g = gmm_from_spec(spec);
    const int d = g.dim;
    return {data::gmm_sampler(std::move(g)), d};
  }
  if (kind == "swiss_roll")
    return {data::swiss_roll_sampler(spec.at("noise").get<double>()), 2};
  if (kind == "checkerboard") return {data::checkerboard_sampler(), 2};
  throw ValidationError("unknown dataset kind: " + kind);
}

data::LabeledPoints labeled_from_spec(const nlohmann::json& spec, long n,
                                      std::uint64_t seed) {
  const std::string kind = spec.at("kind").get<std::string>();
  if (kind == "gaussian") return data::gaussian_sample(spd_from_spec(spec), n, seed);
  if (kind == "gmm") return data::gmm_sample(gmm_from_spec(spec), n, seed);
  if (kind == "swiss_roll")
    return data::swiss_roll(n, spec.at("noise").get<double>(), seed);
  if (kind == "checkerboard") return data::checkerboard(n, seed);
  throw ValidationError("unknown dataset kind: " + kind);
}

std::unique_ptr<precond::Preconditioner> fit_preconditioner(
    const nlohmann::json& precond_spec, const nlohmann::json& target_spec,
    const flow::Schedule& schedule, std::uint64_t seed) {
  const nlohmann::json spec = normalize_precond_spec(precond_spec);
  auto [target, dim] = sampler_from_spec(target_spec);
  const std::string kind = spec.at("kind").get<std::string>();
  if (kind == "none") return precond::identity_precond(dim);
  if (kind == "whitening") {
    Rng rng(seed, "precond_fit");
    const Eigen::MatrixXd X = target(spec.at("fit_n").get<int>(), rng);
    return precond::whitening_from_data(X, spec.at("ridge").get<double>(),
                                        spec.at("centered").get<bool>());
  }
  if (kind == "normalizing_flow") {
    precond::NfArch arch;
    arch.n_layers = spec.at("n_layers").get<int>();
    arch.hidden = spec.at("hidden").get<std::vector<int>>();
    arch.scale_clamp = spec.at("scale_clamp").get<double>();
    precond::NfHyper hyper;
    hyper.lr = spec.at("lr").get<double>();
    hyper.batch = spec.at("batch").get<int>();
    hyper.steps = spec.at("steps").get<long>();
    hyper.seed = Rng(seed, "precond_nf").next_u64();
    return precond::nf_precond(
        precond::nf_train(std::move(target), dim, arch, hyper));
  }
  if (kind == "flow_pushforward") {
    flow::TrainHyper hyper;
    hyper.lr = spec.at("lr").get<double>();
    hyper.batch = spec.at("batch").get<int>();
    hyper.steps = spec.at("steps").get<long>();
    hyper.optimizer = spec.at("optimizer").get<std::string>();
    hyper.seed = Rng(seed, "precond_field").next_u64();
    flow::TrainedField field =
        flow::cfm_train(std::move(target), schedule, dim,
                        spec.at("hidden").get<std::vector<int>>(),
                        nn::Activation::tanh_act, hyper);
    return precond::flow_pushforward_precond(
        std::move(field), spec.at("integrate_steps").get<int>());
  }
  throw ValidationError("unknown preconditioner kind: " + kind);
}

// ----- the pipeline --------------------------------------------------------

PipelineResult run_pipeline(const PipelinePlan& plan, std::uint64_t seed) {
  auto [target, dim] = sampler_from_spec(plan.target);
  flow::Sampler source = nullptr;
  if (!plan.source.is_null()) source = sampler_from_spec(plan.source).first;

  auto P = fit_preconditioner(plan.precond_spec, plan.target, plan.schedule,
                              seed);
  // The velocity model is trained against the preconditioned target.
  flow::Sampler shared_target = target;
  const precond::Preconditioner* Praw = P.get();
  flow::Sampler ptarget = [shared_target, Praw](int n, Rng& rng) {
    return Praw->forward_batch(shared_target(n, rng));
  };

  flow::TrainHyper hyper = plan.hyper;
  hyper.seed = seed;
  flow::CfmTrainer trainer(ptarget, source, dim, plan.schedule, plan.hidden,
                           plan.act, hyper);

  // Fixed evaluation fixtures: one reference sample, one set of source
  // points reused at every curve eval (common random numbers across steps).
  Rng ref_rng(seed, "eval_ref");
  const Eigen::MatrixXd X_ref = target(plan.final_n, ref_rng);
  const double med = metrics::median_pairwise_distance(X_ref, X_ref);
  const metrics::BandwidthSpec bw = metrics::BandwidthSpec::explicit_list(
      {0.5 * med, 1.0 * med, 2.0 * med});
  Rng eval_src_rng(seed, "eval_source");
  const Eigen::MatrixXd Z_eval = source
                                     ? source(plan.eval_n, eval_src_rng)
                                     : eval_src_rng.normal_mat(plan.eval_n, dim);

  PipelineResult res;
  res.precond_kind = plan.precond_spec.at("kind").get<std::string>();
  res.seed = seed;

  auto eval_mmd = [&](long step) {
    const Eigen::MatrixXd Y =
        flow::integrate_forward_batch(trainer.field().as_batch_field(),
                                      Z_eval, plan.eval_steps,
                                      flow::Method::rk4);
    const Eigen::MatrixXd X_gen = Praw->inverse_batch(Y);
    res.mmd_curve.emplace_back(step, metrics::mmd_rbf(X_gen, X_ref, bw).value);
  };

  if (plan.eval_every > 0) eval_mmd(0);
  for (long step = 1; step <= plan.hyper.steps; ++step) {
    trainer.step();
    if (plan.eval_every > 0 &&
        (step % plan.eval_every == 0 || step == plan.hyper.steps))
      eval_mmd(step);
  }

  // Final evaluation at the full budget on fresh, larger samples.
  Rng final_src_rng(seed, "final_source");
  const Eigen::MatrixXd Z_final =
      source ? source(plan.final_n, final_src_rng)
             : final_src_rng.normal_mat(plan.final_n, dim);
  const Eigen::MatrixXd Y_final =
      flow::integrate_forward_batch(trainer.field().as_batch_field(), Z_final,
                                    plan.final_steps, flow::Method::rk4);
  res.final_samples = Praw->inverse_batch(Y_final);
  res.final_mmd = metrics::mmd_rbf(res.final_samples, X_ref, bw).value;
  res.final_sliced_forward =
      metrics::sliced_distance(res.final_samples, X_ref,
                               plan.sliced_projections,
                               Rng(seed, "sliced_fwd").next_u64())
          .value;

  // Reverse direction: map held-out data back to the source end.
  Rng rev_rng(seed, "reverse_data");
  const Eigen::MatrixXd X_data = target(plan.final_n, rev_rng);
  const Eigen::MatrixXd Z_hat = flow::integrate_backward_batch(
      trainer.field().as_batch_field(), Praw->forward_batch(X_data),
      plan.final_steps, flow::Method::rk4);
  Rng rev_ref_rng(seed, "reverse_ref");
  const Eigen::MatrixXd Z_ref =
      source ? source(plan.final_n, rev_ref_rng)
             : rev_ref_rng.normal_mat(plan.final_n, dim);
  res.final_sliced_reverse =
      metrics::sliced_distance(Z_hat, Z_ref, plan.sliced_projections,
                               Rng(seed, "sliced_rev").next_u64())
          .value;

  res.loss_curve = trainer.field().train_log;
  res.field = std::move(trainer).take();
  return res;
}

// ----- experiments -----------------------------------------------------

namespace {

void run_gaussian_analytic(const ExperimentConfig& cfg, Emitter& em) {
  const gauss::GaussianTransport m =
      gauss::make_transport(spd_from_spec(cfg.target));
  const auto ts = cfg.raw.at("ts").get<std::vector<double>>();
  const double eta_scale = cfg.raw.at("eta_scale").get<double>();
  const double eps = cfg.raw.at("eps").get<double>();

  io::CsvWriter kappa({"t", "kappa"});
  for (auto [t, k] : gauss::condition_trajectory(m, ts))
    kappa.add_row({fd(t), fd(k)});
  em.csv("condition_trajectory.csv", kappa);

  io::CsvWriter spectrum({"t", "mode", "sigma"});
  for (double t : ts) {
    const Eigen::VectorXd sig = gauss::sigma_eigenvalues(m, t);
    for (int i = 0; i < m.dim; ++i)
      spectrum.add_row({fd(t), std::to_string(i), fd(sig[i])});
  }
  em.csv("sigma_spectrum.csv", spectrum);

  io::CsvWriter pred({"t", "eta", "predicted_exact", "predicted_approx"});
  for (double t : ts) {
    const double eta = eta_scale / gauss::sigma_eigenvalues(m, t).maxCoeff();
    const auto p = gauss::predicted_gd_iterations(m, t, eta, eps);
    pred.add_row({fd(t), fd(eta), fd(p.exact), fd(p.approx)});
  }
  em.csv("predicted_iterations.csv", pred);

  const double gd_t = cfg.raw.at("gd_t").get<double>();
  const int gd_steps = cfg.raw.at("gd_steps").get<int>();
  const double eta =
      eta_scale / gauss::sigma_eigenvalues(m, gd_t).maxCoeff();
  const gauss::GdTrace tr = gauss::gd_simulate(
      m, gd_t, eta, gd_steps, Eigen::MatrixXd::Zero(m.dim, m.dim));
  std::vector<std::string> head = {"step", "frobenius"};
  for (int i = 0; i < m.dim; ++i) head.push_back("mode_" + std::to_string(i));
  io::CsvWriter gd(head);
  for (int k = 0; k <= gd_steps; ++k) {
    std::vector<std::string> row = {std::to_string(k),
                                    fd(tr.frobenius_errors[k])};
    for (int i = 0; i < m.dim; ++i)
      row.push_back(fd(std::abs(tr.per_mode_errors(i, k))));
    gd.add_row(row);
  }
  em.csv("gd_decay.csv", gd);
}

void run_theorem1(const ExperimentConfig& cfg, Emitter& em) {
  const auto kappas = cfg.raw.at("kappas").get<std::vector<double>>();
  const int d = cfg.raw.at("dim").get<int>();
  const double eps = cfg.raw.at("eps").get<double>();
  const std::string rule_name = cfg.raw.at("eta_rule").get<std::string>();
  const gauss::EtaRule rule =
      rule_name == "inverse_lambda_max"
          ? gauss::EtaRule::inverse_lambda_max
          : gauss::EtaRule::half_inverse_lambda_max;

  io::CsvWriter out({"kappa", "eta_plain", "iters_plain", "eta_whitened",
                     "iters_whitened"});
  for (double kap : kappas) {
    // Eigenvalues log-spaced from 1 to kappa.
    Eigen::VectorXd ev(d);
    for (int i = 0; i < d; ++i)
      ev[i] = d == 1 ? kap
                     : std::exp(std::log(kap) * static_cast<double>(i) /
                                static_cast<double>(d - 1));
    const linalg::SpectralMatrix Sigma = linalg::spectral_from_parts(
        ev, Eigen::MatrixXd::Identity(d, d));
    const gauss::Theorem1Result r =
        gauss::theorem1_experiment(Sigma, rule, eps);
    out.add_row({fd(kap), fd(r.eta_plain), std::to_string(r.k_plain),
                 fd(r.eta_whitened), std::to_string(r.k_whitened)});
  }
  em.csv("theorem1.csv", out);
}

void run_gmm_bottleneck(const ExperimentConfig& cfg, Emitter& em) {
  const gmm::ZeroMeanGmm g = gmm_from_spec(cfg.target);
  const auto ts = cfg.raw.at("ts").get<std::vector<double>>();
  const int K = static_cast<int>(g.components.size());

  io::CsvWriter cond({"t", "component", "sigma_min", "sigma_max", "kappa"});
  io::CsvWriter wcond({"t", "component", "kappa"});
  io::CsvWriter slow({"t", "component", "mode", "sigma"});
  for (double t : ts) {
    for (int k = 0; k < K; ++k) {
      const linalg::SpectralMatrix S = gmm::component_sigma_t(g, k, t);
      cond.add_row({fd(t), std::to_string(k), fd(S.eigvals.minCoeff()),
                    fd(S.eigvals.maxCoeff()), fd(linalg::cond_number(S))});
      // After per-component whitening every component's path covariance is
      // isotropic, so its condition number is exactly 1.
      wcond.add_row({fd(t), std::to_string(k), fd(1.0)});
    }
    const gmm::SlowestMode sm = gmm::slowest_mode(g, t);
    slow.add_row({fd(t), std::to_string(sm.component),
                  std::to_string(sm.mode), fd(sm.sigma)});
  }
  em.csv("gmm_condition.csv", cond);
  em.csv("whitened_condition.csv", wcond);
  em.csv("slowest_mode.csv", slow);

  const double t_star = cfg.raw.at("t_star").get<double>();
  const int steps = cfg.raw.at("gd_steps").get<int>();
  double sigma_max = 0.0;
  for (int k = 0; k < K; ++k)
    sigma_max = std::max(
        sigma_max, gmm::component_sigma_t(g, k, t_star).eigvals.maxCoeff());
  const double eta_plain = 0.5 / sigma_max;
  const double iso = (1.0 - t_star) * (1.0 - t_star) + t_star * t_star;
  const double eta_white = 0.5 / iso;
  const auto plain = gmm::gated_gd_simulate(g, t_star, eta_plain, steps, false);
  const auto white = gmm::gated_gd_simulate(g, t_star, eta_white, steps, true);
  io::CsvWriter gd({"step", "component", "frobenius_plain",
                    "frobenius_whitened"});
  for (int s = 0; s <= steps; ++s)
    for (int k = 0; k < K; ++k)
      gd.add_row({std::to_string(s), std::to_string(k),
                  fd(plain[k].frobenius_errors[s]),
                  fd(white[k].frobenius_errors[s])});
  em.csv("gated_gd.csv", gd);
}

PipelinePlan plan_from_config(const ExperimentConfig& cfg) {
  PipelinePlan plan;
  plan.target = cfg.target;
  plan.source = cfg.source;
  plan.precond_spec = cfg.precond;
  plan.schedule = flow::schedule_from_string(cfg.schedule);
  plan.hidden = cfg.model.at("hidden").get<std::vector<int>>();
  plan.act =
      nn::activation_from_string(cfg.model.at("activation").get<std::string>());
  plan.hyper.lr = cfg.hyper.at("lr").get<double>();
  plan.hyper.batch = cfg.hyper.at("batch").get<int>();
  plan.hyper.steps = cfg.hyper.at("steps").get<long>();
  plan.hyper.optimizer = cfg.hyper.at("optimizer").get<std::string>();
  plan.eval_every = cfg.raw.at("eval_every").get<long>();
  plan.eval_n = cfg.raw.at("eval_n").get<int>();
  plan.eval_steps = cfg.raw.at("eval_steps").get<int>();
  plan.final_n = cfg.raw.at("final_n").get<int>();
  plan.final_steps = cfg.raw.at("final_steps").get<int>();
  plan.sliced_projections = cfg.raw.at("sliced_projections").get<int>();
  return plan;
}

void emit_pipeline_csvs(const std::vector<PipelineResult>& results,
                        Emitter& em, bool emit_samples) {
  io::CsvWriter loss({"arm", "seed", "step", "loss"});
  io::CsvWriter mmd({"arm", "seed", "step", "mmd"});
  io::CsvWriter fin({"arm", "seed", "direction", "metric", "value"});
  io::CsvWriter plateau({"arm", "seed", "mmd_initial", "mmd_final",
                         "total_improvement", "tail_improvement",
                         "tail_fraction"});
  for (const auto& r : results) {
    const std::string seed = std::to_string(r.seed);
    for (auto [step, v] : r.loss_curve)
      loss.add_row({r.precond_kind, seed, std::to_string(step), fd(v)});
    for (auto [step, v] : r.mmd_curve)
      mmd.add_row({r.precond_kind, seed, std::to_string(step), fd(v)});
    fin.add_row({r.precond_kind, seed, "z_to_x1", "mmd", fd(r.final_mmd)});
    fin.add_row({r.precond_kind, seed, "z_to_x1", "sliced",
                 fd(r.final_sliced_forward)});
    fin.add_row({r.precond_kind, seed, "x1_to_z", "sliced",
                 fd(r.final_sliced_reverse)});
    if (!r.mmd_curve.empty()) {
      const double m0 = r.mmd_curve.front().second;
      const double mf = r.mmd_curve.back().second;
      const long last_step = r.mmd_curve.back().first;
      double m75 = m0;
      for (const auto& [step, v] : r.mmd_curve)
        if (step <= (3 * last_step) / 4) m75 = v;
      const double total = m0 - mf;
      const double tail = m75 - mf;
      plateau.add_row({r.precond_kind, seed, fd(m0), fd(mf), fd(total),
                       fd(tail), fd(total > 0.0 ? tail / total : 1.0)});
    }
  }
  em.csv("loss_curves.csv", loss);
  em.csv("mmd_curves.csv", mmd);
  em.csv("final_distances.csv", fin);
  em.csv("plateau_report.csv", plateau);

  // Aggregate final metrics per (arm, direction, metric), seeds pooled.
  io::CsvWriter agg({"arm", "direction", "metric", "mean", "std", "n_seeds"});
  std::vector<std::string> arm_order;
  for (const auto& r : results)
    if (std::find(arm_order.begin(), arm_order.end(), r.precond_kind) ==
        arm_order.end())
      arm_order.push_back(r.precond_kind);
  const std::vector<std::pair<std::string, std::string>> slots = {
      {"z_to_x1", "mmd"}, {"z_to_x1", "sliced"}, {"x1_to_z", "sliced"}};
  for (const auto& arm : arm_order)
    for (const auto& [dir, met] : slots) {
      std::vector<double> vals;
      for (const auto& r : results) {
        if (r.precond_kind != arm) continue;
        if (dir == "z_to_x1" && met == "mmd") vals.push_back(r.final_mmd);
        if (dir == "z_to_x1" && met == "sliced")
          vals.push_back(r.final_sliced_forward);
        if (dir == "x1_to_z" && met == "sliced")
          vals.push_back(r.final_sliced_reverse);
      }
      const MeanStd s = mean_std(vals);
      agg.add_row({arm, dir, met, fd(s.mean), fd(s.stddev),
                   std::to_string(s.n)});
    }
  em.csv("final_aggregate.csv", agg);

  if (emit_samples)
    for (const auto& r : results) {
      data::LabeledPoints pts;
      pts.points = r.final_samples;
      pts.dim = static_cast<int>(r.final_samples.cols());
      pts.seed = r.seed;
      pts.generator_id = "generated";
      em.text("samples_" + r.precond_kind + "_seed" +
                  std::to_string(r.seed) + ".csv",
              data::to_csv(pts));
    }
}

void run_training_experiment(const ExperimentConfig& cfg, Emitter& em) {
  const PipelinePlan base = plan_from_config(cfg);
  std::vector<nlohmann::json> arms;
  if (cfg.raw.contains("arms"))
    for (const auto& a : cfg.raw.at("arms")) arms.push_back(a);
  else
    arms.push_back(cfg.precond);

  std::vector<PipelineResult> results;
  for (const auto& arm : arms)
    for (std::uint64_t seed : cfg.seeds) {
      PipelinePlan plan = base;
      plan.precond_spec = arm;
      results.push_back(run_pipeline(plan, seed));
    }
  const bool emit_samples = cfg.experiment != "precond_compare";
  emit_pipeline_csvs(results, em, emit_samples);

  if (cfg.experiment == "precond_compare") {
    const auto rows = compare_runs({em.dir()});
    em.text("comparison_table.csv", compare_table_csv(rows));
  }
}

void run_kappa_diagnostic(const ExperimentConfig& cfg, Emitter& em) {
  const auto ts = cfg.raw.at("ts").get<std::vector<double>>();
  const long n_pairs = cfg.raw.at("n_pairs").get<long>();
  const long n_points = cfg.raw.at("n_points").get<long>();
  const flow::Schedule sched = flow::schedule_from_string(cfg.schedule);
  std::vector<nlohmann::json> arms;
  for (const auto& a : cfg.raw.at("arms")) arms.push_back(a);

  io::CsvWriter emp({"arm", "seed", "t", "kappa_hat"});
  std::map<std::pair<std::string, double>, std::vector<double>> pool;
  std::vector<std::string> arm_order;
  for (const auto& arm : arms) {
    const std::string kind = arm.at("kind").get<std::string>();
    arm_order.push_back(kind);
    for (std::uint64_t seed : cfg.seeds) {
      auto P = fit_preconditioner(arm, cfg.target, sched, seed);
      data::LabeledPoints pts = labeled_from_spec(
          cfg.target, n_points, Rng(seed, "kappa_points").next_u64());
      data::LabeledPoints ppts;
      ppts.points = precond::precondition_dataset(*P, pts.points);
      ppts.dim = pts.dim;
      ppts.seed = pts.seed;
      ppts.generator_id = pts.generator_id + "+" + kind;
      const auto curve = metrics::empirical_condition_trajectory(
          ppts, sched, ts, n_pairs, Rng(seed, "kappa_mc").next_u64());
      for (auto [t, kap] : curve) {
        emp.add_row({kind, std::to_string(seed), fd(t), fd(kap)});
        pool[{kind, t}].push_back(kap);
      }
    }
  }
  em.csv("kappa_empirical.csv", emp);

  io::CsvWriter agg({"arm", "t", "mean", "std", "n_seeds"});
  for (const auto& kind : arm_order)
    for (double t : ts) {
      const auto it = pool.find({kind, t});
      if (it == pool.end()) continue;
      const MeanStd s = mean_std(it->second);
      agg.add_row({kind, fd(t), fd(s.mean), fd(s.stddev),
                   std::to_string(s.n)});
    }
  em.csv("kappa_aggregate.csv", agg);

  if (cfg.target.at("kind") == "gaussian") {
    const gauss::GaussianTransport m =
        gauss::make_transport(spd_from_spec(cfg.target));
    io::CsvWriter ana({"t", "kappa"});
    for (auto [t, k] : gauss::condition_trajectory(m, ts))
      ana.add_row({fd(t), fd(k)});
    em.csv("kappa_analytic.csv", ana);
  }
}

}  // namespace

RunManifest run(const ExperimentConfig& cfg) {
  require(!cfg.output_dir.empty(),
          "output_dir must be set (config field or --output-dir)");
  RunManifest m;
  m.config_hash = config_hash(cfg);
  m.started_at = io::utc_timestamp();
  m.versions = {{"generator", std::string("fmlab ") + kVersion},
                {"format_version", 1}};
  Emitter em{std::filesystem::path(cfg.output_dir)};
  em.text("config.json", cfg.raw.dump(2) + "\n");

  if (cfg.experiment == "gaussian_analytic") run_gaussian_analytic(cfg, em);
  else if (cfg.experiment == "theorem1") run_theorem1(cfg, em);
  else if (cfg.experiment == "gmm_bottleneck") run_gmm_bottleneck(cfg, em);
  else if (cfg.experiment == "kappa_diagnostic") run_kappa_diagnostic(cfg, em);
  else run_training_experiment(cfg, em);  // fm_2d / precond_compare / checkerboard_swissroll

  // Manifest completeness: everything named exists and is nonempty.
  for (const auto& rel : em.files()) {
    const auto p = std::filesystem::path(cfg.output_dir) / rel;
    if (!std::filesystem::exists(p) || std::filesystem::file_size(p) == 0)
      throw IoError("emitted file missing or empty: " + p.string());
  }
  m.emitted_files = em.files();
  m.finished_at = io::utc_timestamp();
  io::write_json_file(std::filesystem::path(cfg.output_dir) / "manifest.json",
                      manifest_to_json(m));
  return m;
}

// ----- compare ------------------------------------------------------------

std::vector<CompareRow> compare_runs(
    const std::vector<std::filesystem::path>& runs) {
  struct Key {
    std::string method, direction, metric;
    bool operator<(const Key& o) const {
      return std::tie(method, direction, metric) <
             std::tie(o.method, o.direction, o.metric);
    }
  };
  std::vector<Key> order;
  std::map<Key, std::vector<double>> pool;
  for (const auto& run_path : runs) {
    std::filesystem::path dir = run_path;
    if (std::filesystem::is_regular_file(dir)) dir = dir.parent_path();
    const auto csv_path = dir / "final_distances.csv";
    if (!std::filesystem::exists(csv_path))
      throw IoError("missing run output: " + csv_path.string());
    const auto rows = io::parse_csv(io::read_text_file(csv_path));
    if (rows.empty() || rows[0] != std::vector<std::string>{
                            "arm", "seed", "direction", "metric", "value"})
      throw ValidationError("unexpected columns in " + csv_path.string());
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const Key key{rows[i][0], rows[i][2], rows[i][3]};
      if (pool.find(key) == pool.end()) order.push_back(key);
      pool[key].push_back(std::stod(rows[i][4]));
    }
  }

  // Published reference values (ordering comparisons only) for the sliced
  // metric on the Swiss-roll benchmark.
  const std::map<std::pair<std::string, std::string>, double> reference = {
      {{"none", "z_to_x1"}, 1.11e-1},
      {{"normalizing_flow", "z_to_x1"}, 5.8e-2},
      {{"flow_pushforward", "z_to_x1"}, 7.2e-2},
      {{"none", "x1_to_z"}, 8.1e-1},
      {{"normalizing_flow", "x1_to_z"}, 3.1e-1},
      {{"flow_pushforward", "x1_to_z"}, 3.4e-1},
  };

  std::vector<CompareRow> out;
  for (const auto& key : order) {
    CompareRow row;
    row.method = key.method;
    row.direction = key.direction;
    row.metric = key.metric;
    const MeanStd s = mean_std(pool.at(key));
    row.mean = s.mean;
    row.stddev = s.stddev;
    row.n_seeds = s.n;
    if (key.metric == "sliced") {
      const auto it = reference.find({key.method, key.direction});
      if (it != reference.end()) row.reference = it->second;
    }
    if (key.method != "none") {
      const Key base{"none", key.direction, key.metric};
      const auto it = pool.find(base);
      if (it != pool.end())
        row.beats_baseline = mean_std(it->second).mean > row.mean ? 1 : 0;
    }
    out.push_back(row);
  }
  return out;
}

std::string compare_table_csv(const std::vector<CompareRow>& rows) {
  io::CsvWriter w({"method", "direction", "metric", "mean", "std", "n_seeds",
                   "reference", "beats_baseline"});
  for (const auto& r : rows)
    w.add_row({r.method, r.direction, r.metric, fd(r.mean), fd(r.stddev),
               std::to_string(r.n_seeds),
               r.reference >= 0.0 ? fd(r.reference) : "",
               r.beats_baseline < 0 ? "" : std::to_string(r.beats_baseline)});
  return w.str();
}

}  // namespace fmlab::run
