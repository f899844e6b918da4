#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmlab/datasets.hpp"
#include "fmlab/errors.hpp"
#include "fmlab/flow_matching.hpp"
#include "fmlab/linalg.hpp"
#include "fmlab/mlp.hpp"
#include "fmlab/preconditioner.hpp"

namespace fmlab::run {

// A fully validated experiment description. `raw` is the normalized JSON
// (defaults filled in), which is what gets hashed and archived.
struct ExperimentConfig {
  std::string experiment;
  nlohmann::json target;
  nlohmann::json source;   // optional second dataset spec (x0 end); null = N(0,I)
  std::string schedule = "linear";
  nlohmann::json model;    // {"hidden":[...], "activation":"..."}
  nlohmann::json precond;  // {"kind":"none"| "whitening"|...}
  nlohmann::json hyper;    // {"lr","batch","steps","optimizer"}
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  nlohmann::json raw;
};

// Parse + fail-fast validation: every referenced spec must resolve to a
// constructible object before any compute starts.
ExperimentConfig config_from_json(nlohmann::json doc);
ExperimentConfig load_config_file(const std::filesystem::path& path);

// Hash of the normalized config with output_dir removed, so the same
// experiment hashes identically wherever its artifacts land.
std::string config_hash(const ExperimentConfig& cfg);

struct RunManifest {
  std::string config_hash;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> emitted_files;  // relative to output_dir
  nlohmann::json versions;
};
nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& doc);

// Execute the named experiment over all seeds; emits per-seed and
// aggregated CSVs plus manifest.json under cfg.output_dir.
RunManifest run(const ExperimentConfig& cfg);

// ---- dataset / preconditioner spec plumbing (shared with tests) ----

// {"kind":"gaussian","eigvals":[...]} with optional "rotation_seed" for a
// seeded orthogonal eigenbasis instead of the coordinate axes.
linalg::SpectralMatrix spd_from_spec(const nlohmann::json& spec);
gmm::ZeroMeanGmm gmm_from_spec(const nlohmann::json& spec);

// Any dataset spec -> (streaming sampler, dim).
std::pair<flow::Sampler, int> sampler_from_spec(const nlohmann::json& spec);

// Any dataset spec -> a fixed labeled point set of size n.
data::LabeledPoints labeled_from_spec(const nlohmann::json& spec, long n,
                                      std::uint64_t seed);

// Fit the preconditioner named by the spec against the target; all
// randomness derives from `seed`. kind "none" yields the identity.
std::unique_ptr<precond::Preconditioner> fit_preconditioner(
    const nlohmann::json& precond_spec, const nlohmann::json& target_spec,
    const flow::Schedule& schedule, std::uint64_t seed);

// ---- the train/evaluate pipeline behind fm_2d / precond_compare ----

struct PipelinePlan {
  nlohmann::json target;
  nlohmann::json source;  // null -> x0 ~ N(0, I)
  nlohmann::json precond_spec = nlohmann::json{{"kind", "none"}};
  flow::Schedule schedule;
  std::vector<int> hidden = {64, 64};
  nn::Activation act = nn::Activation::tanh_act;
  flow::TrainHyper hyper;   // velocity-model budget; seed is derived per run
  long eval_every = 0;      // 0 = no intermediate MMD curve
  int eval_n = 512;         // sample size for curve points
  int eval_steps = 40;      // RK4 steps for curve points
  int final_n = 2000;       // sample size for final metrics
  int final_steps = 80;     // RK4 steps for final metrics
  int sliced_projections = 128;
};

struct PipelineResult {
  std::string precond_kind;
  std::uint64_t seed = 0;
  std::vector<std::pair<long, double>> loss_curve;  // every training step
  std::vector<std::pair<long, double>> mmd_curve;   // (step, data-space MMD)
  double final_mmd = 0.0;
  double final_sliced_forward = 0.0;  // generated vs target   (z -> x1)
  double final_sliced_reverse = 0.0;  // inverted data vs source (x1 -> z)
  Eigen::MatrixXd final_samples;      // data-space generated points
  flow::TrainedField field;
};

// Train a velocity model on the (preconditioned) target and evaluate in
// data space. Fully deterministic in (plan, seed).
PipelineResult run_pipeline(const PipelinePlan& plan, std::uint64_t seed);

// ---- cross-run summary table (the `compare` subcommand) ----

struct CompareRow {
  std::string method;     // none | whitening | normalizing_flow | flow_pushforward
  std::string direction;  // z_to_x1 | x1_to_z
  std::string metric;     // sliced | mmd
  double mean = 0.0;
  double stddev = 0.0;
  long n_seeds = 0;
  double reference = -1.0;  // <0 = no published reference row
  int beats_baseline = -1;  // -1 n/a (baseline itself), else 0/1
};

// Pools final_distances.csv rows across the given run directories
// (manifest.json paths or their directories) and aggregates per
// (method, direction, metric).
std::vector<CompareRow> compare_runs(
    const std::vector<std::filesystem::path>& runs);
std::string compare_table_csv(const std::vector<CompareRow>& rows);

}  // namespace fmlab::run
