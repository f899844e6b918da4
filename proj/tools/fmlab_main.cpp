#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fmlab/io.hpp"
#include "fmlab/runner.hpp"

namespace {

int do_run(const std::string& config_path, const std::string& output_dir,
           const std::string& seed_override, bool quiet) {
  nlohmann::json doc = fmlab::io::read_json_file(config_path);
  if (!output_dir.empty()) doc["output_dir"] = output_dir;
  if (!seed_override.empty()) {
    std::vector<std::uint64_t> seeds;
    std::string cur;
    for (char c : seed_override + ",") {
      if (c == ',') {
        if (!cur.empty()) seeds.push_back(std::stoull(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    doc["seeds"] = seeds;
  }
  const fmlab::run::ExperimentConfig cfg =
      fmlab::run::config_from_json(std::move(doc));
  const fmlab::run::RunManifest m = fmlab::run::run(cfg);
  if (!quiet) {
    std::printf("experiment : %s\n", cfg.experiment.c_str());
    std::printf("config_hash: %s\n", m.config_hash.c_str());
    std::printf("output_dir : %s\n", cfg.output_dir.c_str());
    for (const auto& f : m.emitted_files)
      std::printf("  emitted %s\n", f.c_str());
    std::printf("manifest   : %s\n",
                (std::filesystem::path(cfg.output_dir) / "manifest.json")
                    .string()
                    .c_str());
  }
  return 0;
}

int do_validate(const std::string& config_path, bool quiet) {
  const fmlab::run::ExperimentConfig cfg =
      fmlab::run::load_config_file(config_path);
  if (!quiet)
    std::printf("valid: experiment=%s config_hash=%s seeds=%zu\n",
                cfg.experiment.c_str(), fmlab::run::config_hash(cfg).c_str(),
                cfg.seeds.size());
  return 0;
}

int do_compare(const std::vector<std::string>& runs,
               const std::string& output_dir, bool quiet) {
  std::vector<std::filesystem::path> paths(runs.begin(), runs.end());
  const auto rows = fmlab::run::compare_runs(paths);
  const std::string table = fmlab::run::compare_table_csv(rows);
  const std::filesystem::path out =
      std::filesystem::path(output_dir.empty() ? "." : output_dir) /
      "comparison_table.csv";
  fmlab::io::write_text_file(out, table);
  if (!quiet) {
    std::fputs(table.c_str(), stdout);
    std::printf("written: %s\n", out.string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"preconditioned flow-matching laboratory"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, output_dir, seed_override;
  bool quiet = false;
  app.add_flag("--quiet", quiet, "suppress progress output");

  auto* run_cmd = app.add_subcommand("run", "execute an experiment config");
  run_cmd->add_option("config", config_path, "config JSON path")->required();
  run_cmd->add_option("--output-dir", output_dir,
                      "override the config's output_dir");
  run_cmd->add_option("--seed-override", seed_override,
                      "comma-separated seed list replacing the config's");

  auto* val_cmd = app.add_subcommand("validate", "validate a config file");
  val_cmd->add_option("config", config_path, "config JSON path")->required();

  std::vector<std::string> compare_runs_args;
  auto* cmp_cmd =
      app.add_subcommand("compare", "aggregate run outputs into one table");
  cmp_cmd->add_option("runs", compare_runs_args,
                      "manifest.json paths (or run directories)")
      ->required();
  cmp_cmd->add_option("--output-dir", output_dir,
                      "directory for comparison_table.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed())
      return do_run(config_path, output_dir, seed_override, quiet);
    if (val_cmd->parsed()) return do_validate(config_path, quiet);
    return do_compare(compare_runs_args, output_dir, quiet);
  } catch (const fmlab::ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 2;
  } catch (const fmlab::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const fmlab::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
