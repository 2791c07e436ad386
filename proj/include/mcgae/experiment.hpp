#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcgae/data.hpp"
#include "mcgae/training.hpp"

namespace mcgae {

/// Which frames enter the per-run Spearman correlation.
enum class SpearmanScope { kFullRun, kPreFault };

/// Declarative description of a leave-one-run-out experiment.
struct ExperimentSpec {
  std::string preset = "desk";
  std::filesystem::path dataset_manifest;  ///< empty: generate from `synthetic`
  SyntheticConfig synthetic;
  std::size_t window = 1;
  std::vector<ModelKind> methods{ModelKind::kAeDsvdd, ModelKind::kCgae, ModelKind::kMcgae};
  std::vector<std::size_t> anomalous_run_counts{1, 2, 3, 4, 5};
  std::vector<std::size_t> folds;  ///< empty: every run is a test run once
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<ReconSet> recon_sets{ReconSet::kN};
  TrainConfig train;  ///< model_kind, recon_set and seed are set per job
  std::uint64_t fold_seed = 0;
  SpearmanScope spearman_scope = SpearmanScope::kFullRun;

  void validate() const;
};

/// Named profiles: "desk", "sm-like", "abm-like".
ExperimentSpec preset_spec(const std::string& name);
std::vector<std::string> preset_names();

nlohmann::json to_json(const ExperimentSpec& s);
/// Keys override `base`; a "preset" key, if present, replaces `base` first.
ExperimentSpec experiment_from_json(const nlohmann::json& j, ExperimentSpec base);

/// Standardized and framed runs ready for folding.
struct PreparedData {
  std::shared_ptr<const Dataset> dataset;
  std::string fingerprint;  ///< content hash of the prepared frames and cutoffs
  Warnings warnings;
};

PreparedData prepare_data(const ExperimentSpec& spec);

struct JobSpec {
  ModelKind method = ModelKind::kMcgae;
  ReconSet recon_set = ReconSet::kN;
  std::size_t n_anomalous_runs = 1;
  std::size_t fold = 0;
  std::uint64_t seed = 0;

  std::string key() const;
};

/// method x recon_set x n_anomalous_runs x fold x seed, in that nesting order.
std::vector<JobSpec> enumerate_jobs(const ExperimentSpec& spec, std::size_t n_runs);

/// Training configuration and split seeds actually used for a job.
TrainConfig job_train_config(const ExperimentSpec& spec, const JobSpec& job);
std::uint64_t job_split_seed(const JobSpec& job);

struct JobResult {
  JobSpec job;
  int test_run_id = 0;
  std::size_t best_epoch = 0;
  std::string checkpoint_hash;
  double t_train = 0, t_sigmoid = 0, t_fixed = 0, t_opt = 0;
  double ba_train = 0, ba_sigmoid = 0, ba_fixed = 0, ba_opt = 0, ba_trivial = 0;
  double tdiff_train = 0, tdiff_sigmoid = 0, tdiff_fixed = 0;
  double spearman_test = 0, spearman_train = 0;
  SatisfactionRatios train_ratios;
  std::vector<double> test_ci;
  std::vector<double> test_timestamps;
  std::size_t test_p_h = 0, test_p_f = 0;
  std::vector<double> normal_train_ci;
  Warnings warnings;
};

nlohmann::json to_json(const JobResult& r);
JobResult job_result_from_json(const nlohmann::json& j);

/// CIs, thresholds, balanced accuracies, correlations and training ratios of a trained model.
JobResult evaluate_job(const JobSpec& job, const TrainResult& trained, const FoldData& fold,
                       const TrainConfig& cfg, SpearmanScope scope);

/// Hash of the flat parameter vector, hex.
std::string parameter_hash(const Autoencoder& model);

struct RunOptions {
  std::size_t workers = 1;
  std::filesystem::path jobs_dir;  ///< empty: nothing persisted and nothing reused
  std::ostream* log = nullptr;
};

/// Trains and evaluates every job, reusing persisted results whose stored identity matches.
/// Results come back in job order.
std::vector<JobResult> run_jobs(const ExperimentSpec& spec, const PreparedData& data,
                                const std::vector<JobSpec>& jobs, const RunOptions& options);

/// Per-cell aggregates with per-job provenance.
nlohmann::json build_report(const ExperimentSpec& spec, const PreparedData& data,
                            const std::vector<JobResult>& results);

/// One wide CSV per table analog, written under `dir`.
void write_tables(const nlohmann::json& report, const std::filesystem::path& dir);

/// Line plots of BA vs n_anomalous_runs, CI traces and the normal-CI histogram under `dir`.
void write_plots(const nlohmann::json& report, const std::filesystem::path& dir);

/// Writes `text` to `path` via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

/// Sweep (or ablation when `ablation` is set) writing jobs/, tables/, report.json under `out`.
nlohmann::json run_sweep(const ExperimentSpec& spec, const std::filesystem::path& out,
                         std::size_t workers, bool ablation, std::ostream* log = nullptr);

}  // namespace mcgae
