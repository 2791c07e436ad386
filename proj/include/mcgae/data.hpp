#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "mcgae/common.hpp"
#include "mcgae/constraints.hpp"

namespace mcgae {

/// Per-feature affine map applied by standardize_run: x' = (x - mean) / scale.
struct StandardizationStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

/// One run-to-failure recording. Frames are stored one per column (F x T).
/// Labels follow from the cutoffs: [0, p_h) normal, [p_h, p_f) unlabeled, [p_f, T) anomalous.
struct Run {
  int run_id = 0;
  Eigen::MatrixXd frames;
  std::vector<double> timestamps;  ///< seconds, strictly increasing
  std::size_t p_h = 0;
  std::size_t p_f = 0;
  /// Ground-truth degradation level per frame; filled by the synthetic generator only.
  std::vector<double> latent;
  /// Set once the run has been standardized.
  StandardizationStats stats;

  std::size_t length() const { return static_cast<std::size_t>(frames.cols()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t t_a() const { return p_f; }
  Label label(std::size_t t) const {
    return t < p_h ? Label::kNormal : (t < p_f ? Label::kUnlabeled : Label::kAnomalous);
  }
  /// Throws ConfigError if any structural invariant is violated.
  void validate() const;
};

using Dataset = std::vector<Run>;

enum class DegradationShape { kLinear, kExponential, kPiecewise };

std::string to_string(DegradationShape s);
DegradationShape degradation_shape_from_string(const std::string& name);

/// Parameters of the synthetic run-to-failure generator.
///
/// Each run has a non-decreasing latent degradation d(t). Frames are
/// W [d(t), 1] + V s(t) + noise_std * e(t), with W and V fixed per dataset seed, s(t) a set of
/// stationary AR(1) nuisance factors with standard deviation nuisance_std, and e white noise.
struct SyntheticConfig {
  std::size_t n_runs = 6;
  std::size_t frames_min = 240;
  std::size_t frames_max = 360;
  std::size_t feature_dim = 16;
  DegradationShape shape = DegradationShape::kPiecewise;
  double noise_std = 0.1;
  double nuisance_std = 2.0;
  std::size_t nuisance_factors = 3;
  double nuisance_correlation = 0.95;
  double cutoff_h = 0.5;  ///< fraction of the run before p_h
  double cutoff_f = 0.85; ///< fraction of the run before p_f
  double severity_jitter = 0.2;  ///< per-run degradation rate multiplier in 1 +- jitter
  double sample_period = 1.0;    ///< seconds between frames
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const SyntheticConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j, SyntheticConfig base = {});

Dataset generate_dataset(const SyntheticConfig& config);

/// Per-feature standardization with statistics of frames [0, p_h). Zero-variance features get
/// scale 1 and a warning.
Run standardize_run(const Run& run, Warnings* warnings = nullptr);

/// Concatenates non-overlapping windows of `window` frames (trailing remainder dropped).
/// A window is anomalous if any member is, else unlabeled if any member is, else normal.
Run frame_run(const Run& run, std::size_t window);

/// One leave-one-run-out fold. Run references are dataset indices.
struct FoldSpec {
  std::size_t test_run = 0;
  std::vector<std::size_t> train_runs;
  double validation_fraction = 0.25;
  std::vector<std::size_t> anomalous_source_runs;

  void validate(std::size_t dataset_size) const;
};

/// One fold per run. Each fold exposes the anomalous segments of exactly `n_anomalous_runs`
/// training runs, chosen as a prefix of a per-fold permutation so counts are nested.
std::vector<FoldSpec> build_folds(const Dataset& dataset, std::size_t n_anomalous_runs,
                                  std::uint64_t fold_seed);

/// Training and validation points of one fold. Anomalous frames of runs outside
/// anomalous_source_runs are excluded from both splits.
struct FoldData {
  std::shared_ptr<const Dataset> dataset;
  FoldSpec spec;
  /// Per training run, time-ordered.
  std::vector<std::vector<SampleTag>> train;
  std::vector<std::vector<SampleTag>> validation;
  std::size_t known_normals = 0;    ///< normal points across both splits
  std::size_t known_anomalies = 0;  ///< exposed anomalous points across both splits

  std::size_t input_dim() const { return dataset->front().feature_dim(); }
  std::vector<SampleTag> flat_train() const;
  std::vector<SampleTag> flat_validation() const;
};

/// Splits each training run's points per label into validation (validation_fraction) and
/// training, deterministically under `split_seed`.
FoldData materialize_fold(std::shared_ptr<const Dataset> dataset, const FoldSpec& spec,
                          std::uint64_t split_seed);

/// Feature matrix (F x n) for tagged samples.
Eigen::MatrixXd gather(const Dataset& dataset, std::span<const SampleTag> tags);

struct BatchConfig {
  std::size_t batches_per_epoch = 20;
  std::size_t runs_per_batch = 4;
  std::size_t labeled_points_per_run = 20;
  std::size_t unlabeled_points_per_run = 10;
  std::size_t min_points_per_run_for_mono = 10;

  void validate() const;
};

nlohmann::json to_json(const BatchConfig& c);
BatchConfig batch_config_from_json(const nlohmann::json& j, BatchConfig base = {});

struct Batch {
  std::vector<SampleTag> samples;
  Eigen::MatrixXd features;  ///< F x n, column i belongs to samples[i]
};

/// Stratified run-aware batch stream. Owns its generator state.
class BatchSampler {
 public:
  BatchSampler(const FoldData& fold, BatchConfig config, std::uint64_t seed);

  std::vector<Batch> next_epoch(Warnings* warnings = nullptr);
  Batch next_batch(Warnings* warnings = nullptr);

 private:
  const FoldData* fold_;
  BatchConfig config_;
  Rng rng_;
  std::vector<std::vector<SampleTag>> labeled_;    // per selectable run
  std::vector<std::vector<SampleTag>> unlabeled_;  // per selectable run
};

/// On-disk dataset: one delimited-text file per run plus manifest.json.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset,
                  const nlohmann::json& generator_config);
Dataset load_dataset(const std::filesystem::path& manifest_path);
void write_run(const std::filesystem::path& path, const Run& run);
Run read_run(const std::filesystem::path& path);

}  // namespace mcgae
