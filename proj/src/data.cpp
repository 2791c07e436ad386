#include "mcgae/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace mcgae {

void Run::validate() const {
  const std::size_t t = length();
  if (t == 0) throw ConfigError("run " + std::to_string(run_id) + " has no frames");
  if (!(0 < p_h && p_h <= p_f && p_f <= t)) {
    throw ConfigError("run " + std::to_string(run_id) + ": cutoffs must satisfy 0 < p_h <= p_f <= T");
  }
  if (timestamps.size() != t) {
    throw ConfigError("run " + std::to_string(run_id) + ": timestamp count differs from frame count");
  }
  for (std::size_t i = 1; i < t; ++i) {
    if (!(timestamps[i] > timestamps[i - 1])) {
      throw ConfigError("run " + std::to_string(run_id) + ": timestamps must strictly increase");
    }
  }
  if (!latent.empty() && latent.size() != t) {
    throw ConfigError("run " + std::to_string(run_id) + ": latent trace length differs from frames");
  }
}

std::string to_string(DegradationShape s) {
  switch (s) {
    case DegradationShape::kLinear:
      return "linear";
    case DegradationShape::kExponential:
      return "exponential";
    case DegradationShape::kPiecewise:
      return "piecewise";
  }
  return "linear";
}

DegradationShape degradation_shape_from_string(const std::string& name) {
  if (name == "linear") return DegradationShape::kLinear;
  if (name == "exponential") return DegradationShape::kExponential;
  if (name == "piecewise") return DegradationShape::kPiecewise;
  throw ConfigError("unknown degradation shape '" + name + "'");
}

void SyntheticConfig::validate() const {
  if (n_runs < 2) throw ConfigError("synthetic: need at least two runs");
  if (frames_min < 10 || frames_max < frames_min) {
    throw ConfigError("synthetic: frames range must satisfy 10 <= min <= max");
  }
  if (feature_dim == 0) throw ConfigError("synthetic: feature_dim must be positive");
  if (!(noise_std >= 0.0) || !(nuisance_std >= 0.0)) {
    throw ConfigError("synthetic: noise levels must be non-negative");
  }
  if (!(nuisance_correlation >= 0.0 && nuisance_correlation < 1.0)) {
    throw ConfigError("synthetic: nuisance_correlation must lie in [0, 1)");
  }
  if (!(cutoff_h > 0.0 && cutoff_h < cutoff_f && cutoff_f < 1.0)) {
    throw ConfigError("synthetic: cutoffs must satisfy 0 < cutoff_h < cutoff_f < 1");
  }
  if (!(severity_jitter >= 0.0 && severity_jitter < 1.0)) {
    throw ConfigError("synthetic: severity_jitter must lie in [0, 1)");
  }
  if (!(sample_period > 0.0)) throw ConfigError("synthetic: sample_period must be positive");
}

nlohmann::json to_json(const SyntheticConfig& c) {
  return {{"n_runs", c.n_runs},
          {"frames_min", c.frames_min},
          {"frames_max", c.frames_max},
          {"feature_dim", c.feature_dim},
          {"shape", to_string(c.shape)},
          {"noise_std", c.noise_std},
          {"nuisance_std", c.nuisance_std},
          {"nuisance_factors", c.nuisance_factors},
          {"nuisance_correlation", c.nuisance_correlation},
          {"cutoff_h", c.cutoff_h},
          {"cutoff_f", c.cutoff_f},
          {"severity_jitter", c.severity_jitter},
          {"sample_period", c.sample_period},
          {"seed", c.seed}};
}

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j, SyntheticConfig c) {
  if (!j.is_object()) throw ConfigError("synthetic config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n_runs") c.n_runs = value.get<std::size_t>();
      else if (key == "frames_min") c.frames_min = value.get<std::size_t>();
      else if (key == "frames_max") c.frames_max = value.get<std::size_t>();
      else if (key == "frames_per_run") {
        c.frames_min = value.at(0).get<std::size_t>();
        c.frames_max = value.at(1).get<std::size_t>();
      } else if (key == "feature_dim") c.feature_dim = value.get<std::size_t>();
      else if (key == "shape") c.shape = degradation_shape_from_string(value.get<std::string>());
      else if (key == "noise_std") c.noise_std = value.get<double>();
      else if (key == "nuisance_std") c.nuisance_std = value.get<double>();
      else if (key == "nuisance_factors") c.nuisance_factors = value.get<std::size_t>();
      else if (key == "nuisance_correlation") c.nuisance_correlation = value.get<double>();
      else if (key == "cutoff_h") c.cutoff_h = value.get<double>();
      else if (key == "cutoff_f") c.cutoff_f = value.get<double>();
      else if (key == "cutoff_fractions") {
        c.cutoff_h = value.at(0).get<double>();
        c.cutoff_f = value.at(1).get<double>();
      } else if (key == "severity_jitter") c.severity_jitter = value.get<double>();
      else if (key == "sample_period") c.sample_period = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw ConfigError("synthetic config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

double degradation(DegradationShape shape, double u, double cutoff_h) {
  switch (shape) {
    case DegradationShape::kLinear:
      return u;
    case DegradationShape::kExponential: {
      constexpr double k = 3.0;
      return std::expm1(k * u) / std::expm1(k);
    }
    case DegradationShape::kPiecewise: {
      // Slow wear up to the end of the healthy segment, then a steeper linear ramp.
      constexpr double slow = 0.3;
      if (u < cutoff_h) return slow * u;
      return slow * cutoff_h + (u - cutoff_h) * (1.0 - slow * cutoff_h) / (1.0 - cutoff_h);
    }
  }
  return u;
}

}  // namespace

Dataset generate_dataset(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const auto f = static_cast<Eigen::Index>(config.feature_dim);
  const auto k = static_cast<Eigen::Index>(config.nuisance_factors);

  // Degradation loading and offset share a sign per feature, so (w d + b)^2 grows with d >= 0.
  Eigen::MatrixXd w(f, 2);
  for (Eigen::Index i = 0; i < f; ++i) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    w(i, 0) = sign * rng.uniform(0.5, 1.5);
    w(i, 1) = sign * rng.uniform(0.0, 1.0);
  }
  Eigen::MatrixXd v(f, k);
  for (Eigen::Index i = 0; i < f; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) v(i, j) = rng.normal() / std::sqrt(static_cast<double>(k));
  }

  Dataset runs;
  runs.reserve(config.n_runs);
  const double phi = config.nuisance_correlation;
  const double innovation = std::sqrt(1.0 - phi * phi);
  for (std::size_t r = 0; r < config.n_runs; ++r) {
    Run run;
    run.run_id = static_cast<int>(r);
    const std::size_t t = config.frames_min + rng.below(config.frames_max - config.frames_min + 1);
    const double severity = 1.0 + config.severity_jitter * rng.uniform(-1.0, 1.0);
    run.p_h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(config.cutoff_h * static_cast<double>(t))));
    run.p_f = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(config.cutoff_f * static_cast<double>(t))),
                                      run.p_h, t);
    run.frames.resize(f, static_cast<Eigen::Index>(t));
    run.timestamps.resize(t);
    run.latent.resize(t);

    Eigen::VectorXd nuisance(k);
    for (Eigen::Index j = 0; j < k; ++j) nuisance[j] = config.nuisance_std * rng.normal();
    for (std::size_t i = 0; i < t; ++i) {
      if (i > 0) {
        for (Eigen::Index j = 0; j < k; ++j) {
          nuisance[j] = phi * nuisance[j] + innovation * config.nuisance_std * rng.normal();
        }
      }
      const double u = static_cast<double>(i) / static_cast<double>(t - 1);
      const double d = severity * degradation(config.shape, u, config.cutoff_h);
      run.latent[i] = d;
      run.timestamps[i] = static_cast<double>(i) * config.sample_period;
      auto col = run.frames.col(static_cast<Eigen::Index>(i));
      col = w.col(0) * d + w.col(1);
      if (k > 0) col += v * nuisance;
      if (config.noise_std > 0.0) {
        for (Eigen::Index j = 0; j < f; ++j) col[j] += config.noise_std * rng.normal();
      }
    }
    run.validate();
    runs.push_back(std::move(run));
  }
  return runs;
}

Run standardize_run(const Run& run, Warnings* warnings) {
  run.validate();
  if (run.p_h < 2) throw ConfigError("standardize_run: need at least two frames before p_h");
  const auto healthy = run.frames.leftCols(static_cast<Eigen::Index>(run.p_h));
  const double n = static_cast<double>(run.p_h);
  StandardizationStats stats;
  stats.mean = healthy.rowwise().sum() / n;
  stats.scale.resize(stats.mean.size());
  for (Eigen::Index i = 0; i < stats.mean.size(); ++i) {
    const double var = (healthy.row(i).array() - stats.mean[i]).square().sum() / n;
    const double sd = std::sqrt(var);
    if (sd <= 1e-12 * std::max(1.0, std::abs(stats.mean[i]))) {
      warn(warnings, "run " + std::to_string(run.run_id) + ": feature " + std::to_string(i) +
                         " has zero variance before p_h; using scale 1");
      stats.scale[i] = 1.0;
    } else {
      stats.scale[i] = sd;
    }
  }
  Run out = run;
  out.frames = ((run.frames.colwise() - stats.mean).array().colwise() / stats.scale.array()).matrix();
  out.stats = std::move(stats);
  return out;
}

Run frame_run(const Run& run, std::size_t window) {
  run.validate();
  if (window == 0) throw ConfigError("frame_run: window must be at least 1");
  if (run.length() < window) throw ConfigError("frame_run: run shorter than the window");
  if (window == 1) return run;
  const std::size_t t = run.length() / window;
  const std::size_t f = run.feature_dim();
  Run out;
  out.run_id = run.run_id;
  // A window is normal only when every member is, anomalous as soon as one member is.
  out.p_h = run.p_h / window;
  out.p_f = std::min(run.p_f / window, t);
  if (out.p_h == 0) throw ConfigError("frame_run: no fully normal window remains");
  out.frames.resize(static_cast<Eigen::Index>(f * window), static_cast<Eigen::Index>(t));
  out.timestamps.resize(t);
  if (!run.latent.empty()) out.latent.resize(t);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t m = 0; m < window; ++m) {
      out.frames.block(static_cast<Eigen::Index>(m * f), static_cast<Eigen::Index>(i),
                       static_cast<Eigen::Index>(f), 1) =
          run.frames.col(static_cast<Eigen::Index>(i * window + m));
    }
    out.timestamps[i] = run.timestamps[i * window];
    if (!run.latent.empty()) out.latent[i] = run.latent[i * window + window - 1];
  }
  if (run.stats.mean.size() > 0) {
    out.stats.mean = run.stats.mean.replicate(static_cast<Eigen::Index>(window), 1);
    out.stats.scale = run.stats.scale.replicate(static_cast<Eigen::Index>(window), 1);
  }
  out.validate();
  return out;
}

void FoldSpec::validate(std::size_t dataset_size) const {
  if (test_run >= dataset_size) throw ConfigError("fold: test run out of range");
  if (train_runs.empty()) throw ConfigError("fold: no training runs");
  for (std::size_t r : train_runs) {
    if (r == test_run) throw ConfigError("fold: test run appears among training runs");
    if (r >= dataset_size) throw ConfigError("fold: training run out of range");
  }
  if (anomalous_source_runs.empty() || anomalous_source_runs.size() > train_runs.size()) {
    throw ConfigError("fold: need 1 <= |anomalous_source_runs| <= |train_runs|");
  }
  for (std::size_t r : anomalous_source_runs) {
    if (std::find(train_runs.begin(), train_runs.end(), r) == train_runs.end()) {
      throw ConfigError("fold: anomalous source run is not a training run");
    }
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("fold: validation_fraction must lie in (0, 1)");
  }
}

std::vector<FoldSpec> build_folds(const Dataset& dataset, std::size_t n_anomalous_runs,
                                  std::uint64_t fold_seed) {
  if (dataset.size() < 2) throw ConfigError("build_folds: need at least two runs");
  if (n_anomalous_runs < 1 || n_anomalous_runs > dataset.size() - 1) {
    throw ConfigError("build_folds: n_anomalous_runs must lie in [1, runs - 1]");
  }
  std::vector<FoldSpec> folds;
  folds.reserve(dataset.size());
  for (std::size_t test = 0; test < dataset.size(); ++test) {
    FoldSpec fold;
    fold.test_run = test;
    for (std::size_t r = 0; r < dataset.size(); ++r) {
      if (r != test) fold.train_runs.push_back(r);
    }
    std::vector<std::size_t> order = fold.train_runs;
    Rng rng(mix_seed(fold_seed, test));
    rng.shuffle(order);
    fold.anomalous_source_runs.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_anomalous_runs));
    std::sort(fold.anomalous_source_runs.begin(), fold.anomalous_source_runs.end());
    fold.validate(dataset.size());
    folds.push_back(std::move(fold));
  }
  return folds;
}

std::vector<SampleTag> FoldData::flat_train() const {
  std::vector<SampleTag> out;
  for (const auto& run : train) out.insert(out.end(), run.begin(), run.end());
  return out;
}

std::vector<SampleTag> FoldData::flat_validation() const {
  std::vector<SampleTag> out;
  for (const auto& run : validation) out.insert(out.end(), run.begin(), run.end());
  return out;
}

FoldData materialize_fold(std::shared_ptr<const Dataset> dataset, const FoldSpec& spec,
                          std::uint64_t split_seed) {
  if (!dataset || dataset->empty()) throw ConfigError("materialize_fold: empty dataset");
  spec.validate(dataset->size());
  const std::size_t dim = dataset->front().feature_dim();
  for (const auto& run : *dataset) {
    if (run.feature_dim() != dim) throw ConfigError("dataset runs differ in feature dimension");
  }
  FoldData fold;
  fold.dataset = dataset;
  fold.spec = spec;
  const std::set<std::size_t> sources(spec.anomalous_source_runs.begin(), spec.anomalous_source_runs.end());
  for (std::size_t r : spec.train_runs) {
    const Run& run = (*dataset)[r];
    const bool exposed = sources.contains(r);
    Rng rng(mix_seed(split_seed, 1000 + r));
    std::vector<SampleTag> train_part;
    std::vector<SampleTag> val_part;
    auto split = [&](std::size_t begin, std::size_t end, Label label) {
      std::vector<SampleTag> group;
      for (std::size_t t = begin; t < end; ++t) group.push_back({r, t, label});
      if (group.empty()) return;
      rng.shuffle(group);
      auto n_val = static_cast<std::size_t>(std::lround(spec.validation_fraction * static_cast<double>(group.size())));
      if (group.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, group.size() - 1);
      else n_val = 0;
      val_part.insert(val_part.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(n_val));
      train_part.insert(train_part.end(), group.begin() + static_cast<std::ptrdiff_t>(n_val), group.end());
    };
    split(0, run.p_h, Label::kNormal);
    split(run.p_h, run.p_f, Label::kUnlabeled);
    if (exposed) split(run.p_f, run.length(), Label::kAnomalous);
    fold.known_normals += run.p_h;
    if (exposed) fold.known_anomalies += run.length() - run.p_f;
    auto by_frame = [](const SampleTag& a, const SampleTag& b) { return a.frame < b.frame; };
    std::sort(train_part.begin(), train_part.end(), by_frame);
    std::sort(val_part.begin(), val_part.end(), by_frame);
    fold.train.push_back(std::move(train_part));
    fold.validation.push_back(std::move(val_part));
  }
  return fold;
}

Eigen::MatrixXd gather(const Dataset& dataset, std::span<const SampleTag> tags) {
  if (dataset.empty()) return {};
  Eigen::MatrixXd x(dataset.front().frames.rows(), static_cast<Eigen::Index>(tags.size()));
  for (std::size_t i = 0; i < tags.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) = dataset[tags[i].run].frames.col(static_cast<Eigen::Index>(tags[i].frame));
  }
  return x;
}

void BatchConfig::validate() const {
  if (batches_per_epoch == 0 || runs_per_batch == 0 || labeled_points_per_run == 0 ||
      unlabeled_points_per_run == 0) {
    throw ConfigError("batch config: all counts must be positive");
  }
  if (min_points_per_run_for_mono < 2) {
    throw ConfigError("batch config: min_points_per_run_for_mono must be at least 2");
  }
  if (labeled_points_per_run + unlabeled_points_per_run < min_points_per_run_for_mono) {
    throw ConfigError("batch config: per-run draw is smaller than min_points_per_run_for_mono");
  }
}

nlohmann::json to_json(const BatchConfig& c) {
  return {{"batches_per_epoch", c.batches_per_epoch},
          {"runs_per_batch", c.runs_per_batch},
          {"labeled_points_per_run", c.labeled_points_per_run},
          {"unlabeled_points_per_run", c.unlabeled_points_per_run},
          {"min_points_per_run_for_mono", c.min_points_per_run_for_mono}};
}

BatchConfig batch_config_from_json(const nlohmann::json& j, BatchConfig c) {
  if (!j.is_object()) throw ConfigError("batch config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "batches_per_epoch") c.batches_per_epoch = value.get<std::size_t>();
      else if (key == "runs_per_batch") c.runs_per_batch = value.get<std::size_t>();
      else if (key == "labeled_points_per_run") c.labeled_points_per_run = value.get<std::size_t>();
      else if (key == "unlabeled_points_per_run") c.unlabeled_points_per_run = value.get<std::size_t>();
      else if (key == "min_points_per_run_for_mono") c.min_points_per_run_for_mono = value.get<std::size_t>();
      else throw ConfigError("batch config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("batch config: ") + e.what());
  }
  c.validate();
  return c;
}

BatchSampler::BatchSampler(const FoldData& fold, BatchConfig config, std::uint64_t seed)
    : fold_(&fold), config_(config), rng_(seed) {
  config_.validate();
  for (const auto& run : fold.train) {
    std::vector<SampleTag> labeled;
    std::vector<SampleTag> unlabeled;
    for (const auto& s : run) {
      (s.label == Label::kUnlabeled ? unlabeled : labeled).push_back(s);
    }
    if (labeled.size() + unlabeled.size() < config_.min_points_per_run_for_mono) continue;
    labeled_.push_back(std::move(labeled));
    unlabeled_.push_back(std::move(unlabeled));
  }
  if (labeled_.empty()) {
    throw ConfigError("batch sampler: no training run has enough points for a batch");
  }
}

namespace {

// Draws `count` distinct entries by a partial Fisher-Yates shuffle of `pool` in place.
void draw(std::vector<SampleTag>& pool, std::size_t count, Rng& rng, std::vector<SampleTag>& out) {
  count = std::min(count, pool.size());
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    out.push_back(pool[i]);
  }
}

}  // namespace

Batch BatchSampler::next_batch(Warnings* warnings) {
  std::vector<std::size_t> runs(labeled_.size());
  std::iota(runs.begin(), runs.end(), std::size_t{0});
  const std::size_t take = std::min(config_.runs_per_batch, runs.size());
  for (std::size_t i = 0; i < take; ++i) std::swap(runs[i], runs[i + rng_.below(runs.size() - i)]);

  Batch batch;
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t r = runs[i];
    std::vector<SampleTag> picked;
    draw(labeled_[r], config_.labeled_points_per_run, rng_, picked);
    if (unlabeled_[r].empty()) {
      warn(warnings, "batch: run without unlabeled points, drawing labeled points only");
    } else {
      draw(unlabeled_[r], config_.unlabeled_points_per_run, rng_, picked);
    }
    if (picked.size() < config_.min_points_per_run_for_mono) {
      // Pools are large enough by construction; top up from whichever pool still has points.
      picked.clear();
      draw(labeled_[r], labeled_[r].size(), rng_, picked);
      draw(unlabeled_[r], config_.min_points_per_run_for_mono, rng_, picked);
    }
    std::sort(picked.begin(), picked.end(),
              [](const SampleTag& a, const SampleTag& b) { return a.frame < b.frame; });
    batch.samples.insert(batch.samples.end(), picked.begin(), picked.end());
  }
  batch.features = gather(*fold_->dataset, batch.samples);
  return batch;
}

std::vector<Batch> BatchSampler::next_epoch(Warnings* warnings) {
  std::vector<Batch> out;
  out.reserve(config_.batches_per_epoch);
  for (std::size_t b = 0; b < config_.batches_per_epoch; ++b) out.push_back(next_batch(warnings));
  return out;
}

}  // namespace mcgae
