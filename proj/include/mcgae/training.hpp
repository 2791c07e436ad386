#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "mcgae/common.hpp"
#include "mcgae/constraints.hpp"
#include "mcgae/data.hpp"
#include "mcgae/network.hpp"

namespace mcgae {

/// kAutoencoder is the unconstrained reconstruction baseline used for reduction checks.
enum class ModelKind { kAutoencoder, kAeDsvdd, kCgae, kMcgae };

/// Which label groups contribute to the reconstruction term: n, nu, na, nua.
enum class ReconSet { kN, kNU, kNA, kNUA };

/// How the constraint scale max{||grad_e L||, zeta} is formed: one norm over the batch's
/// normal reconstruction samples, or one norm per sample.
enum class ScaleMode { kBatch, kPerSample };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& name);
std::string to_string(ReconSet r);
ReconSet recon_set_from_string(const std::string& name);

/// Constraint families enforced by a model kind.
ConstraintSet active_constraints(ModelKind kind);

struct TrainConfig {
  ModelKind model_kind = ModelKind::kMcgae;
  BallConfig ball{1.0, 2.0};
  double lambda = 1.0;   ///< AE-DSVDD anomalous weight
  double rescale = 1.5;  ///< R, must exceed 1 unless allow_zero_rescale
  double zeta = 1e-3;
  double lr0 = 1e-3;
  double lr_min = 1e-6;
  std::size_t plateau_patience = 30;
  std::size_t epochs = 150;
  ReconSet recon_set = ReconSet::kN;
  ScaleMode scale_mode = ScaleMode::kBatch;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{32};
  std::size_t latent_dim = 4;
  Activation activation = Activation::kRelu;
  BatchConfig batches;
  /// Test-only: accept rescale == 0 to check that training reduces to the plain objective.
  bool allow_zero_rescale = false;

  void validate() const;
  ArchitectureSpec architecture(std::size_t input_dim) const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Indices of batch samples whose reconstruction enters the loss.
std::vector<std::size_t> select_recon_set(std::span<const SampleTag> samples, ReconSet set);

/// Fixed AE-DSVDD center.
struct CenterState {
  Eigen::VectorXd c;
};

/// Mean of the normal encodings (columns) with every |c_j| < 0.1 snapped to +-0.1, sign kept
/// and zero mapped to +0.1.
CenterState init_center(const Eigen::MatrixXd& normal_encodings);

/// Clamp for the inverse-distance term of anomalous samples sitting on the center.
inline constexpr double kCenterClamp = 1e-8;

/// (1/N) sum_normals [recon^2 + ||z - c||^2] + lambda (1/A) sum_anomalous ||z - c||^-2.
double aedsvdd_loss(const ForwardTrace& trace, const Eigen::MatrixXd& x,
                    std::span<const SampleTag> tags, const CenterState& center, double lambda);

/// Gradient of the center terms of aedsvdd_loss with respect to the encodings (D_l x n).
Eigen::MatrixXd aedsvdd_encoding_gradient(const Eigen::MatrixXd& z, std::span<const SampleTag> tags,
                                          const CenterState& center, double lambda);

/// max{norm, zeta}
inline double constraint_scale(double grad_norm, double zeta) { return grad_norm > zeta ? grad_norm : zeta; }

struct EffectiveGradient {
  Eigen::VectorXd params;
  Eigen::MatrixXd injection;  ///< R * s * (summed directions), D_l x n
  double scale = 0.0;         ///< s in batch mode; mean of per-sample s otherwise
};

/// Loss gradient plus the constraint directions, scaled by R * max{||grad_e L||, zeta} and
/// chained through the encoder. `normal_recon` lists the normal samples of the
/// reconstruction set used for the gradient norm.
EffectiveGradient effective_gradient(const Autoencoder& model, const ForwardTrace& trace,
                                     const Gradients& loss_grad,
                                     std::span<const std::size_t> normal_recon,
                                     const DirectionBundle& bundle, const TrainConfig& cfg);

/// Learning rate halved (down to lr_min) after `patience` consecutive epochs without a checkpoint.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr0, double lr_min, std::size_t patience)
      : lr_(lr0), lr_min_(lr_min), patience_(patience) {}
  double lr() const { return lr_; }
  /// Returns true when this call halved the rate.
  bool record(bool improved);

 private:
  double lr_;
  double lr_min_;
  std::size_t patience_;
  std::size_t stale_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double validation_objective = 0.0;
  SatisfactionRatios validation_ratios;
  double lr = 0.0;
  bool checkpoint = false;
  bool lr_halved = false;
};

nlohmann::json to_json(const EpochRecord& r);

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  Warnings warnings;
};

struct TrainResult {
  Autoencoder model;
  CenterState center;  ///< empty unless AE-DSVDD
  TrainHistory history;
  std::size_t best_epoch = 0;  ///< 0 when no checkpoint was taken
};

using EpochSink = std::function<void(const EpochRecord&)>;

/// Step-level training driver. `train` wraps it; tests use it to inspect trajectories.
class Trainer {
 public:
  Trainer(const FoldData& fold, TrainConfig cfg);

  /// One update on `batch`; returns the batch objective.
  double step(const Batch& batch);
  /// All batches of one epoch, then validation, checkpointing and the schedule.
  EpochRecord run_epoch();

  const Autoencoder& model() const { return model_; }
  const CenterState& center() const { return center_; }
  double lr() const { return schedule_.lr(); }
  TrainResult finish() &&;

 private:
  void evaluate(EpochRecord& record);

  const FoldData* fold_;
  TrainConfig cfg_;
  Autoencoder model_;
  AdamState adam_;
  CenterState center_;
  BatchSampler sampler_;
  Rng direction_rng_;
  PlateauSchedule schedule_;
  std::vector<SampleTag> validation_;
  Eigen::MatrixXd validation_x_;
  Autoencoder best_;
  double best_objective_;
  double best_ratio_;
  std::size_t best_epoch_ = 0;
  std::size_t epoch_ = 0;
  TrainHistory history_;
};

/// Runs cfg.epochs epochs and returns the last checkpointed model (the initial model when
/// no epoch qualified). Throws NumericalError on a non-finite loss.
TrainResult train(const FoldData& fold, const TrainConfig& cfg, const EpochSink& sink = {});

/// Validation objective used for checkpointing: AE-DSVDD loss for AE-DSVDD, otherwise the
/// reconstruction loss on the normal samples.
double validation_objective(const Autoencoder& model, const CenterState& center, ModelKind kind,
                            const Eigen::MatrixXd& x, std::span<const SampleTag> tags, double lambda);

}  // namespace mcgae
