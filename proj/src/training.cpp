#include "mcgae/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mcgae/thresholds.hpp"

namespace mcgae {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kAutoencoder: return "AE";
    case ModelKind::kAeDsvdd: return "AE-DSVDD";
    case ModelKind::kCgae: return "CGAE";
    case ModelKind::kMcgae: return "MCGAE";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "AE" || name == "ae") return ModelKind::kAutoencoder;
  if (name == "AE-DSVDD" || name == "ae-dsvdd" || name == "aedsvdd") return ModelKind::kAeDsvdd;
  if (name == "CGAE" || name == "cgae") return ModelKind::kCgae;
  if (name == "MCGAE" || name == "mcgae") return ModelKind::kMcgae;
  throw ConfigError("unknown method '" + name + "'");
}

std::string to_string(ReconSet r) {
  switch (r) {
    case ReconSet::kN: return "n";
    case ReconSet::kNU: return "nu";
    case ReconSet::kNA: return "na";
    case ReconSet::kNUA: return "nua";
  }
  return "?";
}

ReconSet recon_set_from_string(const std::string& name) {
  if (name == "n") return ReconSet::kN;
  if (name == "nu") return ReconSet::kNU;
  if (name == "na") return ReconSet::kNA;
  if (name == "nua") return ReconSet::kNUA;
  throw ConfigError("unknown recon_set '" + name + "' (expected n, nu, na or nua)");
}

ConstraintSet active_constraints(ModelKind kind) {
  switch (kind) {
    case ModelKind::kCgae: return {true, true, false};
    case ModelKind::kMcgae: return {true, true, true};
    default: return {false, false, false};
  }
}

void TrainConfig::validate() const {
  ball.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("train config: lambda must be >= 0");
  if (allow_zero_rescale) {
    if (!(rescale >= 0.0)) throw ConfigError("train config: rescale must be >= 0");
  } else if (!(rescale > 1.0) || !std::isfinite(rescale)) {
    throw ConfigError("train config: rescale must be > 1");
  }
  if (!(zeta > 0.0)) throw ConfigError("train config: zeta must be > 0");
  if (!(lr0 > 0.0) || !(lr_min > 0.0) || lr_min > lr0) {
    throw ConfigError("train config: need 0 < lr_min <= lr0");
  }
  if (plateau_patience == 0) throw ConfigError("train config: plateau_patience must be positive");
  if (latent_dim == 0) throw ConfigError("train config: latent_dim must be positive");
  for (auto h : hidden) {
    if (h == 0) throw ConfigError("train config: hidden widths must be positive");
  }
  if (recon_set != ReconSet::kN && model_kind != ModelKind::kMcgae) {
    throw ConfigError("train config: recon_set other than 'n' is only defined for MCGAE");
  }
  batches.validate();
}

ArchitectureSpec TrainConfig::architecture(std::size_t input_dim) const {
  auto arch = ArchitectureSpec::symmetric(input_dim, hidden, latent_dim, activation);
  arch.validate();
  return arch;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"model_kind", to_string(c.model_kind)},
          {"r1", c.ball.r1},
          {"r2", c.ball.r2},
          {"lambda", c.lambda},
          {"rescale", c.rescale},
          {"zeta", c.zeta},
          {"lr0", c.lr0},
          {"lr_min", c.lr_min},
          {"plateau_patience", c.plateau_patience},
          {"epochs", c.epochs},
          {"recon_set", to_string(c.recon_set)},
          {"scale_mode", c.scale_mode == ScaleMode::kBatch ? "batch" : "per_sample"},
          {"seed", c.seed},
          {"hidden", c.hidden},
          {"latent_dim", c.latent_dim},
          {"activation", to_string(c.activation)},
          {"batches", to_json(c.batches)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "model_kind") c.model_kind = model_kind_from_string(value.get<std::string>());
      else if (key == "r1") c.ball.r1 = value.get<double>();
      else if (key == "r2") c.ball.r2 = value.get<double>();
      else if (key == "lambda") c.lambda = value.get<double>();
      else if (key == "rescale") c.rescale = value.get<double>();
      else if (key == "zeta") c.zeta = value.get<double>();
      else if (key == "lr0") c.lr0 = value.get<double>();
      else if (key == "lr_min") c.lr_min = value.get<double>();
      else if (key == "plateau_patience") c.plateau_patience = value.get<std::size_t>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "recon_set") c.recon_set = recon_set_from_string(value.get<std::string>());
      else if (key == "scale_mode") {
        const auto mode = value.get<std::string>();
        if (mode == "batch") c.scale_mode = ScaleMode::kBatch;
        else if (mode == "per_sample") c.scale_mode = ScaleMode::kPerSample;
        else throw ConfigError("train config: scale_mode must be 'batch' or 'per_sample'");
      } else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "hidden") c.hidden = value.get<std::vector<std::size_t>>();
      else if (key == "latent_dim") c.latent_dim = value.get<std::size_t>();
      else if (key == "activation") c.activation = activation_from_string(value.get<std::string>());
      else if (key == "batches") c.batches = batch_config_from_json(value, c.batches);
      else throw ConfigError("train config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

std::vector<std::size_t> select_recon_set(std::span<const SampleTag> samples, ReconSet set) {
  const bool with_u = set == ReconSet::kNU || set == ReconSet::kNUA;
  const bool with_a = set == ReconSet::kNA || set == ReconSet::kNUA;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Label l = samples[i].label;
    if (l == Label::kNormal || (with_u && l == Label::kUnlabeled) || (with_a && l == Label::kAnomalous)) {
      out.push_back(i);
    }
  }
  return out;
}

CenterState init_center(const Eigen::MatrixXd& normal_encodings) {
  if (normal_encodings.cols() == 0) throw ConfigError("center initialization needs normal encodings");
  CenterState center{normal_encodings.rowwise().mean()};
  for (Eigen::Index j = 0; j < center.c.size(); ++j) {
    double& v = center.c[j];
    if (std::abs(v) < 0.1) v = v < 0.0 ? -0.1 : 0.1;
  }
  return center;
}

namespace {

std::size_t count_label(std::span<const SampleTag> tags, Label label) {
  return static_cast<std::size_t>(
      std::count_if(tags.begin(), tags.end(), [&](const SampleTag& t) { return t.label == label; }));
}

}  // namespace

double aedsvdd_loss(const ForwardTrace& trace, const Eigen::MatrixXd& x,
                    std::span<const SampleTag> tags, const CenterState& center, double lambda) {
  const Eigen::MatrixXd& z = trace.encodings();
  const std::size_t n_normal = count_label(tags, Label::kNormal);
  const std::size_t n_anom = count_label(tags, Label::kAnomalous);
  if (n_normal == 0) throw ConfigError("AE-DSVDD loss needs at least one normal sample");
  double normal_sum = 0.0;
  double anom_sum = 0.0;
  const Eigen::MatrixXd& xr = trace.reconstructions();
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const double dist = (z.col(col) - center.c).squaredNorm();
    if (tags[i].label == Label::kNormal) {
      normal_sum += (xr.col(col) - x.col(col)).squaredNorm() + dist;
    } else if (tags[i].label == Label::kAnomalous) {
      anom_sum += 1.0 / std::max(dist, kCenterClamp);
    }
  }
  double loss = normal_sum / static_cast<double>(n_normal);
  if (n_anom > 0) loss += lambda * anom_sum / static_cast<double>(n_anom);
  return loss;
}

Eigen::MatrixXd aedsvdd_encoding_gradient(const Eigen::MatrixXd& z, std::span<const SampleTag> tags,
                                          const CenterState& center, double lambda) {
  const std::size_t n_normal = count_label(tags, Label::kNormal);
  const std::size_t n_anom = count_label(tags, Label::kAnomalous);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(z.rows(), z.cols());
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd diff = z.col(col) - center.c;
    if (tags[i].label == Label::kNormal) {
      g.col(col) = 2.0 * diff / static_cast<double>(n_normal);
    } else if (tags[i].label == Label::kAnomalous) {
      const double dist = diff.squaredNorm();
      if (dist < kCenterClamp) continue;  // clamped branch is flat
      g.col(col) = -lambda * 2.0 * diff / (dist * dist * static_cast<double>(n_anom));
    }
  }
  return g;
}

EffectiveGradient effective_gradient(const Autoencoder& model, const ForwardTrace& trace,
                                     const Gradients& loss_grad,
                                     std::span<const std::size_t> normal_recon,
                                     const DirectionBundle& bundle, const TrainConfig& cfg) {
  EffectiveGradient out;
  out.injection = bundle.total();
  double batch_norm2 = 0.0;
  for (auto i : normal_recon) batch_norm2 += loss_grad.encoding.col(static_cast<Eigen::Index>(i)).squaredNorm();
  const double batch_scale = constraint_scale(std::sqrt(batch_norm2), cfg.zeta);
  if (cfg.scale_mode == ScaleMode::kBatch) {
    out.injection *= cfg.rescale * batch_scale;
    out.scale = batch_scale;
  } else {
    // Samples outside the normal reconstruction set have no gradient of their own and fall
    // back to the batch scale.
    std::vector<double> s(static_cast<std::size_t>(out.injection.cols()), batch_scale);
    for (auto i : normal_recon) {
      s[i] = constraint_scale(loss_grad.encoding.col(static_cast<Eigen::Index>(i)).norm(), cfg.zeta);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      out.injection.col(static_cast<Eigen::Index>(i)) *= cfg.rescale * s[i];
      sum += s[i];
    }
    out.scale = s.empty() ? batch_scale : sum / static_cast<double>(s.size());
  }
  out.params = loss_grad.params;
  if (bundle.any_active() && cfg.rescale != 0.0) out.params += model.encoder_vjp(trace, out.injection);
  return out;
}

bool PlateauSchedule::record(bool improved) {
  if (improved) {
    stale_ = 0;
    return false;
  }
  if (++stale_ < patience_) return false;
  stale_ = 0;
  lr_ = std::max(lr_ * 0.5, lr_min_);
  return true;
}

nlohmann::json to_json(const EpochRecord& r) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  return {{"event", "epoch"},
          {"epoch", r.epoch},
          {"train_loss", num(r.train_loss)},
          {"validation_objective", num(r.validation_objective)},
          {"ratio_normal", num(r.validation_ratios.normal)},
          {"ratio_anomalous", num(r.validation_ratios.anomalous)},
          {"ratio_monotonic", num(r.validation_ratios.monotonic)},
          {"ratio_combined", num(r.validation_ratios.combined)},
          {"lr", r.lr},
          {"checkpoint", r.checkpoint},
          {"lr_halved", r.lr_halved}};
}

double validation_objective(const Autoencoder& model, const CenterState& center, ModelKind kind,
                            const Eigen::MatrixXd& x, std::span<const SampleTag> tags, double lambda) {
  const ForwardTrace trace = model.forward(x);
  if (kind == ModelKind::kAeDsvdd) return aedsvdd_loss(trace, x, tags, center, lambda);
  const auto normals = select_recon_set(tags, ReconSet::kN);
  return recon_loss(trace, x, normals).value;
}

namespace {

std::vector<SampleTag> normals_of(const std::vector<SampleTag>& tags) {
  std::vector<SampleTag> out;
  for (const auto& t : tags) {
    if (t.label == Label::kNormal) out.push_back(t);
  }
  return out;
}

void merge_warnings(Warnings& into, const Warnings& from) {
  for (const auto& w : from) {
    if (std::find(into.begin(), into.end(), w) == into.end()) into.push_back(w);
  }
}

}  // namespace

Trainer::Trainer(const FoldData& fold, TrainConfig cfg)
    : fold_(&fold),
      cfg_((cfg.validate(), std::move(cfg))),
      model_(Autoencoder::init(cfg_.architecture(fold.input_dim()), mix_seed(cfg_.seed, 1))),
      adam_(model_.parameter_count()),
      sampler_(fold, cfg_.batches, mix_seed(cfg_.seed, 2)),
      direction_rng_(mix_seed(cfg_.seed, 3)),
      schedule_(cfg_.lr0, cfg_.lr_min, cfg_.plateau_patience),
      validation_(fold.flat_validation()),
      validation_x_(gather(*fold.dataset, validation_)),
      best_(model_),
      best_objective_(std::numeric_limits<double>::infinity()),
      best_ratio_(-std::numeric_limits<double>::infinity()) {
  if (cfg_.model_kind == ModelKind::kAeDsvdd) {
    const auto normals = normals_of(fold.flat_train());
    center_ = init_center(model_.encode(gather(*fold.dataset, normals)));
  }
}

double Trainer::step(const Batch& batch) {
  const ForwardTrace trace = model_.forward(batch.features);
  std::span<const SampleTag> tags(batch.samples);
  double loss = 0.0;
  Eigen::VectorXd grad;
  switch (cfg_.model_kind) {
    case ModelKind::kAeDsvdd: {
      const auto normals = select_recon_set(tags, ReconSet::kN);
      const Eigen::MatrixXd inj = aedsvdd_encoding_gradient(trace.encodings(), tags, center_, cfg_.lambda);
      loss = aedsvdd_loss(trace, batch.features, tags, center_, cfg_.lambda);
      grad = model_.backward(trace, batch.features, normals, inj).params;
      break;
    }
    case ModelKind::kAutoencoder: {
      const auto recon = select_recon_set(tags, cfg_.recon_set);
      loss = recon_loss(trace, batch.features, recon).value;
      grad = model_.backward(trace, batch.features, recon).params;
      break;
    }
    case ModelKind::kCgae:
    case ModelKind::kMcgae: {
      const auto recon = select_recon_set(tags, cfg_.recon_set);
      loss = recon_loss(trace, batch.features, recon).value;
      const Gradients g = model_.backward(trace, batch.features, recon);
      Warnings w;
      const DirectionBundle bundle = compute_directions(trace.encodings(), tags, cfg_.ball,
                                                        active_constraints(cfg_.model_kind),
                                                        direction_rng_, &w);
      merge_warnings(history_.warnings, w);
      std::vector<std::size_t> normal_recon;
      for (auto i : recon) {
        if (tags[i].label == Label::kNormal) normal_recon.push_back(i);
      }
      grad = effective_gradient(model_, trace, g, normal_recon, bundle, cfg_).params;
      break;
    }
  }
  if (!std::isfinite(loss) || !grad.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite " << (std::isfinite(loss) ? "gradient" : "loss") << " during epoch " << (epoch_ + 1)
        << " (" << to_string(cfg_.model_kind) << ", lr " << schedule_.lr() << ")";
    throw NumericalError(msg.str());
  }
  adam_step(adam_, model_.params(), grad, schedule_.lr());
  if (!model_.all_finite()) throw NumericalError("parameters became non-finite during epoch " + std::to_string(epoch_ + 1));
  return loss;
}

EpochRecord Trainer::run_epoch() {
  EpochRecord record;
  record.epoch = ++epoch_;
  record.lr = schedule_.lr();
  Warnings w;
  const auto batches = sampler_.next_epoch(&w);
  merge_warnings(history_.warnings, w);
  double total = 0.0;
  for (const auto& b : batches) total += step(b);
  record.train_loss = batches.empty() ? 0.0 : total / static_cast<double>(batches.size());
  evaluate(record);
  history_.epochs.push_back(record);
  return record;
}

void Trainer::evaluate(EpochRecord& record) {
  const double objective = validation_objective(model_, center_, cfg_.model_kind, validation_x_,
                                                validation_, cfg_.lambda);
  if (!std::isfinite(objective)) {
    throw NumericalError("non-finite validation objective after epoch " + std::to_string(record.epoch));
  }
  record.validation_objective = objective;
  ConstraintSet families = active_constraints(cfg_.model_kind);
  const bool constrained = families.normal || families.anomalous || families.monotonic;
  if (!constrained) families = {true, true, true};  // reported only
  record.validation_ratios = satisfaction_ratio(model_.encode(validation_x_), validation_, cfg_.ball, families);
  double ratio = record.validation_ratios.combined;
  if (std::isnan(ratio)) ratio = 1.0;

  bool improved = objective < best_objective_;
  if (constrained) improved = improved && (ratio > best_ratio_ || ratio >= 0.95);
  if (improved) {
    best_ = model_;
    best_objective_ = objective;
    best_ratio_ = ratio;
    best_epoch_ = record.epoch;
    record.checkpoint = true;
  }
  record.lr_halved = schedule_.record(improved);
}

TrainResult Trainer::finish() && {
  return TrainResult{std::move(best_), std::move(center_), std::move(history_), best_epoch_};
}

TrainResult train(const FoldData& fold, const TrainConfig& cfg, const EpochSink& sink) {
  Trainer trainer(fold, cfg);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const EpochRecord record = trainer.run_epoch();
    if (sink) sink(record);
  }
  return std::move(trainer).finish();
}

}  // namespace mcgae
