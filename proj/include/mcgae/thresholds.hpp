#pragma once

#include <span>

#include <Eigen/Core>

#include "mcgae/common.hpp"
#include "mcgae/constraints.hpp"

namespace mcgae {

/// Condition indicator: squared distance of an encoding to `center` (AE-DSVDD)
/// or to the origin (constraint-guided models, pass an empty center).
double condition_indicator(const Eigen::Ref<const Eigen::VectorXd>& encoding,
                           const Eigen::VectorXd& center);

/// Column-wise condition indicators for a D_l x n encoding matrix.
std::vector<double> condition_indicators(const Eigen::MatrixXd& encodings,
                                         const Eigen::VectorXd& center);

/// +1 (anomalous) iff ci > threshold, else -1. The boundary belongs to the normal class.
inline int classify(double ci, double threshold) { return ci > threshold ? 1 : -1; }

/// Linear-interpolation quantile of unsorted data, q in [0, 1].
double quantile(std::span<const double> values, double q);

/// mu + 3 sigma over normal training CIs (population sigma). Needs >= 2 values.
double t_train(std::span<const double> normal_train_cis);

/// Logistic fitted so the median maps to 0.25 and the 99th percentile to 0.5 (supremum 1),
/// inverted at 0.6. Falls back to t_train with a warning when median == p99.
double t_sigmoid(std::span<const double> normal_train_cis, Warnings* warnings = nullptr);

/// Closed-form parameters of the fitted logistic, exposed for diagnostics.
struct SigmoidFit {
  double midpoint = 0.0;  ///< value mapped to 0.5
  double scale = 0.0;     ///< logistic temperature
  bool degenerate = false;
};
SigmoidFit fit_sigmoid(std::span<const double> normal_train_cis);

/// R1 + (R2 - R1) * A / (N + A).
double t_fixed(const BallConfig& ball, std::size_t normal_count, std::size_t anomalous_count);

struct OptimalThreshold {
  double threshold = 0.0;
  double balanced_accuracy = 0.0;
};

/// Exhaustive sweep over midpoints of consecutive distinct CIs plus one sentinel on each side.
/// labels: +1 anomalous, -1 normal. Throws ConfigError when a class is absent.
OptimalThreshold t_opt(std::span<const double> cis, std::span<const int> labels);

/// (T_opt - T) / T_opt. Throws ConfigError when T_opt <= 0.
double t_diff(double t_opt_value, double threshold);

/// BA of a fixed threshold on labeled CIs.
double balanced_accuracy_at(std::span<const double> cis, std::span<const int> labels,
                            double threshold);

}  // namespace mcgae
