#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mcgae/common.hpp"

namespace mcgae {

/// Radii of the normal ball B[0, r1] and the anomalous exclusion ball B[0, r2].
struct BallConfig {
  double r1 = 1.0;
  double r2 = 2.0;

  void validate() const;
};

/// ||z|| <= r1 (closed ball).
bool satisfies_normal(const Eigen::Ref<const Eigen::VectorXd>& z, const BallConfig& ball);
/// ||z|| > r2 (outside the closed ball).
bool satisfies_anomalous(const Eigen::Ref<const Eigen::VectorXd>& z, const BallConfig& ball);

/// Uniform sample from the unit sphere in `dim` dimensions.
Eigen::VectorXd random_unit_vector(Eigen::Index dim, Rng& rng);

/// z / ||z|| for an encoding outside B[0, r1]; zero when satisfied.
Eigen::VectorXd normal_direction(const Eigen::Ref<const Eigen::VectorXd>& z, const BallConfig& ball,
                                 Rng& rng);
/// -z / ||z|| for an anomalous encoding inside B[0, r2]; zero when satisfied.
Eigen::VectorXd anomalous_direction(const Eigen::Ref<const Eigen::VectorXd>& z,
                                    const BallConfig& ball, Rng& rng);

/// Rank-difference coefficients for one run's time-ordered normal and unlabeled samples.
///
/// Each sample gets rank r_i in the ascending order of its squared norm (ties keep time
/// order); d_i = r_i - i is returned normalized to unit L2 norm, or all zeros when the
/// norms are already time-sorted. Fewer than two samples yields zeros and a warning.
std::vector<double> monotonicity_coefficients(std::span<const double> squared_norms,
                                              Warnings* warnings = nullptr);

/// Unit radial vector z / ||z||, or a random unit vector when z is the origin.
Eigen::VectorXd radial_unit(const Eigen::Ref<const Eigen::VectorXd>& z, Rng& rng);

/// Which constraint families are active for a model.
struct ConstraintSet {
  bool normal = true;
  bool anomalous = true;
  bool monotonic = false;
};

/// Where a sample in a batch or evaluation slice comes from.
struct SampleTag {
  std::size_t run = 0;    ///< dataset-wide run index
  std::size_t frame = 0;  ///< position in the run
  Label label = Label::kNormal;
};

/// Per-sample encoding-space directions for every active constraint.
struct DirectionBundle {
  Eigen::MatrixXd normal;     ///< D_l x n, nonzero columns unit-norm
  Eigen::MatrixXd anomalous;  ///< D_l x n
  Eigen::MatrixXd monotonic;  ///< D_l x n, coefficient times radial unit vector
  std::vector<double> mono_coefficients;  ///< per sample, 0 for samples outside any run group
  std::vector<bool> normal_satisfied;     ///< meaningful only for normal samples
  std::vector<bool> anomalous_satisfied;  ///< meaningful only for anomalous samples

  /// Sum over families, the per-sample aggregate injected at the encoding layer.
  Eigen::MatrixXd total() const { return normal + anomalous + monotonic; }
  bool any_active() const;
};

/// Directions for a batch of encodings (columns of `z`) tagged with their origin.
/// Monotonicity groups are the normal and unlabeled samples of each run, sorted by frame.
DirectionBundle compute_directions(const Eigen::MatrixXd& z, std::span<const SampleTag> tags,
                                   const BallConfig& ball, const ConstraintSet& active, Rng& rng,
                                   Warnings* warnings = nullptr);

/// Fractions of satisfied constraint instances. A family with no instances reports NaN
/// and is excluded from the combined ratio.
struct SatisfactionRatios {
  double normal = 0.0;
  double anomalous = 0.0;
  double monotonic = 0.0;
  std::size_t normal_count = 0;
  std::size_t anomalous_count = 0;
  std::size_t pair_count = 0;
  double combined = 0.0;  ///< unweighted mean over active families with instances
};

/// Ball ratios count points; the monotonicity ratio counts ordered pairs (t1 < t2) within a
/// run whose norms strictly increase.
SatisfactionRatios satisfaction_ratio(const Eigen::MatrixXd& z, std::span<const SampleTag> tags,
                                      const BallConfig& ball, const ConstraintSet& active);

}  // namespace mcgae
