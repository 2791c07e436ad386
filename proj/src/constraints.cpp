#include "mcgae/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace mcgae {

void BallConfig::validate() const {
  if (!(r1 > 0.0) || !(r2 > r1) || !std::isfinite(r2)) {
    throw ConfigError("ball radii must satisfy 0 < r1 < r2");
  }
}

bool satisfies_normal(const Eigen::Ref<const Eigen::VectorXd>& z, const BallConfig& ball) {
  return z.norm() <= ball.r1;
}

bool satisfies_anomalous(const Eigen::Ref<const Eigen::VectorXd>& z, const BallConfig& ball) {
  return z.norm() > ball.r2;
}

Eigen::VectorXd random_unit_vector(Eigen::Index dim, Rng& rng) {
  Eigen::VectorXd v(dim);
  double norm = 0.0;
  while (norm == 0.0) {
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = rng.normal();
    norm = v.norm();
  }
  return v / norm;
}

Eigen::VectorXd radial_unit(const Eigen::Ref<const Eigen::VectorXd>& z, Rng& rng) {
  const double norm = z.norm();
  if (norm == 0.0) return random_unit_vector(z.size(), rng);
  return z / norm;
}

Eigen::VectorXd normal_direction(const Eigen::Ref<const Eigen::VectorXd>& z, const BallConfig& ball,
                                 Rng& rng) {
  if (satisfies_normal(z, ball)) return Eigen::VectorXd::Zero(z.size());
  return radial_unit(z, rng);
}

Eigen::VectorXd anomalous_direction(const Eigen::Ref<const Eigen::VectorXd>& z,
                                    const BallConfig& ball, Rng& rng) {
  if (satisfies_anomalous(z, ball)) return Eigen::VectorXd::Zero(z.size());
  return -radial_unit(z, rng);
}

std::vector<double> monotonicity_coefficients(std::span<const double> squared_norms,
                                              Warnings* warnings) {
  const std::size_t n = squared_norms.size();
  std::vector<double> coeff(n, 0.0);
  if (n < 2) {
    warn(warnings, "monotonicity direction needs at least two samples in a run group");
    return coeff;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return squared_norms[a] < squared_norms[b];
  });
  // order is the argsort; its inverse gives each sample's rank.
  double ss = 0.0;
  for (std::size_t rank = 0; rank < n; ++rank) {
    const std::size_t sample = order[rank];
    const double d = static_cast<double>(rank) - static_cast<double>(sample);
    coeff[sample] = d;
    ss += d * d;
  }
  if (ss == 0.0) return coeff;
  const double inv = 1.0 / std::sqrt(ss);
  for (double& c : coeff) c *= inv;
  return coeff;
}

bool DirectionBundle::any_active() const {
  return !normal.isZero(0.0) || !anomalous.isZero(0.0) || !monotonic.isZero(0.0);
}

namespace {

// Columns of each run's normal and unlabeled samples, sorted by frame.
std::map<std::size_t, std::vector<Eigen::Index>> run_groups(std::span<const SampleTag> tags) {
  std::map<std::size_t, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i].label == Label::kAnomalous) continue;
    groups[tags[i].run].push_back(static_cast<Eigen::Index>(i));
  }
  for (auto& [run, cols] : groups) {
    std::stable_sort(cols.begin(), cols.end(), [&](Eigen::Index a, Eigen::Index b) {
      return tags[static_cast<std::size_t>(a)].frame < tags[static_cast<std::size_t>(b)].frame;
    });
  }
  return groups;
}

}  // namespace

DirectionBundle compute_directions(const Eigen::MatrixXd& z, std::span<const SampleTag> tags,
                                   const BallConfig& ball, const ConstraintSet& active, Rng& rng,
                                   Warnings* warnings) {
  if (static_cast<std::size_t>(z.cols()) != tags.size()) {
    throw ConfigError("compute_directions: encodings and tags differ in count");
  }
  const Eigen::Index dim = z.rows();
  const Eigen::Index n = z.cols();
  DirectionBundle b;
  b.normal = Eigen::MatrixXd::Zero(dim, n);
  b.anomalous = Eigen::MatrixXd::Zero(dim, n);
  b.monotonic = Eigen::MatrixXd::Zero(dim, n);
  b.mono_coefficients.assign(static_cast<std::size_t>(n), 0.0);
  b.normal_satisfied.assign(static_cast<std::size_t>(n), true);
  b.anomalous_satisfied.assign(static_cast<std::size_t>(n), true);

  for (Eigen::Index j = 0; j < n; ++j) {
    const auto i = static_cast<std::size_t>(j);
    if (active.normal && tags[i].label == Label::kNormal) {
      b.normal_satisfied[i] = satisfies_normal(z.col(j), ball);
      if (!b.normal_satisfied[i]) b.normal.col(j) = radial_unit(z.col(j), rng);
    } else if (active.anomalous && tags[i].label == Label::kAnomalous) {
      b.anomalous_satisfied[i] = satisfies_anomalous(z.col(j), ball);
      if (!b.anomalous_satisfied[i]) b.anomalous.col(j) = -radial_unit(z.col(j), rng);
    }
  }

  if (active.monotonic) {
    for (const auto& [run, cols] : run_groups(tags)) {
      std::vector<double> sq(cols.size());
      for (std::size_t k = 0; k < cols.size(); ++k) sq[k] = z.col(cols[k]).squaredNorm();
      const auto coeff = monotonicity_coefficients(sq, warnings);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        if (coeff[k] == 0.0) continue;
        b.mono_coefficients[static_cast<std::size_t>(cols[k])] = coeff[k];
        b.monotonic.col(cols[k]) = coeff[k] * radial_unit(z.col(cols[k]), rng);
      }
    }
  }
  return b;
}

SatisfactionRatios satisfaction_ratio(const Eigen::MatrixXd& z, std::span<const SampleTag> tags,
                                      const BallConfig& ball, const ConstraintSet& active) {
  if (static_cast<std::size_t>(z.cols()) != tags.size()) {
    throw ConfigError("satisfaction_ratio: encodings and tags differ in count");
  }
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  SatisfactionRatios r;
  std::size_t normal_ok = 0;
  std::size_t anomalous_ok = 0;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto col = z.col(static_cast<Eigen::Index>(i));
    if (tags[i].label == Label::kNormal) {
      ++r.normal_count;
      normal_ok += satisfies_normal(col, ball) ? 1 : 0;
    } else if (tags[i].label == Label::kAnomalous) {
      ++r.anomalous_count;
      anomalous_ok += satisfies_anomalous(col, ball) ? 1 : 0;
    }
  }
  std::size_t pairs_ok = 0;
  if (active.monotonic) {
    for (const auto& [run, cols] : run_groups(tags)) {
      std::vector<double> sq(cols.size());
      for (std::size_t k = 0; k < cols.size(); ++k) sq[k] = z.col(cols[k]).squaredNorm();
      for (std::size_t a = 0; a < sq.size(); ++a) {
        for (std::size_t c = a + 1; c < sq.size(); ++c) {
          ++r.pair_count;
          pairs_ok += sq[a] < sq[c] ? 1 : 0;
        }
      }
    }
  }

  auto ratio = [](std::size_t ok, std::size_t total) {
    return total == 0 ? kNaN : static_cast<double>(ok) / static_cast<double>(total);
  };
  r.normal = ratio(normal_ok, r.normal_count);
  r.anomalous = ratio(anomalous_ok, r.anomalous_count);
  r.monotonic = active.monotonic ? ratio(pairs_ok, r.pair_count) : kNaN;

  double sum = 0.0;
  int families = 0;
  for (auto [on, value] : {std::pair{active.normal, r.normal}, std::pair{active.anomalous, r.anomalous},
                           std::pair{active.monotonic, r.monotonic}}) {
    if (on && !std::isnan(value)) {
      sum += value;
      ++families;
    }
  }
  r.combined = families == 0 ? kNaN : sum / families;
  return r;
}

}  // namespace mcgae
