#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mcgae/common.hpp"

namespace mcgae {

/// Binary confusion counts with the anomalous class as positive.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

/// Counts from ground-truth and predicted labels, both encoded as +1 (anomalous) / -1 (normal).
ConfusionCounts confusion(std::span<const int> truth, std::span<const int> predicted);

/// Mean of per-class recalls. Throws ConfigError when a class is absent.
double balanced_accuracy(const ConfusionCounts& counts);

/// The all-anomalous predictor.
ConfusionCounts trivial_baseline(std::span<const int> truth);

/// Fractional (average) ranks, 1-based; ties share the mean of the positions they occupy.
std::vector<double> average_ranks(std::span<const double> values);

struct SpearmanResult {
  double rho = 0.0;
  /// False when either rank vector has zero variance; rho is NaN then.
  bool defined = false;
};

/// Pearson correlation between the average-rank vectors of `values` and `times`.
SpearmanResult spearman_rho(std::span<const double> values, std::span<const double> times);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  ///< population (1/n)
  std::size_t count = 0;
};

/// Mean and population standard deviation; NaN entries are skipped.
MeanStd aggregate(std::span<const double> values);

}  // namespace mcgae
