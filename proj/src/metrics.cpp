#include "mcgae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mcgae {

ConfusionCounts confusion(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) {
    throw ConfigError("confusion: label vectors differ in length");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool positive = truth[i] > 0;
    const bool flagged = predicted[i] > 0;
    if (positive && flagged) ++c.tp;
    else if (positive) ++c.fn;
    else if (flagged) ++c.fp;
    else ++c.tn;
  }
  return c;
}

double balanced_accuracy(const ConfusionCounts& c) {
  if (c.tn + c.fp == 0 || c.tp + c.fn == 0) {
    throw ConfigError("balanced accuracy is undefined when a class is absent");
  }
  const double specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  const double recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return 0.5 * (specificity + recall);
}

ConfusionCounts trivial_baseline(std::span<const int> truth) {
  ConfusionCounts c;
  for (int y : truth) {
    if (y > 0) ++c.tp;
    else ++c.fp;
  }
  return c;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 (0-based) -> 1-based mean rank
    const double rank = 0.5 * static_cast<double>(i + j + 1);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

SpearmanResult spearman_rho(std::span<const double> values, std::span<const double> times) {
  if (values.size() != times.size()) {
    throw ConfigError("spearman_rho: sequences differ in length");
  }
  if (values.size() < 2) {
    throw ConfigError("spearman_rho needs at least two samples");
  }
  const auto ra = average_ranks(values);
  const auto rb = average_ranks(times);
  const double n = static_cast<double>(ra.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0;
  double va = 0.0;
  double vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - ma;
    const double db = rb[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) {
    return {std::numeric_limits<double>::quiet_NaN(), false};
  }
  const double rho = cov / std::sqrt(va * vb);
  return {std::clamp(rho, -1.0, 1.0), true};
}

MeanStd aggregate(std::span<const double> values) {
  MeanStd out;
  double sum = 0.0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++out.count;
  }
  if (out.count == 0) {
    out.mean = out.std = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.mean = sum / static_cast<double>(out.count);
  double ss = 0.0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    ss += (v - out.mean) * (v - out.mean);
  }
  out.std = std::sqrt(ss / static_cast<double>(out.count));
  return out;
}

}  // namespace mcgae
