#include "mcgae/thresholds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mcgae/metrics.hpp"

namespace mcgae {

double condition_indicator(const Eigen::Ref<const Eigen::VectorXd>& encoding,
                           const Eigen::VectorXd& center) {
  if (center.size() == 0) return encoding.squaredNorm();
  if (center.size() != encoding.size()) {
    throw ConfigError("condition_indicator: center dimension does not match encoding");
  }
  return (encoding - center).squaredNorm();
}

std::vector<double> condition_indicators(const Eigen::MatrixXd& encodings,
                                         const Eigen::VectorXd& center) {
  std::vector<double> out(static_cast<std::size_t>(encodings.cols()));
  for (Eigen::Index j = 0; j < encodings.cols(); ++j) {
    out[static_cast<std::size_t>(j)] = condition_indicator(encodings.col(j), center);
  }
  return out;
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw ConfigError("quantile of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double t_train(std::span<const double> cis) {
  if (cis.size() < 2) throw ConfigError("t_train needs at least two normal CIs");
  const MeanStd ms = aggregate(cis);
  return ms.mean + 3.0 * ms.std;
}

SigmoidFit fit_sigmoid(std::span<const double> cis) {
  if (cis.size() < 2) throw ConfigError("t_sigmoid needs at least two normal CIs");
  const double median = quantile(cis, 0.5);
  const double p99 = quantile(cis, 0.99);
  SigmoidFit fit;
  fit.midpoint = p99;
  if (!(median < p99)) {
    fit.degenerate = true;
    return fit;
  }
  // s(x) = 1 / (1 + exp(-(x - a) / b)); s(median) = 0.25 gives (a - median) / b = ln 3.
  fit.scale = (p99 - median) / std::log(3.0);
  return fit;
}

double t_sigmoid(std::span<const double> cis, Warnings* warnings) {
  const SigmoidFit fit = fit_sigmoid(cis);
  if (fit.degenerate) {
    warn(warnings, "t_sigmoid: median equals 99th percentile, falling back to t_train");
    return t_train(cis);
  }
  // s(T) = 0.6  =>  exp(-(T - a) / b) = 2/3
  return fit.midpoint + fit.scale * std::log(1.5);
}

double t_fixed(const BallConfig& ball, std::size_t normal_count, std::size_t anomalous_count) {
  ball.validate();
  if (normal_count + anomalous_count == 0) {
    throw ConfigError("t_fixed needs at least one known training point");
  }
  const double a = static_cast<double>(anomalous_count);
  const double n = static_cast<double>(normal_count);
  return ball.r1 + (ball.r2 - ball.r1) * a / (n + a);
}

double balanced_accuracy_at(std::span<const double> cis, std::span<const int> labels,
                            double threshold) {
  std::vector<int> predicted(cis.size());
  std::transform(cis.begin(), cis.end(), predicted.begin(),
                 [&](double ci) { return classify(ci, threshold); });
  return balanced_accuracy(confusion(labels, predicted));
}

OptimalThreshold t_opt(std::span<const double> cis, std::span<const int> labels) {
  if (cis.size() != labels.size()) throw ConfigError("t_opt: CIs and labels differ in length");
  std::size_t positives = 0;
  for (int y : labels) positives += y > 0 ? 1 : 0;
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw ConfigError("t_opt needs both normal and anomalous samples");
  }

  std::vector<std::size_t> order(cis.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cis[a] < cis[b]; });

  // Distinct values with the number of positives/negatives at each value.
  std::vector<double> values;
  std::vector<std::size_t> pos_at;
  std::vector<std::size_t> neg_at;
  for (std::size_t idx : order) {
    if (values.empty() || cis[idx] != values.back()) {
      values.push_back(cis[idx]);
      pos_at.push_back(0);
      neg_at.push_back(0);
    }
    (labels[idx] > 0 ? pos_at.back() : neg_at.back()) += 1;
  }

  const double span = values.back() - values.front();
  const double pad = 0.5 * (span > 0.0 ? span : std::max(std::abs(values.front()), 1.0));
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);

  OptimalThreshold best;
  double best_margin = -1.0;
  bool have = false;
  auto consider = [&](double threshold, double margin, std::size_t tn, std::size_t tp) {
    const double ba = 0.5 * (static_cast<double>(tn) / nn + static_cast<double>(tp) / np);
    const bool better = !have || ba > best.balanced_accuracy ||
                        (ba == best.balanced_accuracy &&
                         (margin > best_margin || (margin == best_margin && threshold < best.threshold)));
    if (better) {
      best = {threshold, ba};
      best_margin = margin;
      have = true;
    }
  };

  // Below every value: everything flagged anomalous.
  consider(values.front() - pad, pad, 0, positives);
  std::size_t tn = 0;
  std::size_t fn = 0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    tn += neg_at[i];
    fn += pos_at[i];
    const double mid = 0.5 * (values[i] + values[i + 1]);
    consider(mid, 0.5 * (values[i + 1] - values[i]), tn, positives - fn);
  }
  consider(values.back() + pad, pad, negatives, 0);
  return best;
}

double t_diff(double t_opt_value, double threshold) {
  if (!(t_opt_value > 0.0)) throw ConfigError("t_diff needs a positive optimal threshold");
  return (t_opt_value - threshold) / t_opt_value;
}

}  // namespace mcgae
