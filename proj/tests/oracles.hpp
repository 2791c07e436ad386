// Independent reference implementations used only by tests. They favour obviousness over
// speed and share no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Core>

namespace oracle {

/// 1-based average ranks by counting: 1 + #smaller + (#equal others) / 2.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double smaller = 0, equal = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (j == i) continue;
      if (v[j] < v[i]) smaller += 1;
      else if (v[j] == v[i]) equal += 1;
    }
    r[i] = 1.0 + smaller + equal / 2.0;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& t) {
  return pearson(ranks(x), ranks(t));
}

/// Tie-free closed form 1 - 6 sum d^2 / (n (n^2 - 1)) with ranks from pairwise comparisons.
inline double spearman_tie_free(const std::vector<double>& x, const std::vector<double>& t) {
  const auto rx = ranks(x);
  const auto rt = ranks(t);
  double d2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - rt[i]) * (rx[i] - rt[i]);
  const double n = static_cast<double>(x.size());
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

/// BA of the rule "anomalous iff ci > T"; labels are +1 anomalous, -1 normal.
inline double ba_at(const std::vector<double>& ci, const std::vector<int>& y, double t) {
  double tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < ci.size(); ++i) {
    const bool pred = ci[i] > t;
    if (y[i] == 1) (pred ? tp : fn) += 1;
    else (pred ? fp : tn) += 1;
  }
  return 0.5 * (tn / (tn + fp) + tp / (tp + fn));
}

/// Best BA over every threshold that changes the partition: each observed value, and one
/// value below all of them.
inline double best_ba(const std::vector<double>& ci, const std::vector<int>& y) {
  double best = ba_at(ci, y, *std::min_element(ci.begin(), ci.end()) - 1.0);
  for (double v : ci) best = std::max(best, ba_at(ci, y, v));
  return best;
}

/// Quantile with linear interpolation at position q (n - 1) of the sorted sample.
inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Root of a monotone increasing f on [lo, hi] by bisection.
inline double bisect(const std::function<double(double)>& f, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < 0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Threshold where the logistic through (median, 0.25) and (p99, 0.5) reaches 0.6, found
/// numerically.
inline double sigmoid_threshold(const std::vector<double>& cis) {
  const double med = quantile(cis, 0.5);
  const double p99 = quantile(cis, 0.99);
  // s(x) = 1 / (1 + exp(-(x - a) / b)); s(p99) = 0.5 fixes a, s(med) = 0.25 fixes b.
  const double a = p99;
  const double b = bisect([&](double bb) { return 1.0 / (1.0 + std::exp(-(med - a) / bb)) - 0.25; },
                          1e-12, 1e12);
  const double span = 100.0 * (b + std::abs(a) + 1.0);
  return bisect([&](double x) { return 1.0 / (1.0 + std::exp(-(x - a) / b)) - 0.6; }, a - span, a + span);
}

/// Ranks in the 0-based sense of the stable ascending order of `v` (position each element
/// lands at), found by trying every permutation.
inline std::vector<double> permutation_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> perm(v.size());
  std::iota(perm.begin(), perm.end(), 0);
  do {
    bool sorted = true;
    for (std::size_t k = 1; k < perm.size(); ++k) {
      const double a = v[perm[k - 1]], b = v[perm[k]];
      if (a > b || (a == b && perm[k - 1] > perm[k])) sorted = false;
    }
    if (sorted) break;
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<double> r(v.size());
  for (std::size_t pos = 0; pos < perm.size(); ++pos) r[perm[pos]] = static_cast<double>(pos);
  return r;
}

/// Central finite difference of a scalar function of a vector.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                   double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
inline double max_rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& n, double floor = 1e-4) {
  double worst = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(n[i]), floor});
    worst = std::max(worst, std::abs(a[i] - n[i]) / scale);
  }
  return worst;
}

}  // namespace oracle
