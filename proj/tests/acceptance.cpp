// Acceptance checks A1-A9. Prints one PASS/FAIL line per criterion and exits nonzero if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mcgae/constraints.hpp"
#include "mcgae/experiment.hpp"
#include "mcgae/metrics.hpp"
#include "mcgae/network.hpp"
#include "mcgae/thresholds.hpp"
#include "mcgae/training.hpp"
#include "oracles.hpp"

using namespace mcgae;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const char* id, const char* name, const Outcome& o, double seconds) {
  std::printf("%s %s  %s  (%s; %.1f s)\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), seconds);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

template <typename F>
void run(const char* id, const char* name, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = f();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(id, name, o, s);
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream ss;
  ss.precision(prec);
  ss << v;
  return ss.str();
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

Eigen::VectorXd flat(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

// A1 -----------------------------------------------------------------------------------

Outcome gradients() {
  Rng rng(101);
  double worst_theta = 0, worst_e = 0;
  const int nets = 24;
  for (int k = 0; k < nets; ++k) {
    const std::size_t in = 3 + rng.below(5), latent = 1 + rng.below(3);
    std::vector<std::size_t> hidden;
    for (std::size_t h = rng.below(3); h > 0; --h) hidden.push_back(2 + rng.below(5));
    const auto arch = ArchitectureSpec::symmetric(in, hidden, latent, Activation::kTanh);
    const Autoencoder m = Autoencoder::init(arch, 1000 + static_cast<std::uint64_t>(k));
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(6));
    const Eigen::MatrixXd x = random_matrix(static_cast<Eigen::Index>(in), n, rng);
    std::vector<std::size_t> sel;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == 0 || rng.uniform() < 0.7) sel.push_back(static_cast<std::size_t>(i));
    }
    const auto g = m.backward(m.forward(x), x, sel);
    const auto fd_theta = oracle::fd_gradient(
        [&](const Eigen::VectorXd& p) { return recon_loss(Autoencoder(arch, p).forward(x), x, sel).value; },
        m.params());
    worst_theta = std::max(worst_theta, oracle::max_rel_error(g.params, fd_theta));

    const Eigen::MatrixXd z = m.encode(x);
    const auto fd_e = oracle::fd_gradient(
        [&](const Eigen::VectorXd& zf) {
          const Eigen::MatrixXd zz = Eigen::Map<const Eigen::MatrixXd>(zf.data(), z.rows(), z.cols());
          const Eigen::MatrixXd r = m.decode(zz) - x;
          double s = 0;
          for (auto i : sel) s += r.col(static_cast<Eigen::Index>(i)).squaredNorm();
          return s / static_cast<double>(sel.size());
        },
        flat(z));
    worst_e = std::max(worst_e, oracle::max_rel_error(flat(g.encoding), fd_e));
  }
  return {worst_theta <= 1e-5 && worst_e <= 1e-5, std::to_string(nets) + " nets, max rel err theta " +
                                                      fmt(worst_theta, 3) + ", e " + fmt(worst_e, 3)};
}

// A2 -----------------------------------------------------------------------------------

Outcome directions() {
  Rng rng(202);
  std::size_t bad = 0;
  std::string first;
  auto fail = [&](const std::string& what) {
    if (bad++ == 0) first = what;
  };
  const double eps = 1e-6;
  const int cases = 10000;
  for (int c = 0; c < cases; ++c) {
    const Eigen::Index dim = 1 + static_cast<Eigen::Index>(rng.below(6));
    const double r1 = rng.uniform(0.2, 2.0);
    const BallConfig ball{r1, r1 + rng.uniform(0.1, 2.0)};
    const int kind = c % 3;
    if (kind < 2) {
      Eigen::VectorXd z = random_matrix(dim, 1, rng);
      z *= rng.uniform(0.0, 2.0 * ball.r2) / z.norm();
      const bool normal = kind == 0;
      const bool ok = normal ? satisfies_normal(z, ball) : satisfies_anomalous(z, ball);
      const Eigen::VectorXd d = normal ? normal_direction(z, ball, rng) : anomalous_direction(z, ball, rng);
      if (ok) {
        if (d.norm() != 0.0) fail("satisfied ball constraint gave a nonzero direction");
        continue;
      }
      if (std::abs(d.norm() - 1.0) > 1e-9) fail("ball direction not unit norm");
      const double moved = (z - eps * d).norm();
      if (normal && !(moved < z.norm())) fail("dir_N step does not shrink the norm");
      if (!normal && !(moved > z.norm())) fail("dir_A step does not grow the norm");
      continue;
    }
    // Monotonicity: one run of normal/unlabeled samples in time order.
    const std::size_t n = 2 + rng.below(11);
    Eigen::MatrixXd z = random_matrix(dim, static_cast<Eigen::Index>(n), rng);
    const bool sorted = rng.uniform() < 0.3;
    const bool tied = rng.uniform() < 0.3;
    std::vector<double> norms(n);
    for (auto& v : norms) v = tied ? static_cast<double>(1 + rng.below(3)) : rng.uniform(0.1, 3.0);
    if (sorted) std::sort(norms.begin(), norms.end());
    for (std::size_t i = 0; i < n; ++i) {
      z.col(static_cast<Eigen::Index>(i)) *= norms[i] / z.col(static_cast<Eigen::Index>(i)).norm();
    }
    std::vector<SampleTag> tags;
    for (std::size_t i = 0; i < n; ++i) tags.push_back({0, i, i < n / 2 ? Label::kNormal : Label::kUnlabeled});
    const auto b = compute_directions(z, tags, ball, ConstraintSet{false, false, true}, rng);
    const auto& d = b.mono_coefficients;
    const double sum = std::accumulate(d.begin(), d.end(), 0.0);
    double sq = 0;
    for (double v : d) sq += v * v;
    const bool all_zero = sq == 0.0;
    // Norms of the constructed columns carry rounding, so time-sortedness is judged on them.
    bool is_sorted = true;
    for (std::size_t i = 1; i < n; ++i) {
      if (z.col(static_cast<Eigen::Index>(i)).squaredNorm() < z.col(static_cast<Eigen::Index>(i - 1)).squaredNorm())
        is_sorted = false;
    }
    if (std::abs(sum) > 1e-12) fail("dir_mono coefficients do not sum to 0");
    if (!all_zero && std::abs(std::sqrt(sq) - 1.0) > 1e-9) fail("nonzero dir_mono not unit norm");
    if (all_zero != is_sorted) fail("dir_mono zero iff time-sorted violated");
    for (std::size_t i = 0; i < n; ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      if (d[i] == 0.0) {
        if (b.monotonic.col(col).norm() != 0.0) fail("zero coefficient with nonzero direction");
        continue;
      }
      const double before = z.col(col).norm();
      const double after = (z.col(col) - eps * b.monotonic.col(col)).norm();
      if (d[i] > 0 && !(after < before)) fail("positive mono coefficient does not shrink the norm");
      if (d[i] < 0 && !(after > before)) fail("negative mono coefficient does not grow the norm");
    }
  }
  return {bad == 0, std::to_string(cases) + " cases, " + std::to_string(bad) + " violations" +
                        (bad ? " (first: " + first + ")" : "")};
}

// A6 -----------------------------------------------------------------------------------

Outcome thresholds() {
  Rng rng(606);
  std::size_t bad_fixed = 0, bad_opt = 0, bad_diff = 0;
  double worst_sig = 0;
  for (int k = 0; k < 1000; ++k) {
    const double r1 = rng.uniform(0.01, 5.0);
    const BallConfig ball{r1, r1 + rng.uniform(0.01, 5.0)};
    const std::size_t n = rng.below(2000), a = rng.below(2000) + (n == 0 ? 1 : 0);
    const double want = ball.r1 + (ball.r2 - ball.r1) * static_cast<double>(a) / static_cast<double>(n + a);
    if (t_fixed(ball, n, a) != want) ++bad_fixed;

    const std::size_t m = 2 + rng.below(80);
    std::vector<double> ci(m);
    std::vector<int> y(m);
    for (std::size_t i = 0; i < m; ++i) {
      y[i] = rng.uniform() < 0.5 ? 1 : -1;
      ci[i] = std::round((rng.normal() + (y[i] == 1 ? 0.8 : 0.0)) * 8.0) / 8.0;
    }
    y[0] = 1;
    y[1] = -1;
    const auto opt = t_opt(ci, y);
    if (std::abs(opt.balanced_accuracy - oracle::best_ba(ci, y)) > 1e-15) ++bad_opt;
    for (double v : ci) {
      if (oracle::ba_at(ci, y, v) > opt.balanced_accuracy + 1e-15) ++bad_opt;
    }

    std::vector<double> normals(100 + rng.below(400));
    for (auto& v : normals) v = std::exp(rng.normal() * rng.uniform(0.1, 1.5)) * rng.uniform(0.1, 10.0);
    worst_sig = std::max(worst_sig, std::abs(t_sigmoid(normals) - oracle::sigmoid_threshold(normals)));

    const double to = rng.uniform(0.01, 10.0), t = rng.uniform(0.0, 20.0);
    if (t_diff(to, t) != (to - t) / to) ++bad_diff;
  }
  const bool ok = bad_fixed == 0 && bad_opt == 0 && bad_diff == 0 && worst_sig <= 1e-9;
  return {ok, "1000 cases each; t_fixed mismatches " + std::to_string(bad_fixed) + ", t_opt dominated " +
                  std::to_string(bad_opt) + ", t_sigmoid max err " + fmt(worst_sig, 3) + ", t_diff mismatches " +
                  std::to_string(bad_diff)};
}

// A7 -----------------------------------------------------------------------------------

Outcome metric_oracles() {
  Rng rng(707);
  double worst = 0;
  std::size_t undefined_mismatch = 0, trivial_bad = 0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 2 + rng.below(60);
    const bool ties = k % 2 == 0;
    std::vector<double> x(n), t(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = ties ? static_cast<double>(rng.below(5)) : rng.normal();
      t[i] = ties && rng.uniform() < 0.2 && i > 0 ? t[i - 1] : static_cast<double>(i);
    }
    const auto r = spearman_rho(x, t);
    const double want = oracle::spearman(x, t);
    if (std::isnan(want) != !r.defined) ++undefined_mismatch;
    if (r.defined) worst = std::max(worst, std::abs(r.rho - want));

    std::vector<int> y(n);
    for (auto& v : y) v = rng.uniform() < 0.5 ? 1 : -1;
    y[0] = 1;
    y[n - 1] = -1;
    if (balanced_accuracy(trivial_baseline(y)) != 0.5) ++trivial_bad;
  }
  return {worst <= 1e-12 && undefined_mismatch == 0 && trivial_bad == 0,
          "1000 sequences, max |rho - oracle| " + fmt(worst, 3) + ", trivial BA != 0.5: " +
              std::to_string(trivial_bad)};
}

// A8 -----------------------------------------------------------------------------------

Outcome reduction() {
  ExperimentSpec spec = preset_spec("desk");
  const PreparedData data = prepare_data(spec);
  std::size_t compared = 0;
  for (auto kind : {ModelKind::kCgae, ModelKind::kMcgae}) {
    for (std::size_t n_anom : {1u, 3u}) {
      const auto spec_fold = build_folds(*data.dataset, n_anom, spec.fold_seed)[0];
      const FoldData fold = materialize_fold(data.dataset, spec_fold, 5);
      TrainConfig cfg = spec.train;
      cfg.model_kind = kind;
      cfg.rescale = 0.0;
      cfg.allow_zero_rescale = true;
      cfg.lr_min = cfg.lr0;  // constant rate: checkpointing rules differ between the two kinds
      TrainConfig plain = cfg;
      plain.model_kind = ModelKind::kAutoencoder;
      Trainer a(fold, cfg), b(fold, plain);
      for (int e = 0; e < 10; ++e) {
        const auto ra = a.run_epoch();
        const auto rb = b.run_epoch();
        ++compared;
        if (a.model().params() != b.model().params() || ra.train_loss != rb.train_loss ||
            ra.validation_objective != rb.validation_objective) {
          return {false, to_string(kind) + " diverged from plain AE at epoch " + std::to_string(e + 1)};
        }
      }
    }
  }
  return {true, std::to_string(compared) + " epochs compared bitwise (CGAE, MCGAE x 2 folds, constant lr)"};
}

// A3/A4/A5/A9 on the desk sweep ------------------------------------------------------------

double num(const nlohmann::json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

struct Slice {
  std::vector<double> ratio, rho_train, ba_opt, ba_fixed, ba_train;
};

std::map<std::string, Slice> slice(const nlohmann::json& report, std::size_t n_anom) {
  std::map<std::string, Slice> out;
  for (const auto& j : report.at("jobs")) {
    if (j.at("n_anomalous_runs").get<std::size_t>() != n_anom) continue;
    auto& s = out[j.at("method").get<std::string>()];
    s.ratio.push_back(num(j.at("train_ratios").at("combined")));
    s.rho_train.push_back(num(j.at("spearman").at("train")));
    s.ba_opt.push_back(num(j.at("ba").at("T_opt")));
    s.ba_fixed.push_back(num(j.at("ba").at("T_fixed")));
    s.ba_train.push_back(num(j.at("ba").at("T_train")));
  }
  return out;
}

double mean(const std::vector<double>& v) { return aggregate(v).mean; }

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome compare_trees(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    const auto other = b / rel;
    if (!fs::exists(other)) return {false, "missing in second run: " + rel.string()};
    if (slurp(entry.path()) != slurp(other)) return {false, "differs: " + rel.string()};
    ++files;
  }
  std::size_t other_files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(b)) other_files += entry.is_regular_file() ? 1 : 0;
  if (other_files != files) return {false, "file counts differ"};
  return {true, std::to_string(files) + " report/table/job files byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "mcgae_acceptance";
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  fs::remove_all(work);
  fs::create_directories(work);

  run("A1", "gradient correctness", gradients);
  run("A2", "direction properties", directions);

  const ExperimentSpec desk = preset_spec("desk");
  nlohmann::json report;
  double sweep_seconds = 0;
  {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      report = run_sweep(desk, work / "sweep_a", workers, false);
    } catch (const std::exception& e) {
      std::printf("desk sweep failed: %s\n", e.what());
    }
    sweep_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("desk sweep: %zu jobs in %.1f s\n", report.is_null() ? 0 : report.at("jobs").size(), sweep_seconds);
  }
  const auto s1 = report.is_null() ? std::map<std::string, Slice>{} : slice(report, 1);

  run("A3", "constraint attainment", [&]() -> Outcome {
    // MCGAE, fold 0, one anomalous run, three seeds.
    std::vector<double> ratios;
    for (const auto& j : report.at("jobs")) {
      if (j.at("method") == "MCGAE" && j.at("fold") == 0 && j.at("n_anomalous_runs") == 1) {
        ratios.push_back(num(j.at("train_ratios").at("combined")));
      }
    }
    const auto hits = std::count_if(ratios.begin(), ratios.end(), [](double r) { return r >= 0.95; });
    std::string list;
    for (double r : ratios) list += (list.empty() ? "" : ", ") + fmt(r);
    return {ratios.size() == 3 && hits >= 2,
            "training ratios [" + list + "], " + std::to_string(hits) + "/" + std::to_string(ratios.size()) +
                " >= 0.95"};
  });

  run("A4", "monotonicity ordering", [&]() -> Outcome {
    const double m = mean(s1.at("MCGAE").rho_train);
    const double c = mean(s1.at("CGAE").rho_train);
    return {m >= 0.80 && m - c >= 0.15,
            "train rho MCGAE " + fmt(m) + ", CGAE " + fmt(c) + ", gap " + fmt(m - c) + " over " +
                std::to_string(s1.at("MCGAE").rho_train.size()) + " fold x seed jobs"};
  });

  run("A5", "discrimination", [&]() -> Outcome {
    bool ok = true;
    std::string detail;
    for (const char* m : {"AE-DSVDD", "CGAE", "MCGAE"}) {
      const auto& s = s1.at(m);
      const double opt = mean(s.ba_opt);
      ok = ok && opt >= 0.95;
      detail += std::string(m) + " BA(T_opt) " + fmt(opt);
      if (std::string(m) != "AE-DSVDD") {
        const double fixed = mean(s.ba_fixed);
        ok = ok && opt - fixed <= 0.10;
        detail += ", BA(T_fixed) " + fmt(fixed);
      } else {
        detail += ", BA(T_train) " + fmt(mean(s.ba_train));
      }
      detail += "; ";
    }
    return {ok, detail + "one anomalous run"};
  });

  run("A6", "threshold oracles", thresholds);
  run("A7", "metric oracles", metric_oracles);
  run("A8", "reduction to plain AE", reduction);

  run("A9", "end-to-end determinism", [&]() -> Outcome {
    run_sweep(desk, work / "sweep_b", workers, false);
    return compare_trees(work / "sweep_a", work / "sweep_b");
  });

  // Other anomalous-run counts, for information only.
  if (!report.is_null()) {
    for (std::size_t n = 2; n <= 5; ++n) {
      const auto s = slice(report, n);
      std::printf("info a=%zu:", n);
      for (const auto& [m, v] : s) {
        std::printf("  %s BA_opt %.3f BA_fixed %.3f rho_train %.3f", m.c_str(), mean(v.ba_opt), mean(v.ba_fixed),
                    mean(v.rho_train));
      }
      std::printf("\n");
    }
  }

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
