#include "mcgae/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "mcgae/experiment.hpp"

namespace mcgae {

namespace {

struct CommonArgs {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t workers = 1;
};

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Preset first, then the config file on top. Relative dataset paths resolve against the
/// config file's directory.
ExperimentSpec load_spec(const CommonArgs& a, nlohmann::json* raw = nullptr) {
  ExperimentSpec spec = preset_spec(a.preset.empty() ? "desk" : a.preset);
  if (!a.config.empty()) {
    nlohmann::json j = read_json(a.config);
    if (!a.preset.empty()) j.erase("preset");
    spec = experiment_from_json(j, spec);
    if (!spec.dataset_manifest.empty() && spec.dataset_manifest.is_relative()) {
      spec.dataset_manifest = std::filesystem::path(a.config).parent_path() / spec.dataset_manifest;
    }
    if (raw) *raw = j;
  }
  if (a.seed) spec.seeds = {*a.seed};
  return spec;
}

bool is_dataset_dir(const std::filesystem::path& dir) {
  if (std::filesystem::is_empty(dir)) return true;
  const auto manifest = dir / "manifest.json";
  if (!std::filesystem::exists(manifest)) return false;
  std::ifstream is(manifest);
  const auto j = nlohmann::json::parse(is, nullptr, false);
  return !j.is_discarded() && j.value("format", "") == "mcgae-dataset";
}

int cmd_generate(const CommonArgs& a, std::ostream& out) {
  SyntheticConfig cfg = preset_spec(a.preset.empty() ? "desk" : a.preset).synthetic;
  if (!a.config.empty()) {
    const auto j = read_json(a.config);
    cfg = j.contains("synthetic") ? synthetic_config_from_json(j.at("synthetic"), cfg)
                                  : synthetic_config_from_json(j, cfg);
  }
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  const std::filesystem::path dir = a.out;
  if (std::filesystem::exists(dir) && !is_dataset_dir(dir)) {
    throw ConfigError("refusing to write into non-dataset directory " + dir.string());
  }
  const Dataset dataset = generate_dataset(cfg);
  auto staging = dir;
  staging += ".partial";
  std::filesystem::remove_all(staging);
  save_dataset(staging, dataset, to_json(cfg));
  std::filesystem::remove_all(dir);
  std::filesystem::rename(staging, dir);
  out << "wrote " << dataset.size() << " runs to " << dir.string() << "\n";
  for (const auto& run : dataset) {
    out << "  run " << run.run_id << ": " << run.length() << " frames, p_h " << run.p_h << ", p_f " << run.p_f << "\n";
  }
  return kExitOk;
}

struct TrainArgs {
  std::size_t fold = 0;
  std::string method;
  std::optional<std::size_t> n_anomalous;
  bool resume = false;
};

int cmd_train(const CommonArgs& a, const TrainArgs& t, std::ostream& out) {
  ExperimentSpec spec = load_spec(a);
  JobSpec job;
  job.method = t.method.empty() ? spec.methods.front() : model_kind_from_string(t.method);
  spec.methods = {job.method};
  job.recon_set = spec.train.recon_set;
  job.n_anomalous_runs = t.n_anomalous.value_or(spec.anomalous_run_counts.front());
  job.fold = t.fold;
  job.seed = spec.seeds.front();
  spec.validate();
  const PreparedData data = prepare_data(spec);
  if (job.fold >= data.dataset->size()) throw ConfigError("fold " + std::to_string(job.fold) + " out of range");
  if (job.n_anomalous_runs == 0 || job.n_anomalous_runs >= data.dataset->size()) {
    throw ConfigError("n_anomalous_runs out of range");
  }
  const TrainConfig cfg = job_train_config(spec, job);
  const nlohmann::json resolved{{"experiment", to_json(spec)},
                                {"job", job.key()},
                                {"train", to_json(cfg)},
                                {"split_seed", job_split_seed(job)},
                                {"data_fingerprint", data.fingerprint}};

  const std::filesystem::path dir = a.out;
  const auto ckpt = dir / "checkpoint.bin";
  if (std::filesystem::exists(ckpt) || std::filesystem::exists(dir / "history.jsonl")) {
    if (!t.resume) throw ConfigError("output exists in " + dir.string() + "; pass --resume to reuse or replace it");
    if (std::filesystem::exists(dir / "config.json") && read_json(dir / "config.json") == resolved &&
        std::filesystem::exists(ckpt)) {
      out << "up to date: " << ckpt.string() << "\n";
      return kExitOk;
    }
  }
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "config.json", resolved.dump(2) + "\n");

  const auto folds = build_folds(*data.dataset, job.n_anomalous_runs, spec.fold_seed);
  const FoldData fold = materialize_fold(data.dataset, folds.at(job.fold), job_split_seed(job));
  auto history_tmp = dir / "history.jsonl.tmp";
  std::ofstream history(history_tmp, std::ios::binary | std::ios::trunc);
  TrainResult result = train(fold, cfg, [&](const EpochRecord& r) {
    history << to_json(r).dump() << "\n";
    if (r.checkpoint) history << nlohmann::json{{"event", "checkpoint"}, {"epoch", r.epoch}}.dump() << "\n";
  });
  for (const auto& w : result.history.warnings) {
    history << nlohmann::json{{"event", "warning"}, {"message", w}}.dump() << "\n";
  }
  history << nlohmann::json{{"event", "done"}, {"best_epoch", result.best_epoch}, {"epochs", cfg.epochs}}.dump()
          << "\n";
  history.close();
  std::filesystem::rename(history_tmp, dir / "history.jsonl");

  nlohmann::json meta{{"model_kind", to_string(cfg.model_kind)},
                      {"best_epoch", result.best_epoch},
                      {"job", job.key()}};
  if (cfg.model_kind == ModelKind::kAeDsvdd) {
    meta["center"] = std::vector<double>(result.center.c.data(), result.center.c.data() + result.center.c.size());
  }
  auto ckpt_tmp = dir / "checkpoint.bin.tmp";
  save_checkpoint(ckpt_tmp, result.model, meta);
  std::filesystem::rename(ckpt_tmp, ckpt);

  const JobResult eval = evaluate_job(job, result, fold, cfg, spec.spearman_scope);
  auto summary = to_json(eval);
  summary.erase("test_trace");
  summary.erase("normal_train_ci");
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  out << job.key() << ": best epoch " << result.best_epoch << ", BA(T_opt) " << eval.ba_opt
      << ", train ratio " << eval.train_ratios.combined << ", spearman train " << eval.spearman_train << "\n";
  return kExitOk;
}

void print_summary(const nlohmann::json& report, std::ostream& out) {
  for (const auto& cell : report.at("cells")) {
    const auto& m = cell.at("metrics");
    auto show = [&](const char* k) {
      const auto& v = m.at(k).at("mean");
      return v.is_null() ? std::string("nan") : std::to_string(v.get<double>());
    };
    out << cell.at("label").get<std::string>() << " a=" << cell.at("n_anomalous_runs").get<std::size_t>()
        << "  BA(T_opt) " << show("ba_T_opt") << "  BA(T_fixed) " << show("ba_T_fixed") << "  rho train "
        << show("spearman_train") << "  rho test " << show("spearman_test") << "\n";
  }
}

int cmd_sweep(const CommonArgs& a, bool ablation, std::ostream& out) {
  nlohmann::json raw = nlohmann::json::object();
  ExperimentSpec spec = load_spec(a, &raw);
  if (ablation) {
    if (!raw.contains("methods")) spec.methods = {ModelKind::kMcgae};
    if (!raw.contains("recon_sets")) {
      spec.recon_sets = {ReconSet::kN, ReconSet::kNU, ReconSet::kNA, ReconSet::kNUA};
    }
  }
  const auto report = run_sweep(spec, a.out, a.workers, ablation, &out);
  print_summary(report, out);
  out << "report: " << (std::filesystem::path(a.out) / "report.json").string() << "\n";
  return kExitOk;
}

int cmd_report(const std::string& report_path, const std::string& out_dir, std::ostream& out) {
  if (!std::filesystem::exists(report_path)) throw ConfigError("report file not found: " + report_path);
  nlohmann::json report;
  {
    std::ifstream is(report_path);
    try {
      report = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(report_path + ": " + e.what());
    }
  }
  if (report.value("format", "") != "mcgae-report") throw FormatError(report_path + " is not a report");
  const std::filesystem::path dir =
      out_dir.empty() ? std::filesystem::path(report_path).parent_path() / "plots" : std::filesystem::path(out_dir);
  try {
    write_tables(report, dir / "tables");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  write_plots(report, dir);
  out << "plots and tables written to " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Constraint-guided autoencoder experiments on run-to-failure data", "mcgae"};
  app.require_subcommand(1);

  CommonArgs common;
  TrainArgs train_args;
  std::string report_path;
  std::string report_out;

  auto add_common = [&](CLI::App* sub, bool out_required) {
    sub->add_option("--config", common.config, "JSON spec file")->check(CLI::ExistingFile);
    sub->add_option("--preset", common.preset, "desk, sm-like or abm-like");
    sub->add_option("--seed", common.seed, "single seed overriding the spec");
    auto* o = sub->add_option("--out", common.out, "output directory");
    if (out_required) o->required();
  };

  auto* gen = app.add_subcommand("generate", "write a synthetic run-to-failure dataset");
  add_common(gen, true);
  auto* trn = app.add_subcommand("train", "train one model on one fold");
  add_common(trn, true);
  trn->add_option("--fold", train_args.fold, "test run index");
  trn->add_option("--method", train_args.method, "AE-DSVDD, CGAE, MCGAE or AE");
  trn->add_option("--n-anomalous", train_args.n_anomalous, "training runs exposing anomalies");
  trn->add_flag("--resume", train_args.resume, "reuse or replace existing output");
  auto* swp = app.add_subcommand("sweep", "leave-one-run-out sweep over methods, counts and seeds");
  add_common(swp, true);
  swp->add_option("--workers", common.workers, "parallel training jobs")->check(CLI::PositiveNumber);
  auto* abl = app.add_subcommand("ablate", "MCGAE sweep over reconstruction sets");
  add_common(abl, true);
  abl->add_option("--workers", common.workers, "parallel training jobs")->check(CLI::PositiveNumber);
  auto* rep = app.add_subcommand("report", "tables and SVG plots from a report.json");
  rep->add_option("report", report_path, "report.json")->required();
  rep->add_option("--out", report_out, "output directory (default: <report dir>/plots)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (!common.preset.empty()) preset_spec(common.preset);
    if (gen->parsed()) return cmd_generate(common, out);
    if (trn->parsed()) return cmd_train(common, train_args, out);
    if (swp->parsed()) return cmd_sweep(common, false, out);
    if (abl->parsed()) return cmd_sweep(common, true, out);
    if (rep->parsed()) return cmd_report(report_path, report_out, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace mcgae
