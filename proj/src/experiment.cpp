#include "mcgae/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "mcgae/format.hpp"
#include "mcgae/metrics.hpp"
#include "mcgae/thresholds.hpp"

namespace mcgae {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kJobFormatVersion = 1;

nlohmann::json num(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double from_num(const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); }

nlohmann::json num_array(const std::vector<double>& values) {
  nlohmann::json out = nlohmann::json::array();
  for (double v : values) out.push_back(num(v));
  return out;
}

std::vector<double> from_num_array(const nlohmann::json& j) {
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(from_num(v));
  return out;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string scope_name(SpearmanScope s) { return s == SpearmanScope::kFullRun ? "full_run" : "pre_fault"; }

}  // namespace

void ExperimentSpec::validate() const {
  if (methods.empty()) throw ConfigError("experiment: methods must be nonempty");
  if (seeds.empty()) throw ConfigError("experiment: seeds must be nonempty");
  if (anomalous_run_counts.empty()) throw ConfigError("experiment: anomalous_run_counts must be nonempty");
  if (recon_sets.empty()) throw ConfigError("experiment: recon_sets must be nonempty");
  if (window == 0) throw ConfigError("experiment: window must be positive");
  if (!dataset_manifest.empty() && !std::filesystem::exists(dataset_manifest)) {
    throw ConfigError("experiment: dataset manifest not found: " + dataset_manifest.string());
  }
  if (dataset_manifest.empty()) synthetic.validate();
  for (auto m : methods) {
    for (auto r : recon_sets) {
      TrainConfig c = train;
      c.model_kind = m;
      c.recon_set = r;
      c.validate();
    }
  }
}

std::vector<std::string> preset_names() { return {"desk", "sm-like", "abm-like"}; }

ExperimentSpec preset_spec(const std::string& name) {
  ExperimentSpec s;
  s.preset = name;
  if (name == "desk") return s;
  if (name == "sm-like") {
    s.synthetic.n_runs = 6;
    s.synthetic.frames_min = 1600;
    s.synthetic.frames_max = 2400;
    s.synthetic.feature_dim = 64;
    s.window = 8;
    s.train.hidden = {128};
    s.train.latent_dim = 8;
    s.train.epochs = 300;
    s.train.batches = BatchConfig{80, 5, 25, 10, 10};
    return s;
  }
  if (name == "abm-like") {
    s.synthetic.n_runs = 5;
    s.synthetic.frames_min = 1600;
    s.synthetic.frames_max = 2400;
    s.synthetic.feature_dim = 64;
    s.synthetic.shape = DegradationShape::kExponential;
    s.window = 8;
    s.anomalous_run_counts = {1, 2, 3, 4};
    s.train.hidden = {128};
    s.train.latent_dim = 64;
    s.train.epochs = 500;
    s.train.batches = BatchConfig{100, 4, 25, 10, 10};
    return s;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk, sm-like or abm-like)");
}

nlohmann::json to_json(const ExperimentSpec& s) {
  nlohmann::json methods = nlohmann::json::array();
  for (auto m : s.methods) methods.push_back(to_string(m));
  nlohmann::json recon = nlohmann::json::array();
  for (auto r : s.recon_sets) recon.push_back(to_string(r));
  nlohmann::json j{{"preset", s.preset},
                   {"window", s.window},
                   {"methods", methods},
                   {"anomalous_run_counts", s.anomalous_run_counts},
                   {"folds", s.folds},
                   {"seeds", s.seeds},
                   {"recon_sets", recon},
                   {"train", to_json(s.train)},
                   {"fold_seed", s.fold_seed},
                   {"spearman_scope", scope_name(s.spearman_scope)}};
  if (s.dataset_manifest.empty()) {
    j["synthetic"] = to_json(s.synthetic);
  } else {
    j["dataset"] = s.dataset_manifest.generic_string();
  }
  return j;
}

ExperimentSpec experiment_from_json(const nlohmann::json& j, ExperimentSpec s) {
  if (!j.is_object()) throw ConfigError("experiment spec must be a JSON object");
  try {
    if (j.contains("preset")) s = preset_spec(j.at("preset").get<std::string>());
    for (const auto& [key, value] : j.items()) {
      if (key == "preset") continue;
      if (key == "dataset") s.dataset_manifest = value.get<std::string>();
      else if (key == "synthetic") s.synthetic = synthetic_config_from_json(value, s.synthetic);
      else if (key == "window") s.window = value.get<std::size_t>();
      else if (key == "methods") {
        s.methods.clear();
        for (const auto& m : value) s.methods.push_back(model_kind_from_string(m.get<std::string>()));
      } else if (key == "anomalous_run_counts") s.anomalous_run_counts = value.get<std::vector<std::size_t>>();
      else if (key == "folds") s.folds = value.get<std::vector<std::size_t>>();
      else if (key == "seeds") s.seeds = value.get<std::vector<std::uint64_t>>();
      else if (key == "recon_sets") {
        s.recon_sets.clear();
        for (const auto& r : value) s.recon_sets.push_back(recon_set_from_string(r.get<std::string>()));
      } else if (key == "train") s.train = train_config_from_json(value, s.train);
      else if (key == "fold_seed") s.fold_seed = value.get<std::uint64_t>();
      else if (key == "spearman_scope") {
        const auto v = value.get<std::string>();
        if (v == "full_run") s.spearman_scope = SpearmanScope::kFullRun;
        else if (v == "pre_fault") s.spearman_scope = SpearmanScope::kPreFault;
        else throw ConfigError("experiment: spearman_scope must be 'full_run' or 'pre_fault'");
      } else {
        throw ConfigError("experiment: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment spec: ") + e.what());
  }
  return s;
}

PreparedData prepare_data(const ExperimentSpec& spec) {
  PreparedData out;
  Dataset raw = spec.dataset_manifest.empty() ? generate_dataset(spec.synthetic)
                                              : load_dataset(spec.dataset_manifest);
  auto prepared = std::make_shared<Dataset>();
  std::uint64_t h = fnv1a(&spec.window, sizeof(spec.window));
  for (const auto& run : raw) {
    Run r = frame_run(standardize_run(run, &out.warnings), spec.window);
    r.validate();
    h = fnv1a(r.frames.data(), sizeof(double) * static_cast<std::size_t>(r.frames.size()), h);
    h = fnv1a(r.timestamps.data(), sizeof(double) * r.timestamps.size(), h);
    const std::size_t cut[2] = {r.p_h, r.p_f};
    h = fnv1a(cut, sizeof(cut), h);
    prepared->push_back(std::move(r));
  }
  if (prepared->size() < 2) throw ConfigError("experiment needs at least two runs");
  out.dataset = std::move(prepared);
  out.fingerprint = hex64(h);
  return out;
}

std::string JobSpec::key() const {
  std::string m = to_string(method);
  std::replace(m.begin(), m.end(), '-', '_');
  return m + "_" + to_string(recon_set) + "_a" + std::to_string(n_anomalous_runs) + "_f" +
         std::to_string(fold) + "_s" + std::to_string(seed);
}

std::vector<JobSpec> enumerate_jobs(const ExperimentSpec& spec, std::size_t n_runs) {
  std::vector<std::size_t> folds = spec.folds;
  if (folds.empty()) {
    for (std::size_t f = 0; f < n_runs; ++f) folds.push_back(f);
  }
  for (auto f : folds) {
    if (f >= n_runs) throw ConfigError("experiment: fold " + std::to_string(f) + " out of range");
  }
  for (auto a : spec.anomalous_run_counts) {
    if (a == 0 || a >= n_runs) {
      throw ConfigError("experiment: anomalous run count " + std::to_string(a) + " must be in [1, " +
                        std::to_string(n_runs - 1) + "]");
    }
  }
  std::vector<JobSpec> jobs;
  for (auto m : spec.methods) {
    for (auto r : spec.recon_sets) {
      for (auto a : spec.anomalous_run_counts) {
        for (auto f : folds) {
          for (auto s : spec.seeds) jobs.push_back({m, r, a, f, s});
        }
      }
    }
  }
  return jobs;
}

TrainConfig job_train_config(const ExperimentSpec& spec, const JobSpec& job) {
  TrainConfig c = spec.train;
  c.model_kind = job.method;
  c.recon_set = job.recon_set;
  // Shared across methods and anomalous counts so comparisons use common random numbers.
  c.seed = mix_seed(job.seed, job.fold);
  return c;
}

std::uint64_t job_split_seed(const JobSpec& job) { return mix_seed(job.seed, 1000 + job.fold); }

std::string parameter_hash(const Autoencoder& model) {
  const auto& p = model.params();
  return hex64(fnv1a(p.data(), sizeof(double) * static_cast<std::size_t>(p.size())));
}

namespace {

double spearman_or_nan(const std::vector<double>& ci, const std::vector<double>& times, std::size_t end) {
  if (end < 2) return kNaN;
  const auto r = spearman_rho(std::span(ci).first(end), std::span(times).first(end));
  return r.defined ? r.rho : kNaN;
}

}  // namespace

JobResult evaluate_job(const JobSpec& job, const TrainResult& trained, const FoldData& fold,
                       const TrainConfig& cfg, SpearmanScope scope) {
  JobResult out;
  out.job = job;
  out.best_epoch = trained.best_epoch;
  out.checkpoint_hash = parameter_hash(trained.model);
  out.warnings = trained.history.warnings;
  const Dataset& data = *fold.dataset;
  const bool dsvdd = job.method == ModelKind::kAeDsvdd;
  const Eigen::VectorXd center = dsvdd ? trained.center.c : Eigen::VectorXd();
  auto run_cis = [&](const Run& run) { return condition_indicators(trained.model.encode(run.frames), center); };

  const Run& test = data[fold.spec.test_run];
  out.test_run_id = test.run_id;
  out.test_ci = run_cis(test);
  out.test_timestamps = test.timestamps;
  out.test_p_h = test.p_h;
  out.test_p_f = test.p_f;
  std::vector<double> eval_ci;
  std::vector<int> eval_labels;
  for (std::size_t t = 0; t < test.length(); ++t) {
    const Label l = test.label(t);
    if (l == Label::kUnlabeled) continue;
    eval_ci.push_back(out.test_ci[t]);
    eval_labels.push_back(l == Label::kAnomalous ? 1 : -1);
  }

  std::vector<SampleTag> normals;
  for (const auto& run : fold.train) {
    for (const auto& tag : run) {
      if (tag.label == Label::kNormal) normals.push_back(tag);
    }
  }
  out.normal_train_ci = condition_indicators(trained.model.encode(gather(data, normals)), center);

  out.t_train = t_train(out.normal_train_ci);
  out.t_sigmoid = t_sigmoid(out.normal_train_ci, &out.warnings);
  const bool ball_model = job.method == ModelKind::kCgae || job.method == ModelKind::kMcgae;
  out.t_fixed = ball_model ? t_fixed(cfg.ball, fold.known_normals, fold.known_anomalies) : kNaN;
  const auto opt = t_opt(eval_ci, eval_labels);
  out.t_opt = opt.threshold;
  out.ba_opt = opt.balanced_accuracy;
  out.ba_train = balanced_accuracy_at(eval_ci, eval_labels, out.t_train);
  out.ba_sigmoid = balanced_accuracy_at(eval_ci, eval_labels, out.t_sigmoid);
  out.ba_fixed = ball_model ? balanced_accuracy_at(eval_ci, eval_labels, out.t_fixed) : kNaN;
  out.ba_trivial = balanced_accuracy(trivial_baseline(eval_labels));
  auto diff = [&](double t) { return std::isfinite(t) && out.t_opt > 0.0 ? t_diff(out.t_opt, t) : kNaN; };
  out.tdiff_train = diff(out.t_train);
  out.tdiff_sigmoid = diff(out.t_sigmoid);
  out.tdiff_fixed = diff(out.t_fixed);

  auto scope_end = [&](const Run& run) { return scope == SpearmanScope::kFullRun ? run.length() : run.p_f; };
  out.spearman_test = spearman_or_nan(out.test_ci, test.timestamps, scope_end(test));
  std::vector<double> train_rho;
  for (auto r : fold.spec.train_runs) {
    const Run& run = data[r];
    train_rho.push_back(spearman_or_nan(run_cis(run), run.timestamps, scope_end(run)));
  }
  out.spearman_train = aggregate(train_rho).mean;

  const auto flat = fold.flat_train();
  ConstraintSet families = active_constraints(job.method);
  if (!families.normal && !families.anomalous && !families.monotonic) families = {true, true, true};
  out.train_ratios = satisfaction_ratio(trained.model.encode(gather(data, flat)), flat, cfg.ball, families);
  return out;
}

nlohmann::json to_json(const JobResult& r) {
  const auto& q = r.train_ratios;
  return {{"key", r.job.key()},
          {"method", to_string(r.job.method)},
          {"recon_set", to_string(r.job.recon_set)},
          {"n_anomalous_runs", r.job.n_anomalous_runs},
          {"fold", r.job.fold},
          {"seed", r.job.seed},
          {"test_run_id", r.test_run_id},
          {"best_epoch", r.best_epoch},
          {"checkpoint_hash", r.checkpoint_hash},
          {"thresholds", {{"T_train", num(r.t_train)}, {"T_sigmoid", num(r.t_sigmoid)},
                          {"T_fixed", num(r.t_fixed)}, {"T_opt", num(r.t_opt)}}},
          {"ba", {{"T_train", num(r.ba_train)}, {"T_sigmoid", num(r.ba_sigmoid)}, {"T_fixed", num(r.ba_fixed)},
                  {"T_opt", num(r.ba_opt)}, {"trivial", num(r.ba_trivial)}}},
          {"tdiff", {{"T_train", num(r.tdiff_train)}, {"T_sigmoid", num(r.tdiff_sigmoid)},
                     {"T_fixed", num(r.tdiff_fixed)}}},
          {"spearman", {{"test", num(r.spearman_test)}, {"train", num(r.spearman_train)}}},
          {"train_ratios", {{"normal", num(q.normal)}, {"anomalous", num(q.anomalous)},
                            {"monotonic", num(q.monotonic)}, {"combined", num(q.combined)},
                            {"normal_count", q.normal_count}, {"anomalous_count", q.anomalous_count},
                            {"pair_count", q.pair_count}}},
          {"test_trace", {{"ci", num_array(r.test_ci)}, {"timestamps", num_array(r.test_timestamps)},
                          {"p_h", r.test_p_h}, {"p_f", r.test_p_f}}},
          {"normal_train_ci", num_array(r.normal_train_ci)},
          {"warnings", r.warnings}};
}

JobResult job_result_from_json(const nlohmann::json& j) {
  JobResult r;
  try {
    r.job.method = model_kind_from_string(j.at("method").get<std::string>());
    r.job.recon_set = recon_set_from_string(j.at("recon_set").get<std::string>());
    r.job.n_anomalous_runs = j.at("n_anomalous_runs").get<std::size_t>();
    r.job.fold = j.at("fold").get<std::size_t>();
    r.job.seed = j.at("seed").get<std::uint64_t>();
    r.test_run_id = j.at("test_run_id").get<int>();
    r.best_epoch = j.at("best_epoch").get<std::size_t>();
    r.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
    const auto& th = j.at("thresholds");
    r.t_train = from_num(th.at("T_train"));
    r.t_sigmoid = from_num(th.at("T_sigmoid"));
    r.t_fixed = from_num(th.at("T_fixed"));
    r.t_opt = from_num(th.at("T_opt"));
    const auto& ba = j.at("ba");
    r.ba_train = from_num(ba.at("T_train"));
    r.ba_sigmoid = from_num(ba.at("T_sigmoid"));
    r.ba_fixed = from_num(ba.at("T_fixed"));
    r.ba_opt = from_num(ba.at("T_opt"));
    r.ba_trivial = from_num(ba.at("trivial"));
    const auto& td = j.at("tdiff");
    r.tdiff_train = from_num(td.at("T_train"));
    r.tdiff_sigmoid = from_num(td.at("T_sigmoid"));
    r.tdiff_fixed = from_num(td.at("T_fixed"));
    r.spearman_test = from_num(j.at("spearman").at("test"));
    r.spearman_train = from_num(j.at("spearman").at("train"));
    const auto& q = j.at("train_ratios");
    r.train_ratios.normal = from_num(q.at("normal"));
    r.train_ratios.anomalous = from_num(q.at("anomalous"));
    r.train_ratios.monotonic = from_num(q.at("monotonic"));
    r.train_ratios.combined = from_num(q.at("combined"));
    r.train_ratios.normal_count = q.at("normal_count").get<std::size_t>();
    r.train_ratios.anomalous_count = q.at("anomalous_count").get<std::size_t>();
    r.train_ratios.pair_count = q.at("pair_count").get<std::size_t>();
    const auto& tr = j.at("test_trace");
    r.test_ci = from_num_array(tr.at("ci"));
    r.test_timestamps = from_num_array(tr.at("timestamps"));
    r.test_p_h = tr.at("p_h").get<std::size_t>();
    r.test_p_f = tr.at("p_f").get<std::size_t>();
    r.normal_train_ci = from_num_array(j.at("normal_train_ci"));
    r.warnings = j.at("warnings").get<Warnings>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("job result: ") + e.what());
  }
  return r;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    os << text;
    if (!os) throw FormatError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

nlohmann::json job_identity(const ExperimentSpec& spec, const PreparedData& data, const JobSpec& job) {
  return {{"format_version", kJobFormatVersion},
          {"key", job.key()},
          {"data_fingerprint", data.fingerprint},
          {"fold_seed", spec.fold_seed},
          {"split_seed", job_split_seed(job)},
          {"spearman_scope", scope_name(spec.spearman_scope)},
          {"n_anomalous_runs", job.n_anomalous_runs},
          {"fold", job.fold},
          {"train", to_json(job_train_config(spec, job))}};
}

JobResult run_one(const ExperimentSpec& spec, const PreparedData& data, const JobSpec& job) {
  const auto folds = build_folds(*data.dataset, job.n_anomalous_runs, spec.fold_seed);
  const FoldData fold = materialize_fold(data.dataset, folds.at(job.fold), job_split_seed(job));
  const TrainConfig cfg = job_train_config(spec, job);
  const TrainResult trained = train(fold, cfg);
  return evaluate_job(job, trained, fold, cfg, spec.spearman_scope);
}

}  // namespace

std::vector<JobResult> run_jobs(const ExperimentSpec& spec, const PreparedData& data,
                                const std::vector<JobSpec>& jobs, const RunOptions& options) {
  std::vector<JobResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  std::size_t done = 0;

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      try {
        const JobSpec& job = jobs[i];
        const auto identity = job_identity(spec, data, job);
        bool reused = false;
        std::filesystem::path file;
        if (!options.jobs_dir.empty()) {
          file = options.jobs_dir / (job.key() + ".json");
          if (std::filesystem::exists(file)) {
            std::ifstream is(file);
            const auto stored = nlohmann::json::parse(is, nullptr, false);
            if (!stored.is_discarded() && stored.contains("job") && stored["job"] == identity &&
                stored.contains("result")) {
              results[i] = job_result_from_json(stored["result"]);
              reused = true;
            }
          }
        }
        if (!reused) {
          results[i] = run_one(spec, data, job);
          if (!file.empty()) {
            const nlohmann::json record{{"job", identity}, {"result", to_json(results[i])}};
            write_file_atomic(file, record.dump() + "\n");
          }
        }
        std::lock_guard lock(mu);
        ++done;
        if (options.log) {
          *options.log << "[" << done << "/" << jobs.size() << "] " << job.key()
                       << (reused ? " (reused)" : "") << "\n";
          options.log->flush();
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(1, std::min(options.workers, jobs.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

namespace {

struct MetricDef {
  const char* name;
  double (*get)(const JobResult&);
};

const std::vector<MetricDef>& metric_defs() {
  static const std::vector<MetricDef> defs{
      {"ba_T_opt", [](const JobResult& r) { return r.ba_opt; }},
      {"ba_T_train", [](const JobResult& r) { return r.ba_train; }},
      {"ba_T_sigmoid", [](const JobResult& r) { return r.ba_sigmoid; }},
      {"ba_T_fixed", [](const JobResult& r) { return r.ba_fixed; }},
      {"ba_trivial", [](const JobResult& r) { return r.ba_trivial; }},
      {"spearman_test", [](const JobResult& r) { return r.spearman_test; }},
      {"spearman_train", [](const JobResult& r) { return r.spearman_train; }},
      {"tdiff_T_train", [](const JobResult& r) { return r.tdiff_train; }},
      {"tdiff_T_sigmoid", [](const JobResult& r) { return r.tdiff_sigmoid; }},
      {"tdiff_T_fixed", [](const JobResult& r) { return r.tdiff_fixed; }},
      {"train_ratio", [](const JobResult& r) { return r.train_ratios.combined; }},
  };
  return defs;
}

nlohmann::json mean_std_json(const MeanStd& m) {
  return {{"mean", num(m.mean)}, {"std", num(m.std)}, {"count", m.count}};
}

std::string column_label(ModelKind m, ReconSet r, bool with_recon) {
  return with_recon ? to_string(m) + "-" + to_string(r) : to_string(m);
}

}  // namespace

nlohmann::json build_report(const ExperimentSpec& spec, const PreparedData& data,
                            const std::vector<JobResult>& results) {
  const bool with_recon = spec.recon_sets.size() > 1 || spec.recon_sets.front() != ReconSet::kN;
  nlohmann::json cells = nlohmann::json::array();
  for (auto m : spec.methods) {
    for (auto r : spec.recon_sets) {
      for (auto a : spec.anomalous_run_counts) {
        std::vector<const JobResult*> members;
        for (const auto& res : results) {
          if (res.job.method == m && res.job.recon_set == r && res.job.n_anomalous_runs == a) {
            members.push_back(&res);
          }
        }
        if (members.empty()) continue;
        nlohmann::json metrics = nlohmann::json::object();
        for (const auto& def : metric_defs()) {
          std::vector<double> values;
          for (const auto* res : members) values.push_back(def.get(*res));
          metrics[def.name] = mean_std_json(aggregate(values));
        }
        // Correlations are also reported with seeds averaged inside each fold first.
        for (const char* which : {"spearman_test", "spearman_train"}) {
          std::map<std::size_t, std::vector<double>> per_fold;
          for (const auto* res : members) {
            const double v = std::string(which) == "spearman_test" ? res->spearman_test : res->spearman_train;
            per_fold[res->job.fold].push_back(v);
          }
          std::vector<double> fold_means;
          for (const auto& [fold, values] : per_fold) fold_means.push_back(aggregate(values).mean);
          metrics[std::string(which) + "_fold_averaged"] = mean_std_json(aggregate(fold_means));
        }
        nlohmann::json provenance = nlohmann::json::array();
        for (const auto* res : members) {
          provenance.push_back({{"key", res->job.key()},
                                {"fold", res->job.fold},
                                {"seed", res->job.seed},
                                {"test_run_id", res->test_run_id},
                                {"best_epoch", res->best_epoch},
                                {"checkpoint_hash", res->checkpoint_hash}});
        }
        cells.push_back({{"method", to_string(m)},
                         {"recon_set", to_string(r)},
                         {"label", column_label(m, r, with_recon)},
                         {"n_anomalous_runs", a},
                         {"metrics", metrics},
                         {"jobs", provenance}});
      }
    }
  }
  nlohmann::json jobs = nlohmann::json::array();
  for (const auto& res : results) jobs.push_back(to_json(res));
  return {{"format", "mcgae-report"},
          {"version", 1},
          {"spec", to_json(spec)},
          {"data_fingerprint", data.fingerprint},
          {"data_warnings", data.warnings},
          {"cells", cells},
          {"jobs", jobs}};
}

void write_tables(const nlohmann::json& report, const std::filesystem::path& dir) {
  std::vector<std::string> labels;
  std::vector<std::size_t> counts;
  for (const auto& cell : report.at("cells")) {
    const auto label = cell.at("label").get<std::string>();
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(label);
    const auto a = cell.at("n_anomalous_runs").get<std::size_t>();
    if (std::find(counts.begin(), counts.end(), a) == counts.end()) counts.push_back(a);
  }
  std::sort(counts.begin(), counts.end());
  std::vector<std::string> metrics;
  for (const auto& def : metric_defs()) metrics.emplace_back(def.name);
  metrics.emplace_back("spearman_test_fold_averaged");
  metrics.emplace_back("spearman_train_fold_averaged");
  for (const auto& metric : metrics) {
    std::ostringstream os;
    os << "n_anomalous_runs";
    for (const auto& l : labels) os << ',' << l << "_mean," << l << "_std";
    os << "\n";
    for (auto a : counts) {
      os << a;
      for (const auto& l : labels) {
        const nlohmann::json* found = nullptr;
        for (const auto& cell : report.at("cells")) {
          if (cell.at("label") == l && cell.at("n_anomalous_runs") == a) found = &cell;
        }
        if (found == nullptr) {
          os << ",,";
          continue;
        }
        const auto& ms = found->at("metrics").at(metric);
        os << ',' << format_double(from_num(ms.at("mean"))) << ',' << format_double(from_num(ms.at("std")));
      }
      os << "\n";
    }
    write_file_atomic(dir / (metric + ".csv"), os.str());
  }
}

nlohmann::json run_sweep(const ExperimentSpec& spec_in, const std::filesystem::path& out,
                         std::size_t workers, bool ablation, std::ostream* log) {
  ExperimentSpec spec = spec_in;
  if (ablation) {
    for (auto m : spec.methods) {
      if (m != ModelKind::kMcgae) {
        throw ConfigError("ablation is defined for MCGAE only; got method " + to_string(m));
      }
    }
  } else {
    spec.recon_sets = {spec.train.recon_set};
  }
  spec.validate();
  const PreparedData data = prepare_data(spec);
  const auto jobs = enumerate_jobs(spec, data.dataset->size());
  RunOptions options;
  options.workers = workers;
  options.jobs_dir = out / "jobs";
  options.log = log;
  const auto results = run_jobs(spec, data, jobs, options);
  const auto report = build_report(spec, data, results);
  write_tables(report, out / "tables");
  write_file_atomic(out / "report.json", report.dump(1) + "\n");
  return report;
}

}  // namespace mcgae
