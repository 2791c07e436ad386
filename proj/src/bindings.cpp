// Python extension `mcgae._core`. Structured values cross the boundary as JSON text; the
// package wrapper turns them into dicts.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "mcgae/constraints.hpp"
#include "mcgae/experiment.hpp"
#include "mcgae/metrics.hpp"
#include "mcgae/thresholds.hpp"

namespace py = pybind11;
using namespace mcgae;

namespace {

ExperimentSpec spec_from_text(const std::string& text) {
  return experiment_from_json(nlohmann::json::parse(text), preset_spec("desk"));
}

py::list generate(const std::string& config_text) {
  const SyntheticConfig cfg = synthetic_config_from_json(nlohmann::json::parse(config_text));
  py::list runs;
  for (const auto& run : generate_dataset(cfg)) {
    py::dict d;
    d["run_id"] = run.run_id;
    d["frames"] = Eigen::MatrixXd(run.frames.transpose());  // T x F for numpy users
    d["timestamps"] = run.timestamps;
    d["latent"] = run.latent;
    d["p_h"] = run.p_h;
    d["p_f"] = run.p_f;
    runs.append(d);
  }
  return runs;
}

std::string train_job(const std::string& spec_text, const std::string& method, std::size_t n_anomalous,
                      std::size_t fold_index, std::uint64_t seed) {
  ExperimentSpec spec = spec_from_text(spec_text);
  JobSpec job;
  job.method = model_kind_from_string(method);
  job.recon_set = spec.train.recon_set;
  job.n_anomalous_runs = n_anomalous;
  job.fold = fold_index;
  job.seed = seed;
  spec.methods = {job.method};
  spec.validate();
  const PreparedData data = prepare_data(spec);
  if (fold_index >= data.dataset->size()) throw ConfigError("fold out of range");
  const TrainConfig cfg = job_train_config(spec, job);
  std::optional<TrainResult> trained;
  FoldData fold;
  {
    py::gil_scoped_release release;
    const auto folds = build_folds(*data.dataset, n_anomalous, spec.fold_seed);
    fold = materialize_fold(data.dataset, folds.at(fold_index), job_split_seed(job));
    trained.emplace(train(fold, cfg));
  }
  auto out = to_json(evaluate_job(job, *trained, fold, cfg, spec.spearman_scope));
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : trained->history.epochs) history.push_back(to_json(r));
  out["history"] = std::move(history);
  return out.dump();
}

std::string sweep(const std::string& spec_text, const std::string& out, std::size_t workers, bool ablation) {
  const ExperimentSpec spec = spec_from_text(spec_text);
  py::gil_scoped_release release;
  return run_sweep(spec, out, workers, ablation).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Constraint-guided autoencoders for run-to-failure anomaly detection";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

  m.def("preset", [](const std::string& name) { return to_json(preset_spec(name)).dump(); });
  m.def("generate", &generate, py::arg("config_json"));
  m.def("train_job", &train_job, py::arg("spec_json"), py::arg("method"), py::arg("n_anomalous"),
        py::arg("fold"), py::arg("seed"));
  m.def("sweep", &sweep, py::arg("spec_json"), py::arg("out"), py::arg("workers") = 1,
        py::arg("ablation") = false);

  m.def("spearman", [](const std::vector<double>& values, const std::vector<double>& times) {
    return spearman_rho(values, times).rho;
  });
  m.def("balanced_accuracy", [](const std::vector<int>& truth, const std::vector<int>& predicted) {
    return balanced_accuracy(confusion(truth, predicted));
  });
  m.def("trivial_balanced_accuracy",
        [](const std::vector<int>& truth) { return balanced_accuracy(trivial_baseline(truth)); });

  m.def("t_train", [](const std::vector<double>& cis) { return t_train(cis); });
  m.def("t_sigmoid", [](const std::vector<double>& cis) { return t_sigmoid(cis); });
  m.def("t_fixed", [](double r1, double r2, std::size_t n, std::size_t a) { return t_fixed({r1, r2}, n, a); },
        py::arg("r1"), py::arg("r2"), py::arg("n_normal"), py::arg("n_anomalous"));
  m.def("t_opt", [](const std::vector<double>& cis, const std::vector<int>& labels) {
    const auto r = t_opt(cis, labels);
    return py::make_tuple(r.threshold, r.balanced_accuracy);
  });
  m.def("t_diff", &t_diff);

  m.def("normal_direction", [](const Eigen::VectorXd& z, double r1, double r2, std::uint64_t seed) {
    Rng rng(seed);
    return normal_direction(z, {r1, r2}, rng);
  }, py::arg("z"), py::arg("r1"), py::arg("r2"), py::arg("seed") = 0);
  m.def("anomalous_direction", [](const Eigen::VectorXd& z, double r1, double r2, std::uint64_t seed) {
    Rng rng(seed);
    return anomalous_direction(z, {r1, r2}, rng);
  }, py::arg("z"), py::arg("r1"), py::arg("r2"), py::arg("seed") = 0);
  m.def("monotonicity_coefficients",
        [](const std::vector<double>& squared_norms) { return monotonicity_coefficients(squared_norms); });
}
