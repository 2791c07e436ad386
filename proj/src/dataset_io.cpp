// Run file layout (one file per run, UTF-8 text, LF line endings):
//
//   # mcgae-run 1
//   # run_id <int>
//   # feature_dim <F>
//   # length <T>
//   # p_h <index>
//   # p_f <index>
//   # std_mean <F values>      per-feature mean over [0, p_h)
//   # std_scale <F values>     per-feature scale applied by standardization
//   timestamp,label,f0,...,f{F-1}
//   <timestamp>,<N|U|A>,<F values>
//
// Rows hold the frames as generated (unstandardized); the std_* lines record the map
// standardize_run applies. Numbers use the shortest round-trip decimal form.

#include <charconv>
#include <fstream>
#include <sstream>

#include "mcgae/data.hpp"
#include "mcgae/format.hpp"

namespace mcgae {

void write_run(const std::filesystem::path& path, const Run& run) {
  run.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write run file: " + path.string());
  const Run standardized = run.p_h >= 2 ? standardize_run(run) : run;
  os << "# mcgae-run 1\n";
  os << "# run_id " << run.run_id << "\n";
  os << "# feature_dim " << run.feature_dim() << "\n";
  os << "# length " << run.length() << "\n";
  os << "# p_h " << run.p_h << "\n";
  os << "# p_f " << run.p_f << "\n";
  if (standardized.stats.mean.size() > 0) {
    os << "# std_mean";
    for (double v : standardized.stats.mean) os << ' ' << format_double(v);
    os << "\n# std_scale";
    for (double v : standardized.stats.scale) os << ' ' << format_double(v);
    os << "\n";
  }
  os << "timestamp,label";
  for (std::size_t i = 0; i < run.feature_dim(); ++i) os << ",f" << i;
  os << "\n";
  for (std::size_t t = 0; t < run.length(); ++t) {
    os << format_double(run.timestamps[t]) << ',' << label_code(run.label(t));
    for (Eigen::Index i = 0; i < run.frames.rows(); ++i) {
      os << ',' << format_double(run.frames(i, static_cast<Eigen::Index>(t)));
    }
    os << "\n";
  }
  if (!os) throw FormatError("failed writing run file: " + path.string());
}

namespace {

std::size_t header_uint(const std::string& line, const std::string& key) {
  const std::string prefix = "# " + key + " ";
  if (line.rfind(prefix, 0) != 0) throw FormatError("run file: expected '" + prefix + "'");
  return static_cast<std::size_t>(std::stoull(line.substr(prefix.size())));
}

}  // namespace

Run read_run(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open run file: " + path.string());
  std::string line;
  auto next = [&]() -> std::string& {
    if (!std::getline(is, line)) throw FormatError("run file truncated: " + path.string());
    return line;
  };
  if (next() != "# mcgae-run 1") throw FormatError("unsupported run file: " + path.string());
  Run run;
  try {
    run.run_id = static_cast<int>(std::stol(next().substr(std::string("# run_id ").size())));
    const std::size_t f = header_uint(next(), "feature_dim");
    const std::size_t t = header_uint(next(), "length");
    run.p_h = header_uint(next(), "p_h");
    run.p_f = header_uint(next(), "p_f");
    next();
    auto read_stats = [&](const std::string& key, Eigen::VectorXd& out) {
      std::istringstream ss(line.substr(key.size() + 3));
      out.resize(static_cast<Eigen::Index>(f));
      for (std::size_t i = 0; i < f; ++i) out[static_cast<Eigen::Index>(i)] = parse_double(read_token(ss));
      next();
    };
    if (line.rfind("# std_mean", 0) == 0) read_stats("std_mean", run.stats.mean);
    if (line.rfind("# std_scale", 0) == 0) read_stats("std_scale", run.stats.scale);
    if (line.rfind("timestamp,label", 0) != 0) throw FormatError("run file: missing column header");
    run.frames.resize(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(t));
    run.timestamps.resize(t);
    for (std::size_t row = 0; row < t; ++row) {
      const std::string& text = next();
      const auto fields = split(text, ',');
      if (fields.size() != f + 2) throw FormatError("run file: wrong field count in row " + std::to_string(row));
      run.timestamps[row] = parse_double(fields[0]);
      if (fields[1].size() != 1) throw FormatError("run file: bad label field");
      if (label_from_code(fields[1][0]) != run.label(row)) {
        throw FormatError("run file: row label disagrees with cutoffs at row " + std::to_string(row));
      }
      for (std::size_t i = 0; i < f; ++i) {
        run.frames(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(row)) = parse_double(fields[i + 2]);
      }
    }
  } catch (const std::invalid_argument&) {
    throw FormatError("run file: malformed number in " + path.string());
  } catch (const std::out_of_range&) {
    throw FormatError("run file: number out of range in " + path.string());
  }
  run.validate();
  return run;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset,
                  const nlohmann::json& generator_config) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "mcgae-dataset";
  manifest["version"] = 1;
  manifest["generator"] = generator_config;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : dataset) {
    const std::string name = "run_" + std::to_string(run.run_id) + ".csv";
    write_run(dir / name, run);
    runs.push_back({{"run_id", run.run_id},
                    {"file", name},
                    {"length", run.length()},
                    {"p_h", run.p_h},
                    {"p_f", run.p_f}});
  }
  manifest["runs"] = std::move(runs);
  std::ofstream os(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  os << manifest.dump(2) << "\n";
  if (!os) throw FormatError("failed writing manifest in " + dir.string());
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw FormatError("cannot open dataset manifest: " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "mcgae-dataset") throw FormatError("not a dataset manifest");
  Dataset dataset;
  const auto dir = manifest_path.parent_path();
  for (const auto& entry : manifest.at("runs")) {
    Run run = read_run(dir / entry.at("file").get<std::string>());
    if (run.run_id != entry.at("run_id").get<int>()) throw FormatError("manifest run_id mismatch");
    dataset.push_back(std::move(run));
  }
  if (dataset.empty()) throw FormatError("dataset manifest lists no runs");
  return dataset;
}

}  // namespace mcgae
