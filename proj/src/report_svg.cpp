// Minimal SVG emission for report plots. Output is deterministic: fixed number formatting
// and no timestamps.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "mcgae/experiment.hpp"

namespace mcgae {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                "#8c564b", "#e377c2", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

double value_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) {
      const double pad = std::max(std::abs(lo), 1.0) * 0.5;
      lo -= pad;
      hi += pad;
    }
  }
};

/// One plotting area inside an SVG document.
class Panel {
 public:
  Panel(double x, double y, double w, double h, Range xr, Range yr)
      : x_(x), y_(y), w_(w), h_(h), xr_(xr), yr_(yr) {
    xr_.finish();
    yr_.finish();
  }
  double px(double v) const { return x_ + (v - xr_.lo) / (xr_.hi - xr_.lo) * w_; }
  double py(double v) const { return y_ + h_ - (v - yr_.lo) / (yr_.hi - yr_.lo) * h_; }

  void axes(std::ostringstream& os, const std::string& title, const std::string& xlabel,
            const std::string& ylabel, const std::vector<double>& xticks) const {
    os << "<rect x=\"" << fmt(x_) << "\" y=\"" << fmt(y_) << "\" width=\"" << fmt(w_) << "\" height=\""
       << fmt(h_) << "\" fill=\"none\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << fmt(x_ + w_ / 2) << "\" y=\"" << fmt(y_ - 8)
       << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(title) << "</text>\n";
    os << "<text x=\"" << fmt(x_ + w_ / 2) << "\" y=\"" << fmt(y_ + h_ + 34)
       << "\" text-anchor=\"middle\" font-size=\"11\">" << escape(xlabel) << "</text>\n";
    os << "<text transform=\"translate(" << fmt(x_ - 44) << "," << fmt(y_ + h_ / 2)
       << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"11\">" << escape(ylabel) << "</text>\n";
    for (double t : xticks) {
      os << "<text x=\"" << fmt(px(t)) << "\" y=\"" << fmt(y_ + h_ + 16)
         << "\" text-anchor=\"middle\" font-size=\"10\">" << tick(t) << "</text>\n";
    }
    for (int i = 0; i <= 4; ++i) {
      const double v = yr_.lo + (yr_.hi - yr_.lo) * i / 4.0;
      os << "<text x=\"" << fmt(x_ - 6) << "\" y=\"" << fmt(py(v) + 3)
         << "\" text-anchor=\"end\" font-size=\"10\">" << tick(v) << "</text>\n";
    }
  }

  void polyline(std::ostringstream& os, const std::vector<std::pair<double, double>>& pts,
                const std::string& color, bool markers) const {
    std::vector<std::pair<double, double>> finite;
    for (const auto& p : pts) {
      if (std::isfinite(p.first) && std::isfinite(p.second)) finite.push_back(p);
    }
    if (finite.empty()) return;
    if (finite.size() > 1) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < finite.size(); ++i) {
        os << (i ? " " : "") << fmt(px(finite[i].first)) << "," << fmt(py(finite[i].second));
      }
      os << "\"/>\n";
    }
    if (markers) {
      for (const auto& p : finite) {
        os << "<circle cx=\"" << fmt(px(p.first)) << "\" cy=\"" << fmt(py(p.second)) << "\" r=\"3\" fill=\""
           << color << "\"/>\n";
      }
    }
  }

  void hline(std::ostringstream& os, double v, const std::string& color, const std::string& label) const {
    if (!std::isfinite(v) || v < yr_.lo || v > yr_.hi) return;
    os << "<line x1=\"" << fmt(x_) << "\" y1=\"" << fmt(py(v)) << "\" x2=\"" << fmt(x_ + w_) << "\" y2=\""
       << fmt(py(v)) << "\" stroke=\"" << color << "\" stroke-dasharray=\"6 3\"/>\n";
    os << "<text x=\"" << fmt(x_ + w_ - 4) << "\" y=\"" << fmt(py(v) - 3) << "\" text-anchor=\"end\" font-size=\"10\" fill=\""
       << color << "\">" << escape(label) << "</text>\n";
  }

  void vline(std::ostringstream& os, double v, const std::string& label) const {
    if (!std::isfinite(v)) return;
    os << "<line x1=\"" << fmt(px(v)) << "\" y1=\"" << fmt(y_) << "\" x2=\"" << fmt(px(v)) << "\" y2=\""
       << fmt(y_ + h_) << "\" stroke=\"#777\" stroke-dasharray=\"2 2\"/>\n";
    os << "<text x=\"" << fmt(px(v) + 3) << "\" y=\"" << fmt(y_ + 12) << "\" font-size=\"10\" fill=\"#555\">"
       << escape(label) << "</text>\n";
  }

  void bar(std::ostringstream& os, double x0, double x1, double height, const std::string& color) const {
    os << "<rect x=\"" << fmt(px(x0)) << "\" y=\"" << fmt(py(height)) << "\" width=\"" << fmt(px(x1) - px(x0))
       << "\" height=\"" << fmt(py(yr_.lo) - py(height)) << "\" fill=\"" << color
       << "\" fill-opacity=\"0.45\" stroke=\"none\"/>\n";
  }

 private:
  double x_, y_, w_, h_;
  Range xr_, yr_;
};

void legend(std::ostringstream& os, double x, double y, const std::vector<std::string>& labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double yy = y + 16.0 * static_cast<double>(i);
    os << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(yy - 9) << "\" width=\"10\" height=\"10\" fill=\""
       << kPalette[i % 8] << "\"/>\n";
    os << "<text x=\"" << fmt(x + 15) << "\" y=\"" << fmt(yy) << "\" font-size=\"11\">" << escape(labels[i])
       << "</text>\n";
  }
}

std::string document(double w, double h, const std::string& body) {
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\"" << fmt(h)
     << "\" viewBox=\"0 0 " << fmt(w) << " " << fmt(h) << "\" font-family=\"sans-serif\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" << body << "</svg>\n";
  return os.str();
}

void ba_plots(const nlohmann::json& report, const std::filesystem::path& dir) {
  std::vector<std::string> labels;
  std::vector<double> counts;
  for (const auto& cell : report.at("cells")) {
    const auto l = cell.at("label").get<std::string>();
    if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
    const auto a = cell.at("n_anomalous_runs").get<double>();
    if (std::find(counts.begin(), counts.end(), a) == counts.end()) counts.push_back(a);
  }
  std::sort(counts.begin(), counts.end());
  for (const std::string thr : {"T_opt", "T_train", "T_sigmoid", "T_fixed"}) {
    const std::string metric = "ba_" + thr;
    std::ostringstream body;
    for (int panel = 0; panel < 2; ++panel) {
      const char* stat = panel == 0 ? "mean" : "std";
      Range xr, yr;
      for (double a : counts) xr.add(a);
      if (xr.lo == xr.hi) xr.lo -= 0.5, xr.hi += 0.5;
      std::map<std::string, std::vector<std::pair<double, double>>> series;
      for (const auto& cell : report.at("cells")) {
        const double v = value_or_nan(cell.at("metrics").at(metric).at(stat));
        yr.add(v);
        series[cell.at("label").get<std::string>()].push_back({cell.at("n_anomalous_runs").get<double>(), v});
      }
      if (panel == 0) yr.add(0.5), yr.add(1.0);
      else yr.add(0.0);
      const Panel p(70 + panel * 380.0, 40, 300, 240, xr, yr);
      p.axes(body, std::string(stat) + " of BA, " + thr, "number of anomalous runs", stat, counts);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        auto pts = series[labels[i]];
        std::sort(pts.begin(), pts.end());
        p.polyline(body, pts, kPalette[i % 8], true);
      }
    }
    legend(body, 770, 60, labels);
    write_file_atomic(dir / ("ba_" + thr + ".svg"), document(900, 330, body.str()));
  }
}

void trace_plots(const nlohmann::json& report, const std::filesystem::path& dir) {
  // One trace per (column label, test run): the job with the fewest anomalous runs, then lowest seed.
  std::map<std::pair<std::string, int>, const nlohmann::json*> chosen;
  std::map<std::string, std::string> label_of;
  for (const auto& cell : report.at("cells")) {
    for (const auto& j : cell.at("jobs")) label_of[j.at("key").get<std::string>()] = cell.at("label").get<std::string>();
  }
  for (const auto& job : report.at("jobs")) {
    const auto key = std::make_pair(label_of[job.at("key").get<std::string>()], job.at("test_run_id").get<int>());
    auto rank = [](const nlohmann::json& j) {
      return std::make_pair(j.at("n_anomalous_runs").get<std::size_t>(), j.at("seed").get<std::uint64_t>());
    };
    auto it = chosen.find(key);
    if (it == chosen.end() || rank(job) < rank(*it->second)) chosen[key] = &job;
  }
  for (const auto& [key, job] : chosen) {
    const auto& trace = job->at("test_trace");
    const auto ci = trace.at("ci");
    const auto ts = trace.at("timestamps");
    std::vector<std::pair<double, double>> pts;
    Range xr, yr;
    for (std::size_t i = 0; i < ci.size(); ++i) {
      const double t = value_or_nan(ts[i]);
      const double v = value_or_nan(ci[i]);
      pts.push_back({t, v});
      xr.add(t);
      yr.add(v);
    }
    yr.add(0.0);
    const auto& th = job->at("thresholds");
    const std::vector<std::string> names{"T_opt", "T_train", "T_sigmoid", "T_fixed"};
    for (const auto& n : names) yr.add(value_or_nan(th.at(n)));
    std::ostringstream body;
    const Panel p(70, 40, 620, 260, xr, yr);
    std::vector<double> xticks;
    if (std::isfinite(xr.lo)) {
      for (int i = 0; i <= 4; ++i) xticks.push_back(xr.lo + (xr.hi - xr.lo) * i / 4.0);
    }
    p.axes(body, key.first + ", test run " + std::to_string(key.second) + ", " +
                     std::to_string(job->at("n_anomalous_runs").get<std::size_t>()) + " anomalous run(s)",
           "time", "condition indicator", xticks);
    p.polyline(body, pts, "#222", false);
    for (std::size_t i = 0; i < names.size(); ++i) p.hline(body, value_or_nan(th.at(names[i])), kPalette[i], names[i]);
    const auto ph = trace.at("p_h").get<std::size_t>();
    const auto pf = trace.at("p_f").get<std::size_t>();
    if (ph < ts.size()) p.vline(body, value_or_nan(ts[ph]), "p_h");
    if (pf < ts.size()) p.vline(body, value_or_nan(ts[pf]), "p_f");
    std::string file = "ci_trace_" + key.first + "_run" + std::to_string(key.second) + ".svg";
    write_file_atomic(dir / file, document(720, 340, body.str()));
  }
}

void histogram_plot(const nlohmann::json& report, const std::filesystem::path& dir) {
  const auto& jobs = report.at("jobs");
  if (jobs.empty()) return;
  std::string method = jobs.front().at("method").get<std::string>();
  for (const auto& j : jobs) {
    if (j.at("method") == "AE-DSVDD") method = "AE-DSVDD";
  }
  std::size_t min_a = std::numeric_limits<std::size_t>::max();
  for (const auto& j : jobs) {
    if (j.at("method") == method) min_a = std::min(min_a, j.at("n_anomalous_runs").get<std::size_t>());
  }
  std::vector<double> train_n, test_n, test_a;
  for (const auto& j : jobs) {
    if (j.at("method") != method || j.at("n_anomalous_runs") != min_a || j.at("recon_set") != "n") continue;
    for (const auto& v : j.at("normal_train_ci")) train_n.push_back(value_or_nan(v));
    const auto& tr = j.at("test_trace");
    const auto ph = tr.at("p_h").get<std::size_t>();
    const auto pf = tr.at("p_f").get<std::size_t>();
    const auto& ci = tr.at("ci");
    for (std::size_t i = 0; i < ci.size(); ++i) {
      if (i < ph) test_n.push_back(value_or_nan(ci[i]));
      else if (i >= pf) test_a.push_back(value_or_nan(ci[i]));
    }
  }
  double max_train = 0.0;
  for (double v : train_n) {
    if (std::isfinite(v)) max_train = std::max(max_train, v);
  }
  const double upper = max_train > 0.0 ? 2.0 * max_train : 1.0;
  constexpr int kBins = 40;
  const double width = upper / kBins;
  auto density = [&](const std::vector<double>& values) {
    std::vector<double> h(kBins, 0.0);
    if (values.empty()) return h;
    for (double v : values) {
      if (!std::isfinite(v) || v < 0.0 || v >= upper) continue;  // axis stops at the clip
      h[static_cast<std::size_t>(v / width)] += 1.0;
    }
    for (double& x : h) x /= static_cast<double>(values.size());
    return h;
  };
  const std::vector<std::vector<double>> hists{density(train_n), density(test_n), density(test_a)};
  Range xr, yr;
  xr.add(0.0);
  xr.add(upper);
  yr.add(0.0);
  for (const auto& h : hists) {
    for (double v : h) yr.add(v);
  }
  std::ostringstream body;
  const Panel p(70, 40, 620, 260, xr, yr);
  std::vector<double> xticks;
  for (int i = 0; i <= 4; ++i) xticks.push_back(upper * i / 4.0);
  p.axes(body, "CI histogram, " + method + " (clipped at 2x max normal-train CI)", "condition indicator",
         "fraction of points", xticks);
  for (std::size_t s = 0; s < hists.size(); ++s) {
    for (int b = 0; b < kBins; ++b) {
      if (hists[s][b] > 0.0) p.bar(body, b * width, (b + 1) * width, hists[s][b], kPalette[s]);
    }
  }
  legend(body, 560, 60, {"normal (train)", "normal (test)", "anomalous (test)"});
  write_file_atomic(dir / "ci_histogram.svg", document(720, 340, body.str()));
}

}  // namespace

void write_plots(const nlohmann::json& report, const std::filesystem::path& dir) {
  try {
    ba_plots(report, dir);
    trace_plots(report, dir);
    histogram_plot(report, dir);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

}  // namespace mcgae
