#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "smartvr/dataio.hpp"
#include "smartvr/evalharness.hpp"

namespace smartvr::report {

namespace fs = std::filesystem;
using dataio::format_number;

// variant,window_minutes,fold,metric,value; fold "all" rows carry pooled values.
inline std::string accuracy_csv(const std::vector<SweepReport>& reports) {
  std::ostringstream out;
  out << "variant,window_minutes,fold,metric,value\n";
  for (const auto& r : reports)
    for (const auto& w : r.windows) {
      const std::string prefix = r.variant + "," + std::to_string(w.minutes) + ",";
      for (const auto& f : w.folds) {
        out << prefix << f.held_out << ",accuracy," << format_number(f.accuracy()) << "\n";
        out << prefix << f.held_out << ",threshold," << format_number(f.threshold) << "\n";
        out << prefix << f.held_out << ",n_test," << f.records.size() << "\n";
      }
      out << prefix << "all,accuracy," << format_number(w.accuracy) << "\n";
      out << prefix << "all,standard_error," << format_number(w.standard_error) << "\n";
      out << prefix << "all,n_test," << w.n << "\n";
      if (w.auc) out << prefix << "all,auc," << format_number(*w.auc) << "\n";
    }
  return out.str();
}

inline std::string difficulty_csv(const std::vector<SweepReport>& reports) {
  std::ostringstream out;
  out << "variant,window_minutes,level,correct,total,accuracy\n";
  for (const auto& r : reports)
    for (const auto& [level, cell] : r.by_difficulty)
      out << r.variant << "," << r.breakdown_window << "," << to_string(level) << "," << cell.correct << ","
          << cell.total << "," << format_number(cell.accuracy()) << "\n";
  return out.str();
}

inline nlohmann::json summary_json(const std::vector<SweepReport>& reports) {
  nlohmann::json variants = nlohmann::json::object();
  for (const auto& r : reports) {
    nlohmann::json windows = nlohmann::json::object();
    for (const auto& w : r.windows) {
      nlohmann::json folds = nlohmann::json::array();
      for (const auto& f : w.folds)
        folds.push_back({{"held_out", f.held_out},
                         {"accuracy", f.accuracy()},
                         {"threshold", f.threshold},
                         {"n_test", f.records.size()},
                         {"skipped", f.skipped}});
      windows[std::to_string(w.minutes)] = {{"accuracy", w.accuracy},
                                            {"standard_error", w.standard_error},
                                            {"n_test", w.n},
                                            {"auc", w.auc ? nlohmann::json(*w.auc) : nlohmann::json(nullptr)},
                                            {"folds", folds}};
    }
    nlohmann::json levels = nlohmann::json::object();
    for (const auto& [level, cell] : r.by_difficulty)
      levels[std::string(to_string(level))] = {
          {"accuracy", cell.accuracy()}, {"correct", cell.correct}, {"total", cell.total}};
    variants[r.variant] = {{"windows", windows}, {"difficulty_window", r.breakdown_window}, {"difficulty", levels}};
  }
  return {{"threshold_source", "training-fold lecture predictions, equal error rate"}, {"variants", variants}};
}

// Grouped bar chart: one group per window length, one bar per variant.
inline std::string accuracy_svg(const std::vector<SweepReport>& reports) {
  std::vector<int> minutes;
  for (const auto& r : reports)
    for (const auto& w : r.windows) minutes.push_back(w.minutes);
  std::sort(minutes.begin(), minutes.end());
  minutes.erase(std::unique(minutes.begin(), minutes.end()), minutes.end());

  static const char* palette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"};
  const double width = 720, height = 360, left = 50, right = 160, top = 20, bottom = 40;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const double group_w = minutes.empty() ? plot_w : plot_w / static_cast<double>(minutes.size());
  const double bar_w = reports.empty() ? 0 : group_w * 0.8 / static_cast<double>(reports.size());
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = tick / 4.0, y = top + plot_h * (1 - v);
    svg << "<line x1=\"" << left << "\" x2=\"" << left + plot_w << "\" y1=\"" << fmt(y) << "\" y2=\"" << fmt(y)
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << fmt(y + 4) << "\" text-anchor=\"end\">" << fmt(v)
        << "</text>\n";
  }
  for (std::size_t g = 0; g < minutes.size(); ++g) {
    const double x0 = left + group_w * static_cast<double>(g) + group_w * 0.1;
    for (std::size_t v = 0; v < reports.size(); ++v) {
      const auto& ws = reports[v].windows;
      auto it = std::find_if(ws.begin(), ws.end(), [&](const WindowResult& w) { return w.minutes == minutes[g]; });
      if (it == ws.end()) continue;
      const double h = plot_h * it->accuracy;
      svg << "<rect x=\"" << fmt(x0 + bar_w * static_cast<double>(v)) << "\" y=\"" << fmt(top + plot_h - h)
          << "\" width=\"" << fmt(bar_w) << "\" height=\"" << fmt(h) << "\" fill=\"" << palette[v % 6]
          << "\"><title>" << reports[v].variant << " W=" << minutes[g] << ": " << fmt(it->accuracy)
          << "</title></rect>\n";
    }
    svg << "<text x=\"" << fmt(x0 + group_w * 0.4) << "\" y=\"" << fmt(top + plot_h + 16)
        << "\" text-anchor=\"middle\">" << minutes[g] << "</text>\n";
  }
  svg << "<text x=\"" << fmt(left + plot_w / 2) << "\" y=\"" << height - 6
      << "\" text-anchor=\"middle\">window length (minutes)</text>\n";
  svg << "<text transform=\"translate(12," << fmt(top + plot_h / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">accuracy</text>\n";
  for (std::size_t v = 0; v < reports.size(); ++v) {
    const double y = top + 14.0 * static_cast<double>(v);
    svg << "<rect x=\"" << left + plot_w + 14 << "\" y=\"" << fmt(y) << "\" width=\"10\" height=\"10\" fill=\""
        << palette[v % 6] << "\"/>\n";
    svg << "<text x=\"" << left + plot_w + 30 << "\" y=\"" << fmt(y + 9) << "\">" << reports[v].variant
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

inline void write_reports(const fs::path& dir, const std::vector<SweepReport>& reports) {
  fs::create_directories(dir);
  dataio::write_text(dir / "accuracy_vs_window.csv", accuracy_csv(reports));
  dataio::write_text(dir / "difficulty_table.csv", difficulty_csv(reports));
  dataio::write_text(dir / "summary.json", summary_json(reports).dump(2) + "\n");
  dataio::write_text(dir / "accuracy_vs_window.svg", accuracy_svg(reports));
}

}  // namespace smartvr::report
