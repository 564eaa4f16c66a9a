#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "aif/errors.hpp"
#include "aif/trace/trace.hpp"

namespace aif {

struct Series {
  std::string agent;
  /// F or G.
  std::string quantity;
  std::vector<std::uint64_t> ticks;
  std::vector<double> values;
};

/// F from every Perception and G of every scored plan, per agent, in trace order. Values are copied verbatim.
inline std::vector<Series> free_energy_series(const std::vector<TraceEvent>& events) {
  std::map<std::pair<std::string, std::string>, Series> by_key;
  auto push = [&](const TraceEvent& e, const char* q, double v) {
    auto& s = by_key[{e.agent_id, q}];
    s.agent = e.agent_id;
    s.quantity = q;
    s.ticks.push_back(e.tick);
    s.values.push_back(v);
  };
  for (const auto& e : events) {
    if (e.event_type == "Perception" && e.payload.contains("f") && e.payload.at("f").is_number()) {
      push(e, "F", e.payload.at("f").get<double>());
    } else if (e.event_type == "PlanSelected" && e.payload.contains("efe_report") &&
               e.payload.at("efe_report").contains("g_form2")) {
      push(e, "G", e.payload.at("efe_report").at("g_form2").get<double>());
    }
  }
  std::vector<Series> out;
  for (auto& [k, s] : by_key) out.push_back(std::move(s));
  return out;
}

inline std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Polyline over the point index with the value range on the y axis.
inline std::string render_svg(const Series& s, int width = 800, int height = 300) {
  const double left = 70, right = 20, top = 30, bottom = 40;
  const double pw = width - left - right, ph = height - top - bottom;
  double lo = 0.0, hi = 1.0;
  if (!s.values.empty()) {
    lo = *std::min_element(s.values.begin(), s.values.end());
    hi = *std::max_element(s.values.begin(), s.values.end());
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const std::size_t n = s.values.size();
  auto x = [&](std::size_t i) { return left + (n <= 1 ? pw / 2 : pw * static_cast<double>(i) / static_cast<double>(n - 1)); };
  auto y = [&](double v) { return top + ph * (hi - v) / (hi - lo); };

  std::string points;
  for (std::size_t i = 0; i < n; ++i) points += fmt::format("{:.3f},{:.3f} ", x(i), y(s.values[i]));

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{}\" y=\"18\" font-family=\"monospace\" font-size=\"13\">{} {} ({} points)</text>\n"
      "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n"
      "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n"
      "<text x=\"4\" y=\"{:.1f}\" font-family=\"monospace\" font-size=\"11\">{:.4g}</text>\n"
      "<text x=\"4\" y=\"{:.1f}\" font-family=\"monospace\" font-size=\"11\">{:.4g}</text>\n"
      "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">tick {} .. {}</text>\n",
      width, height, width, height, left, escape_xml(s.agent), s.quantity, n, left, top, left, top + ph, left, top + ph,
      left + pw, top + ph, top + 4, hi, top + ph, lo, left, height - 10, s.ticks.empty() ? 0 : s.ticks.front(),
      s.ticks.empty() ? 0 : s.ticks.back());
  if (n > 0) {
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                       s.quantity == "F" ? "#1f77b4" : "#d62728", points);
  }
  svg += "</svg>\n";
  return svg;
}

/// Writes <agent>_<F|G>.svg for every series and returns the paths written.
inline std::vector<std::string> plot_trace(const std::string& trace_path, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;
  for (const auto& s : free_energy_series(read_trace(trace_path))) {
    const auto path = (std::filesystem::path(out_dir) / (s.agent + "_" + s.quantity + ".svg")).string();
    std::ofstream out(path, std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::ConfigError, "cannot write '" + path + "'");
    out << render_svg(s);
    written.push_back(path);
  }
  return written;
}

}  // namespace aif
