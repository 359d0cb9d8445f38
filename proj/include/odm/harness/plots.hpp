#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace odm::harness {

/// A parsed metrics CSV: header plus rows of raw cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::invalid_argument("csv: no column '" + name + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  cells.push_back(cell);
  return cells;
}

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("csv: empty input");
  t.header = split_csv_line(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size())
      throw std::invalid_argument("csv: row has " + std::to_string(cells.size()) + " cells, header has " +
                                  std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

struct Series {
  std::string label;
  std::vector<double> x, y;
};

/// One series per distinct `group_col` value among rows whose phase matches,
/// skipping empty cells.
inline std::vector<Series> extract_series(const CsvTable& t, const std::string& phase, const std::string& y_col,
                                          const std::string& group_col = "course",
                                          const std::string& x_col = "iteration") {
  const std::size_t pc = t.column("phase"), gc = t.column(group_col), xc = t.column(x_col), yc = t.column(y_col);
  std::vector<Series> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : t.rows) {
    if (r[pc] != phase || r[yc].empty() || r[xc].empty()) continue;
    auto [it, fresh] = index.emplace(r[gc], out.size());
    if (fresh) out.push_back({r[gc], {}, {}});
    out[it->second].x.push_back(std::stod(r[xc]));
    out[it->second].y.push_back(std::stod(r[yc]));
  }
  return out;
}

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Plain SVG line chart with axes, min/max tick labels and a legend.
inline std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                                  const std::vector<Series>& series) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  const double w = 640, h = 400, left = 70, right = 160, top = 40, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  using detail::num;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << detail::xml_escape(title)
     << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << left << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << num(x0) << "</text>\n";
  os << "<text x=\"" << left + pw << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << num(x1)
     << "</text>\n";
  os << "<text x=\"" << left - 6 << "\" y=\"" << top + ph << "\" text-anchor=\"end\">" << num(y0) << "</text>\n";
  os << "<text x=\"" << left - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << num(y1) << "</text>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">"
     << detail::xml_escape(x_label) << "</text>\n";
  os << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << top + ph / 2 << ")\">" << detail::xml_escape(y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = colors[k % std::size(colors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      os << num(px(s.x[i])) << "," << num(py(s.y[i])) << " ";
    }
    os << "\"/>\n";
    const double ly = top + 14 + 18 * static_cast<double>(k);
    os << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + pw + 32 << "\" y2=\""
       << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly << "\">" << detail::xml_escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

struct PlotSpec {
  std::string file;
  std::string phase;
  std::string column;
  std::string title;
  std::string y_label;
};

inline const std::vector<PlotSpec>& standard_plots() {
  static const std::vector<PlotSpec> plots{
      {"pretrain_loss.svg", "pretrain", "loss_total", "Pretraining loss", "loss"},
      {"pretrain_val_mse.svg", "pretrain", "val_mse", "Validation imitation MSE", "MSE"},
      {"finetune_return.svg", "finetune", "mean_return", "Finetuning return", "mean return"},
      {"finetune_length.svg", "finetune", "mean_length", "Finetuning episode length", "mean length"},
  };
  return plots;
}

/// Renders every standard plot that has data. Pure function of the CSV.
inline std::map<std::string, std::string> render_plots(const std::string& csv_text) {
  const CsvTable t = parse_csv(csv_text);
  std::map<std::string, std::string> out;
  for (const auto& p : standard_plots()) {
    auto series = extract_series(t, p.phase, p.column);
    if (series.empty()) continue;
    out[p.file] = svg_line_chart(p.title, "iteration", p.y_label, series);
  }
  return out;
}

inline std::vector<std::string> write_plots(const std::string& csv_path, const std::string& plot_dir) {
  std::ifstream f(csv_path);
  if (!f) throw std::runtime_error("cannot read metrics '" + csv_path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  std::filesystem::create_directories(plot_dir);
  std::vector<std::string> written;
  for (const auto& [name, svg] : render_plots(ss.str())) {
    const auto path = (std::filesystem::path(plot_dir) / name).string();
    std::ofstream(path, std::ios::binary) << svg;
    written.push_back(path);
  }
  return written;
}

}  // namespace odm::harness
