#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "traplab/environment.hpp"

#include "json.hpp"

namespace traplab::io {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// CSV files carry a schema version comment line before the header.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& schema,
            const std::vector<std::string>& columns)
      : out_(path) {
    if (!out_) throw std::runtime_error("CsvWriter: cannot open " + path);
    out_ << "# traplab-csv v1 schema=" << schema << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i)
      out_ << columns[i] << (i + 1 < columns.size() ? "," : "\n");
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      out_ << cells[i] << (i + 1 < cells.size() ? "," : "\n");
  }

  void row_values(const std::vector<double>& vals) {
    for (std::size_t i = 0; i < vals.size(); ++i)
      out_ << format_g17(vals[i]) << (i + 1 < vals.size() ? "," : "\n");
  }

 private:
  std::ofstream out_;
};

inline void write_point_measure_csv(const std::string& path, const PointMeasure& m) {
  std::vector<std::string> cols;
  for (int i = 0; i < m.dim; ++i) cols.push_back("x_" + std::to_string(i + 1));
  cols.push_back("weight");
  CsvWriter w(path, "point-measure", cols);
  for (const Atom& a : m.atoms) {
    std::vector<double> vals;
    for (int i = 0; i < m.dim; ++i) vals.push_back(a.x[i]);
    vals.push_back(a.weight);
    w.row_values(vals);
  }
}

// Environment JSON: {d, L, beta, seed, alpha:[...]} with canonical row-major
// site order.
inline nlohmann::json environment_to_json(const Environment& env) {
  if (!env.lattice.is_box())
    throw std::invalid_argument("environment_to_json: only box lattices serialize");
  nlohmann::json j;
  j["d"] = env.d();
  j["L"] = env.lattice.box_half_width();
  j["beta"] = env.beta;
  j["seed"] = env.seed;
  j["alpha"] = env.depth;
  return j;
}

inline Environment environment_from_json(const nlohmann::json& j) {
  Environment env;
  env.lattice = Lattice::box(j.at("d").get<int>(), j.at("L").get<int>());
  env.beta = j.at("beta").get<double>();
  env.seed = j.at("seed").get<std::uint64_t>();
  env.depth = j.at("alpha").get<std::vector<std::int64_t>>();
  env.validate();
  env.build_tables();
  return env;
}

// ---------------------------------------------------------------------------
// Native SVG line charts (static artifacts, no external renderer).

struct SvgSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct SvgOptions {
  std::string title, xlabel, ylabel;
  bool logx = false;
  bool logy = false;
  int width = 720, height = 480;
};

inline void write_svg_chart(const std::string& path, const std::vector<SvgSeries>& series,
                            const SvgOptions& opt) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  const double ml = 70, mr = 20, mt = 40, mb = 55;
  const double pw = opt.width - ml - mr, ph = opt.height - mt - mb;

  auto tx = [&](double v) { return opt.logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return opt.logy ? std::log10(v) : v; };

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if ((opt.logx && x <= 0.0) || (opt.logy && y <= 0.0)) continue;
      xmin = std::min(xmin, tx(x));
      xmax = std::max(xmax, tx(x));
      ymin = std::min(ymin, ty(y));
      ymax = std::max(ymax, ty(y));
    }
  if (xmin > xmax) {
    xmin = 0.0;
    xmax = 1.0;
  }
  if (ymin > ymax) {
    ymin = 0.0;
    ymax = 1.0;
  }
  if (xmax - xmin < 1e-12) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }

  auto px = [&](double x) { return ml + (tx(x) - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return mt + ph - (ty(y) - ymin) / (ymax - ymin) * ph; };

  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_svg_chart: cannot open " + path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
    << opt.height << "\" viewBox=\"0 0 " << opt.width << " " << opt.height << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << opt.width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
    << "font-family=\"sans-serif\" font-size=\"15\">" << opt.title << "</text>\n";

  f << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#333\"/>\n";
  const int nticks = 5;
  for (int i = 0; i <= nticks; ++i) {
    const double fx = xmin + (xmax - xmin) * i / nticks;
    const double fy = ymin + (ymax - ymin) * i / nticks;
    const double vx = opt.logx ? std::pow(10.0, fx) : fx;
    const double vy = opt.logy ? std::pow(10.0, fy) : fy;
    const double sx = ml + pw * i / nticks;
    const double sy = mt + ph - ph * i / nticks;
    f << "<line x1=\"" << sx << "\" y1=\"" << mt + ph << "\" x2=\"" << sx << "\" y2=\""
      << mt + ph + 5 << "\" stroke=\"#333\"/>\n";
    f << "<text x=\"" << sx << "\" y=\"" << mt + ph + 18
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
      << format_g17(std::round(vx * 1e4) / 1e4).substr(0, 8) << "</text>\n";
    f << "<line x1=\"" << ml - 5 << "\" y1=\"" << sy << "\" x2=\"" << ml << "\" y2=\"" << sy
      << "\" stroke=\"#333\"/>\n";
    f << "<text x=\"" << ml - 8 << "\" y=\"" << sy + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
      << format_g17(std::round(vy * 1e4) / 1e4).substr(0, 8) << "</text>\n";
  }
  f << "<text x=\"" << ml + pw / 2 << "\" y=\"" << opt.height - 8
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << opt.xlabel
    << "</text>\n";
  f << "<text x=\"16\" y=\"" << mt + ph / 2
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
    << "transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">" << opt.ylabel << "</text>\n";

  int ci = 0;
  for (const auto& s : series) {
    const char* color = palette[ci % 8];
    std::ostringstream pts;
    for (const auto& [x, y] : s.points) {
      if ((opt.logx && x <= 0.0) || (opt.logy && y <= 0.0)) continue;
      pts << px(x) << "," << py(y) << " ";
    }
    f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\""
      << pts.str() << "\" data-series=\"" << s.name << "\"/>\n";
    f << "<text x=\"" << ml + pw - 6 << "\" y=\"" << mt + 16 + 15 * ci
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color
      << "\">" << s.name << "</text>\n";
    ++ci;
  }
  f << "</svg>\n";
}

}  // namespace traplab::io
