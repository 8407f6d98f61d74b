#pragma once

// Self-contained SVG emission for success-rate-vs-epoch curves. The data
// table is embedded in an XML comment so the file carries its own numbers.

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dvrl/io.hpp"

namespace dvrl {

struct PlotSeries {
  std::string label;
  std::vector<EpochMetrics> rows;
};

inline void write_success_plot(const std::vector<PlotSeries>& series,
                               const std::string& out_path) {
  if (series.empty()) throw IoError("nothing to plot");
  int max_epoch = 0;
  for (const auto& s : series) {
    if (s.rows.empty()) throw IoError("empty metrics series: " + s.label);
    for (const auto& r : s.rows) max_epoch = std::max(max_epoch, r.epoch);
  }

  const double w = 640, h = 420;
  const double ml = 60, mr = 20, mt = 30, mb = 50;
  const double pw = w - ml - mr, ph = h - mt - mb;
  const auto x_of = [&](double epoch) {
    return ml + pw * (max_epoch > 1 ? (epoch - 1) / (max_epoch - 1) : 0.5);
  };
  const auto y_of = [&](double v) { return mt + ph * (1.0 - v); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b"};

  std::ostringstream svg;
  svg.precision(12);
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h
      << "\">\n";
  svg << "<!-- data table (epoch, success_rate) per series\n";
  for (const auto& s : series) {
    svg << "series: " << s.label << '\n';
    for (const auto& r : s.rows)
      svg << r.epoch << ", " << r.success_rate << '\n';
  }
  svg << "-->\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // axes and gridlines
  svg << "<g stroke=\"#cccccc\" stroke-width=\"1\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = y_of(i / 5.0);
    svg << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << ml + pw
        << "\" y2=\"" << y << "\"/>\n";
  }
  svg << "</g>\n";
  svg << "<g stroke=\"black\" stroke-width=\"1.5\" fill=\"none\">\n"
      << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << mt + ph << "\"/>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
      << "\" y2=\"" << mt + ph << "\"/>\n</g>\n";
  svg << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (int i = 0; i <= 5; ++i) {
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << y_of(i / 5.0) + 4
        << "\" text-anchor=\"end\">" << i * 0.2 << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double e = 1 + (max_epoch - 1) * i / 4.0;
    svg << "<text x=\"" << x_of(e) << "\" y=\"" << mt + ph + 18
        << "\" text-anchor=\"middle\">" << static_cast<int>(e + 0.5)
        << "</text>\n";
  }
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\">epoch</text>\n";
  svg << "<text x=\"16\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << mt + ph / 2 << ")\">success rate</text>\n";
  svg << "</g>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = colors[si % 6];
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (const auto& r : series[si].rows)
      svg << x_of(r.epoch) << "," << y_of(r.success_rate) << " ";
    svg << "\"/>\n";
    svg << "<g font-family=\"sans-serif\" font-size=\"12\">"
        << "<rect x=\"" << ml + 10 << "\" y=\"" << mt + 8 + 18.0 * si
        << "\" width=\"14\" height=\"4\" fill=\"" << color << "\"/>"
        << "<text x=\"" << ml + 30 << "\" y=\"" << mt + 14 + 18.0 * si
        << "\">" << series[si].label << "</text></g>\n";
  }
  svg << "</svg>\n";

  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("cannot write plot: " + out_path);
  out << svg.str();
}

}  // namespace dvrl
