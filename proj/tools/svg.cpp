#include "svg.hpp"

#include "sparsestab/core.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

namespace sparsestab::cli {
namespace {

struct Row {
  long k = 0;
  std::string lambda;  // kept as text so grouping never depends on rounding
  long s = 0;
  double margin = 0.0;
  long s_star = 0;
};

std::vector<Row> parse_rows(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line.rfind("k,lambda,s,margin,s_star", 0) != 0) {
    throw DataError("margin-study CSV has an unexpected header");
  }
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() < 5) {
      throw DataError("margin-study CSV line " + std::to_string(line_no) + " has too few fields");
    }
    try {
      rows.push_back({std::stol(f[0]), f[1], std::stol(f[2]), std::stod(f[3]), std::stol(f[4])});
    } catch (const std::exception&) {
      throw DataError("margin-study CSV line " + std::to_string(line_no) + " is not numeric");
    }
  }
  return rows;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

std::vector<long> margin_csv_ks(const std::string& csv) {
  std::vector<long> ks;
  for (const auto& r : parse_rows(csv)) {
    if (std::find(ks.begin(), ks.end(), r.k) == ks.end()) ks.push_back(r.k);
  }
  return ks;
}

std::string render_margin_svg(const std::string& csv, long k) {
  const auto all = parse_rows(csv);
  std::vector<std::string> order;
  std::map<std::string, std::vector<Row>> series;
  double y_max = 0.0;
  for (const auto& r : all) {
    if (r.k != k) continue;
    if (!series.count(r.lambda)) order.push_back(r.lambda);
    series[r.lambda].push_back(r);
    y_max = std::max(y_max, r.margin);
  }
  if (order.empty()) throw DataError("margin-study CSV has no rows for k = " + std::to_string(k));
  if (y_max <= 0.0) y_max = 1.0;
  y_max *= 1.1;

  const double width = 640, height = 420, left = 70, right = 150, top = 40, bottom = 60;
  const double pw = width - left - right, ph = height - top - bottom;
  const double x_max = std::max<double>(1.0, static_cast<double>(k - 1));
  auto px = [&](double s) { return left + pw * s / x_max; };
  auto py = [&](double m) { return top + ph * (1.0 - m / y_max); };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#17becf"};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << "s-margin versus s (k = " << k << ")</text>\n";
  // Axes.
  svg << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
      << top + ph << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  const long x_step = k > 12 ? 2 : 1;
  for (long s = 0; s < k; s += x_step) {
    svg << "<line x1=\"" << fmt(px(s)) << "\" y1=\"" << top + ph << "\" x2=\"" << fmt(px(s))
        << "\" y2=\"" << top + ph + 5 << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << fmt(px(s)) << "\" y=\"" << top + ph + 18
        << "\" text-anchor=\"middle\">" << s << "</text>\n";
  }
  for (int t = 0; t <= 5; ++t) {
    const double v = y_max * t / 5.0;
    svg << "<line x1=\"" << left - 5 << "\" y1=\"" << fmt(py(v)) << "\" x2=\"" << left
        << "\" y2=\"" << fmt(py(v)) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << fmt(py(v) + 4)
        << "\" text-anchor=\"end\">" << fmt_tick(v) << "</text>\n";
  }
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 15
      << "\" text-anchor=\"middle\">s</text>\n";
  svg << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << top + ph / 2 << ")\">margin</text>\n";

  for (std::size_t c = 0; c < order.size(); ++c) {
    auto rows = series[order[c]];
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.s < b.s; });
    const char* color = kColors[c % (sizeof kColors / sizeof *kColors)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& r : rows) svg << fmt(px(r.s)) << ',' << fmt(py(r.margin)) << ' ';
    svg << "\"/>\n";
    for (const auto& r : rows) {
      if (r.s == r.s_star) {
        svg << "<circle cx=\"" << fmt(px(r.s)) << "\" cy=\"" << fmt(py(r.margin))
            << "\" r=\"5\" fill=\"" << color << "\" stroke=\"black\"/>\n";
      }
    }
    const double ly = top + 10 + 20.0 * static_cast<double>(c);
    svg << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 40
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + pw + 45 << "\" y=\"" << ly + 4 << "\">lambda = " << order[c]
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace sparsestab::cli
