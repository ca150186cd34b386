#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "ctd4/harness.hpp"

namespace ctd4 {

namespace {

struct Point {
  double step;
  double mean;
  double std;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

void plot_metrics(std::span<const std::filesystem::path> csvs, const std::filesystem::path& out_svg) {
  if (csvs.empty()) throw std::invalid_argument("plot: no metrics files given");

  std::map<std::uint64_t, std::vector<double>> by_step;
  for (const auto& path : csvs) {
    for (const auto& row : read_metrics_csv(path)) by_step[row.step].push_back(row.eval_mean_return);
  }

  std::vector<Point> points;
  for (const auto& [step, values] : by_step) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    points.push_back({static_cast<double>(step), mean, std::sqrt(var / static_cast<double>(values.size()))});
  }

  constexpr double width = 800, height = 480;
  constexpr double left = 70, right = 20, top = 20, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  const double x_max = points.empty() ? 1.0 : points.back().step;
  double y_min = 0.0;
  double y_max = 1.0;
  if (!points.empty()) {
    y_min = y_max = points.front().mean;
    for (const auto& p : points) {
      y_min = std::min(y_min, p.mean - p.std);
      y_max = std::max(y_max, p.mean + p.std);
    }
    if (y_max - y_min < 1e-9) {
      y_min -= 1.0;
      y_max += 1.0;
    }
  }
  auto sx = [&](double x) { return left + plot_w * (x_max > 0 ? x / x_max : 0.0); };
  auto sy = [&](double y) { return top + plot_h * (1.0 - (y - y_min) / (y_max - y_min)); };

  std::ofstream out(out_svg, std::ios::trunc);
  if (!out) throw std::runtime_error("plot: cannot write " + out_svg.string());
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";

  // Axes.
  out << "  <line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n"
      << "  <line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  out << "  <text class=\"x-min\" x=\"" << left << "\" y=\"" << height - 30
      << "\" font-size=\"12\" text-anchor=\"middle\">0</text>\n"
      << "  <text class=\"x-max\" x=\"" << left + plot_w << "\" y=\"" << height - 30
      << "\" font-size=\"12\" text-anchor=\"middle\">" << (points.empty() ? 0 : by_step.rbegin()->first)
      << "</text>\n"
      << "  <text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
      << "\" font-size=\"13\" text-anchor=\"middle\">step</text>\n"
      << "  <text class=\"y-min\" x=\"" << left - 8 << "\" y=\"" << sy(y_min)
      << "\" font-size=\"12\" text-anchor=\"end\">" << label(y_min) << "</text>\n"
      << "  <text class=\"y-max\" x=\"" << left - 8 << "\" y=\"" << sy(y_max) + 12
      << "\" font-size=\"12\" text-anchor=\"end\">" << label(y_max) << "</text>\n"
      << "  <text x=\"16\" y=\"" << top + plot_h / 2 << "\" font-size=\"13\" text-anchor=\"middle\" "
      << "transform=\"rotate(-90 16 " << top + plot_h / 2 << ")\">eval mean return</text>\n";

  if (!points.empty()) {
    out << "  <polygon class=\"band\" fill=\"steelblue\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
    for (const auto& p : points) out << num(sx(p.step)) << ',' << num(sy(p.mean + p.std)) << ' ';
    for (auto it = points.rbegin(); it != points.rend(); ++it) {
      out << num(sx(it->step)) << ',' << num(sy(it->mean - it->std)) << ' ';
    }
    out << "\"/>\n";
    out << "  <polyline class=\"mean\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (const auto& p : points) out << num(sx(p.step)) << ',' << num(sy(p.mean)) << ' ';
    out << "\"/>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("plot: failed writing " + out_svg.string());
}

}  // namespace ctd4
