// tools/src/svg.cc

#include "mgf_cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mgf/error.hpp"
#include "mgf/io_util.hpp"

namespace mgf::cli {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 64, kRight = 24, kTop = 36, kBottom = 52;

const char* kPalette[6] = {"#1f77b4", "#d62728", "#2ca02c",
                           "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string line_chart_svg(const std::string& title,
                           const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<Series>& series) {
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  bool any = false;
  for (const Series& s : series)
    for (auto [x, y] : s.points) {
      if (!any) {
        x_lo = x_hi = x;
        y_lo = y_hi = y;
        any = true;
      }
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  if (x_hi == x_lo) x_hi = x_lo + 1;
  if (y_hi == y_lo) y_hi = y_lo + 1;
  double x_pad = 0.05 * (x_hi - x_lo), y_pad = 0.05 * (y_hi - y_lo);
  x_lo -= x_pad;
  x_hi += x_pad;
  y_lo -= y_pad;
  y_hi += y_pad;

  double plot_w = kWidth - kLeft - kRight;
  double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * plot_w; };
  auto py = [&](double y) {
    return kTop + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
         "\" height=\"" + num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) +
         " " + num(kHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + coord(kWidth / 2) + "\" y=\"20\" font-family=\"sans-serif\" "
         "font-size=\"14\" text-anchor=\"middle\">" + title + "</text>\n";

  // Axes.
  svg += "<line x1=\"" + coord(kLeft) + "\" y1=\"" + coord(kTop) + "\" x2=\"" +
         coord(kLeft) + "\" y2=\"" + coord(kTop + plot_h) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + coord(kLeft) + "\" y1=\"" + coord(kTop + plot_h) +
         "\" x2=\"" + coord(kLeft + plot_w) + "\" y2=\"" +
         coord(kTop + plot_h) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    double fx = x_lo + (x_hi - x_lo) * t / 4.0;
    double fy = y_lo + (y_hi - y_lo) * t / 4.0;
    svg += "<line x1=\"" + coord(px(fx)) + "\" y1=\"" + coord(kTop + plot_h) +
           "\" x2=\"" + coord(px(fx)) + "\" y2=\"" + coord(kTop + plot_h + 5) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + coord(px(fx)) + "\" y=\"" + coord(kTop + plot_h + 18) +
           "\" font-family=\"sans-serif\" font-size=\"11\" "
           "text-anchor=\"middle\">" + num(fx) + "</text>\n";
    svg += "<line x1=\"" + coord(kLeft - 5) + "\" y1=\"" + coord(py(fy)) +
           "\" x2=\"" + coord(kLeft) + "\" y2=\"" + coord(py(fy)) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + coord(kLeft - 8) + "\" y=\"" + coord(py(fy) + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\" "
           "text-anchor=\"end\">" + num(fy) + "</text>\n";
  }
  svg += "<text x=\"" + coord(kLeft + plot_w / 2) + "\" y=\"" +
         coord(kHeight - 12) + "\" font-family=\"sans-serif\" font-size=\"12\" "
         "text-anchor=\"middle\">" + x_label + "</text>\n";
  svg += "<text x=\"16\" y=\"" + coord(kTop + plot_h / 2) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 16 " + coord(kTop + plot_h / 2) + ")\">" +
         y_label + "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % 6];
    std::string pts;
    for (auto [x, y] : series[si].points) {
      if (!pts.empty()) pts += " ";
      pts += coord(px(x)) + "," + coord(py(y));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    for (auto [x, y] : series[si].points)
      svg += "<circle cx=\"" + coord(px(x)) + "\" cy=\"" + coord(py(y)) +
             "\" r=\"2.5\" fill=\"" + std::string(color) + "\"/>\n";
    double ly = kTop + 14 + 16 * static_cast<double>(si);
    svg += "<line x1=\"" + coord(kLeft + plot_w - 130) + "\" y1=\"" +
           coord(ly - 4) + "\" x2=\"" + coord(kLeft + plot_w - 112) +
           "\" y2=\"" + coord(ly - 4) + "\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\"/>\n";
    svg += "<text x=\"" + coord(kLeft + plot_w - 106) + "\" y=\"" + coord(ly) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" +
           series[si].name + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
  io::atomic_write(path, line_chart_svg(title, x_label, y_label, series));
}

}  // namespace mgf::cli
