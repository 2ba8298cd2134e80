// tools/include/mgf_cli/svg.hpp
//
// Minimal SVG line-chart writer for sweep curves. Output is deterministic:
// same series, same bytes.

#ifndef MGF_CLI_SVG_HPP_
#define MGF_CLI_SVG_HPP_

#include <string>
#include <utility>
#include <vector>

namespace mgf::cli {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y), plotted in order
};

std::string line_chart_svg(const std::string& title,
                           const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<Series>& series);

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

}  // namespace mgf::cli

#endif  // MGF_CLI_SVG_HPP_
