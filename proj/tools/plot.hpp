#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace hfsda::plot {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

// Minimal static SVG charts; lines joins points in order, scatter draws dots.
void line_chart(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                const std::string& y_label, const std::vector<Series>& series);
void scatter_chart(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                   const std::string& y_label, const Series& points);

}  // namespace hfsda::plot
