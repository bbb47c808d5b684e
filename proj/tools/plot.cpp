#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hfsda/errors.hpp"

namespace hfsda::plot {

namespace {

constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else if (c == '&')
      out += "&amp;";
    else
      out += c;
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

Frame bounds(const std::vector<Series>& series) {
  Frame f{INFINITY, -INFINITY, INFINITY, -INFINITY};
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      f.x0 = std::min(f.x0, x);
      f.x1 = std::max(f.x1, x);
      f.y0 = std::min(f.y0, y);
      f.y1 = std::max(f.y1, y);
    }
  }
  if (!std::isfinite(f.x0)) f = {0, 1, 0, 1};
  if (f.x1 - f.x0 < 1e-12) f.x1 = f.x0 + 1;
  if (f.y1 - f.y0 < 1e-12) f.y1 = f.y0 + 1;
  const double pad = 0.05 * (f.y1 - f.y0);
  f.y0 -= pad;
  f.y1 += pad;
  return f;
}

void axes(std::ostream& os, const Frame& f, const std::string& title, const std::string& xl, const std::string& yl) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight << "\" y2=\""
     << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    os << "<text x=\"" << f.px(xv) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">" << xv
       << "</text>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << f.py(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
  }
  os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << escape(xl)
     << "</text>\n";
  os << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << kHeight / 2
     << ")\">" << escape(yl) << "</text>\n";
}

void write(const std::filesystem::path& path, const std::string& svg) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << svg;
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace

void line_chart(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                const std::string& y_label, const std::vector<Series>& series) {
  const Frame f = bounds(series);
  std::ostringstream os;
  os.precision(4);
  axes(os, f, title, x_label, y_label);
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % 5];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (auto [x, y] : series[s].points) os << f.px(x) << ',' << f.py(y) << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << kWidth - kRight - 4 << "\" y=\"" << kTop + 14 * (s + 1) << "\" text-anchor=\"end\" fill=\""
       << color << "\">" << escape(series[s].label) << "</text>\n";
  }
  os << "</svg>\n";
  write(path, os.str());
}

void scatter_chart(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                   const std::string& y_label, const Series& points) {
  const Frame f = bounds({points});
  std::ostringstream os;
  os.precision(4);
  axes(os, f, title, x_label, y_label);
  for (auto [x, y] : points.points)
    os << "<circle cx=\"" << f.px(x) << "\" cy=\"" << f.py(y) << "\" r=\"4\" fill=\"" << kColors[0] << "\"/>\n";
  os << "</svg>\n";
  write(path, os.str());
}

}  // namespace hfsda::plot
