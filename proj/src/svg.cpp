#include "steerlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace steerlab::svg {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Blue -> white -> red diverging map over [lo, hi].
std::string heat_color(double v, double lo, double hi) {
  double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
  t = std::clamp(t, 0.0, 1.0);
  int r, g, b;
  if (t < 0.5) {
    const double u = t * 2.0;
    r = static_cast<int>(40 + u * 215);
    g = static_cast<int>(90 + u * 165);
    b = static_cast<int>(170 + u * 85);
  } else {
    const double u = (t - 0.5) * 2.0;
    r = 255;
    g = static_cast<int>(255 - u * 180);
    b = static_cast<int>(255 - u * 200);
  }
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::string impact_heatmap(const patch::ImpactMatrix& m, const std::string& title,
                           const std::string& provenance_comment) {
  const int L = m.layer_count();
  const int C = static_cast<int>(m.concepts.size());
  const int cell = 46, left = 70, top = 58, bottom = 24, right = 16;
  const int width = left + C * cell + right;
  const int height = top + L * cell + bottom;

  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& row : m.cells)
    for (const auto& c : row)
      if (c.valid()) {
        lo = any ? std::min(lo, c.mean) : c.mean;
        hi = any ? std::max(hi, c.mean) : c.mean;
        any = true;
      }
  if (!any) {
    lo = 0.0;
    hi = 1.0;
  }

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"monospace\" font-size=\"11\">\n";
  if (!provenance_comment.empty()) os << "<!-- " << provenance_comment << " -->\n";
  os << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
     << title << "</text>\n";
  for (int c = 0; c < C; ++c)
    os << "<text x=\"" << left + c * cell + cell / 2 << "\" y=\"" << top - 8
       << "\" text-anchor=\"middle\" font-size=\"9\">" << m.concepts[static_cast<size_t>(c)]
       << "</text>\n";
  for (int l = 0; l < L; ++l) {
    os << "<text x=\"" << left - 8 << "\" y=\"" << top + l * cell + cell / 2 + 4
       << "\" text-anchor=\"end\">L" << l << "</text>\n";
    for (int c = 0; c < C; ++c) {
      const auto& cv = m.cells[static_cast<size_t>(l)][static_cast<size_t>(c)];
      const int x = left + c * cell, y = top + l * cell;
      if (cv.valid()) {
        os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\""
           << cell << "\" fill=\"" << heat_color(cv.mean, lo, hi)
           << "\" stroke=\"#777\" stroke-width=\"0.5\"/>\n";
        os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
           << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(cv.mean) << "</text>\n";
      } else {
        os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\""
           << cell << "\" fill=\"#ddd\" stroke=\"#777\" stroke-width=\"0.5\"/>\n";
        os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
           << "\" text-anchor=\"middle\" fill=\"#888\">-</text>\n";
      }
    }
  }
  os << "<text x=\"" << left << "\" y=\"" << height - 8 << "\" font-size=\"9\">impact range ["
     << fmt(lo) << ", " << fmt(hi) << "]</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string line_chart(const std::vector<Series>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::string& provenance_comment) {
  const int width = 560, height = 360, left = 64, right = 150, top = 40, bottom = 48;
  const int plot_w = width - left - right, plot_h = height - top - bottom;

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (first) {
        xmin = xmax = x;
        ymin = ymax = y;
        first = false;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double y) { return top + plot_h - (y - ymin) / (ymax - ymin) * plot_h; };

  static const char* kColors[] = {"#1f6fb4", "#d1495b", "#3c8d40", "#8a5fbf",
                                  "#c78a2d", "#2aa4a8", "#7a7a7a", "#b04a98"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"monospace\" font-size=\"11\">\n";
  if (!provenance_comment.empty()) os << "<!-- " << provenance_comment << " -->\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
     << title << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\""
     << plot_h << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0;
    os << "<line x1=\"" << left << "\" y1=\"" << py(y) << "\" x2=\"" << left + plot_w
       << "\" y2=\"" << py(y) << "\" stroke=\"#ccc\" stroke-width=\"0.5\"/>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << py(y) + 4
       << "\" text-anchor=\"end\" font-size=\"9\">" << fmt(y) << "</text>\n";
    const double x = xmin + (xmax - xmin) * i / 4.0;
    os << "<text x=\"" << px(x) << "\" y=\"" << top + plot_h + 16
       << "\" text-anchor=\"middle\" font-size=\"9\">" << fmt(x) << "</text>\n";
  }
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
     << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  os << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 16 "
     << top + plot_h / 2 << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";

  int ci = 0;
  for (const auto& s : series) {
    const char* color = kColors[ci % 8];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : s.points) os << fmt(px(x)) << "," << fmt(py(y)) << " ";
    os << "\"/>\n";
    os << "<text x=\"" << left + plot_w + 8 << "\" y=\"" << top + 14 + 14 * ci << "\" fill=\""
       << color << "\" font-size=\"10\">" << s.label << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace steerlab::svg
