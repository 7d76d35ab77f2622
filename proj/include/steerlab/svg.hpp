#pragma once

#include "steerlab/patching.hpp"

#include <string>
#include <vector>

// Deterministic SVG figures, no rasterization dependencies.

namespace steerlab::svg {

// Layers x concepts heatmap of impact scores; absent cells hatched grey.
std::string impact_heatmap(const patch::ImpactMatrix& m, const std::string& title,
                           const std::string& provenance_comment);

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

// Simple polyline chart (alignment vs alpha curves and loss curves).
std::string line_chart(const std::vector<Series>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::string& provenance_comment);

}  // namespace steerlab::svg
