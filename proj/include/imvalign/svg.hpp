#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "imvalign/errors.hpp"

namespace imvalign {

// One heatmap panel: weights row-major, row 0 drawn at the top.
struct HeatmapPanel {
  std::string title;
  int rows = 0;
  int cols = 0;
  std::vector<double> weights;
};

// Self-contained vector-graphics heatmap: one rectangle per cell, grayscale by
// weight (normalized per panel), labeled axes. Panels render side by side.
void write_heatmap_svg(const std::string& path,
                       const std::vector<HeatmapPanel>& panels,
                       const std::string& x_label, const std::string& y_label);

// Raw-matrix sidecar: "rows cols" on the first line, then one row per line.
void write_matrix_text(const std::string& path, int rows, int cols,
                       const std::vector<double>& values);
std::tuple<int, int, std::vector<double>> read_matrix_text(const std::string& path);

}  // namespace imvalign
