#include "imvalign/svg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace imvalign {

namespace {

constexpr int kCell = 10;
constexpr int kMarginLeft = 60;
constexpr int kMarginTop = 34;
constexpr int kMarginBottom = 46;
constexpr int kPanelGap = 40;

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_heatmap_svg(const std::string& path,
                       const std::vector<HeatmapPanel>& panels,
                       const std::string& x_label, const std::string& y_label) {
  if (panels.empty()) throw ConfigError("svg: no panels to render");
  int width = kMarginLeft;
  int height = 0;
  for (const auto& p : panels) {
    if (p.rows < 1 || p.cols < 1 ||
        static_cast<long long>(p.rows) * p.cols !=
            static_cast<long long>(p.weights.size()))
      throw DimensionError("svg: panel shape does not match weight count");
    width += p.cols * kCell + kPanelGap;
    height = std::max(height, kMarginTop + p.rows * kCell + kMarginBottom);
  }
  width -= kPanelGap;
  width += 10;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("svg: cannot open for writing: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << ' '
      << height << "\">\n";
  out << "<rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";

  int x0 = kMarginLeft;
  for (const auto& p : panels) {
    double max_w = 0.0;
    for (double w : p.weights) max_w = std::max(max_w, std::abs(w));
    if (max_w <= 0.0) max_w = 1.0;

    out << "<text x=\"" << x0 << "\" y=\"" << kMarginTop - 14
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << p.title
        << "</text>\n";
    for (int r = 0; r < p.rows; ++r)
      for (int c = 0; c < p.cols; ++c) {
        const double w =
            std::abs(p.weights[static_cast<std::size_t>(r) * p.cols + c]) / max_w;
        const int shade = static_cast<int>(std::lround(255.0 * (1.0 - w)));
        out << "<rect x=\"" << x0 + c * kCell << "\" y=\""
            << kMarginTop + r * kCell << "\" width=\"" << kCell
            << "\" height=\"" << kCell << "\" fill=\"rgb(" << shade << ','
            << shade << ',' << shade << ")\"/>\n";
      }
    out << "<rect x=\"" << x0 << "\" y=\"" << kMarginTop << "\" width=\""
        << p.cols * kCell << "\" height=\"" << p.rows * kCell
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    out << "<text x=\"" << x0 + p.cols * kCell / 2 << "\" y=\""
        << kMarginTop + p.rows * kCell + 24
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << x_label << "</text>\n";
    out << "<text x=\"" << x0 - 12 << "\" y=\""
        << kMarginTop + p.rows * kCell / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\" transform=\"rotate(-90 "
        << x0 - 12 << ' ' << kMarginTop + p.rows * kCell / 2 << ")\">" << y_label
        << "</text>\n";
    x0 += p.cols * kCell + kPanelGap;
  }
  out << "</svg>\n";
  if (!out) throw ConfigError("svg: write failed: " + path);
}

void write_matrix_text(const std::string& path, int rows, int cols,
                       const std::vector<double>& values) {
  if (static_cast<long long>(rows) * cols !=
      static_cast<long long>(values.size()))
    throw DimensionError("matrix text: shape does not match value count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("matrix text: cannot open for writing: " + path);
  out << rows << ' ' << cols << '\n';
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c) out << ' ';
      out << fmt(values[static_cast<std::size_t>(r) * cols + c]);
    }
    out << '\n';
  }
}

std::tuple<int, int, std::vector<double>> read_matrix_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("matrix text: cannot open: " + path);
  int rows = 0, cols = 0;
  in >> rows >> cols;
  if (!in || rows < 1 || cols < 1)
    throw DimensionError("matrix text: bad header");
  std::vector<double> values(static_cast<std::size_t>(rows) *
                             static_cast<std::size_t>(cols));
  for (auto& v : values) {
    in >> v;
    if (!in) throw DimensionError("matrix text: truncated values");
  }
  return {rows, cols, std::move(values)};
}

}  // namespace imvalign
