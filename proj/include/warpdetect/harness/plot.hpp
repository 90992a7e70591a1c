#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "warpdetect/tensor.hpp"

namespace wd::harness {

using Color = std::array<double, 3>;

struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
};

/// RGB raster with integer pixel coordinates (x right, y down).
class Canvas {
 public:
  Canvas(int width, int height, Color background = {1, 1, 1});
  int width() const { return width_; }
  int height() const { return height_; }
  void set(int x, int y, Color c);
  Color get(int x, int y) const;
  void line(double x0, double y0, double x1, double y1, Color c);
  void fill(Rect r, Color c);
  void frame(Rect r, Color c);
  /// 5x7 bitmap glyphs scaled by `scale`; lowercase renders as uppercase and
  /// unsupported characters as blanks.
  void text(int x, int y, const std::string& s, Color c, int scale = 1);
  static int text_width(const std::string& s, int scale = 1);
  const Tensor& pixels() const { return pixels_; }  // [3,H,W]
  void save(const std::filesystem::path& path) const;

 private:
  int width_, height_;
  Tensor pixels_;
};

struct Series {
  std::string label;
  std::vector<double> x;  // empty: 1, 2, 3, ...
  std::vector<double> y;
};

/// Axes with tick labels and a legend; colors follow series order.
Canvas line_chart(const std::string& title, const std::string& x_label,
                  const std::vector<Series>& series, bool unit_range = false);

/// Layout shared by the renderer and anything reading cells back.
struct HeatmapLayout {
  int cell = 56;
  int left = 110, top = 40;
  Rect cell_rect(std::size_t row, std::size_t col) const;
  int width(std::size_t n) const { return left + static_cast<int>(n) * cell + 20; }
  int height(std::size_t n) const { return top + static_cast<int>(n) * cell + 44; }
};

/// Rows are ground truth, columns predictions; each cell shows its count.
Canvas confusion_heatmap(const std::vector<std::vector<std::size_t>>& counts,
                         const std::vector<std::string>& labels, const HeatmapLayout& layout = {});

}  // namespace wd::harness
