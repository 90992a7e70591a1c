#include "warpdetect/harness/plot.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>

#include "warpdetect/errors.hpp"
#include "warpdetect/harness/image_io.hpp"

namespace wd::harness {

namespace {

// 5x7 glyphs, one byte per row, bit 4 is the leftmost column.
const std::map<char, std::array<std::uint8_t, 7>>& font() {
  static const std::map<char, std::array<std::uint8_t, 7>> glyphs = {
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
    {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
    {'B', {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e}},
    {'C', {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e}},
    {'D', {0x1c, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1c}},
    {'E', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f}},
    {'F', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10}},
    {'G', {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f}},
    {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
    {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
    {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
    {'P', {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10}},
    {'Q', {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d}},
    {'R', {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11}},
    {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}},
    {'T', {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0a}},
    {'X', {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x0a, 0x04, 0x04, 0x04, 0x04}},
    {'Z', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
    {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f}},
    {':', {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00}},
    {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
    {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
    {'+', {0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
    {'=', {0x00, 0x00, 0x1f, 0x00, 0x1f, 0x00, 0x00}},
    {',', {0x00, 0x00, 0x00, 0x00, 0x0c, 0x04, 0x08}},
  };
  return glyphs;
}

constexpr int kGlyphW = 5, kGlyphH = 7, kAdvance = 6;

const std::array<Color, 6> kPalette = {Color{0.12, 0.47, 0.71}, Color{0.84, 0.15, 0.16},
                                       Color{0.17, 0.63, 0.17}, Color{1.00, 0.50, 0.05},
                                       Color{0.58, 0.40, 0.74}, Color{0.55, 0.34, 0.29}};

std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, std::fabs(v) >= 100 ? "%.0f" : std::fabs(v) >= 10 ? "%.1f" : "%.2f", v);
  return buf;
}

}  // namespace

Canvas::Canvas(int width, int height, Color background)
    : width_(width), height_(height) {
  if (width < 1 || height < 1) throw ConfigError("canvas size must be positive");
  pixels_ = Tensor({3, static_cast<std::size_t>(height), static_cast<std::size_t>(width)});
  fill({0, 0, width, height}, background);
}

void Canvas::set(int x, int y, Color c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  const auto hw = static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  const auto at = static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  for (std::size_t k = 0; k < 3; ++k) pixels_[k * hw + at] = c[k];
}

Color Canvas::get(int x, int y) const {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) throw DimensionError("pixel out of range");
  const auto hw = static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  const auto at = static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  return {pixels_[at], pixels_[hw + at], pixels_[2 * hw + at]};
}

void Canvas::line(double x0, double y0, double x1, double y1, Color c) {
  const int steps = static_cast<int>(std::ceil(std::max(std::fabs(x1 - x0), std::fabs(y1 - y0)))) + 1;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    set(static_cast<int>(std::lround(x0 + t * (x1 - x0))), static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
  }
}

void Canvas::fill(Rect r, Color c) {
  for (int y = r.y; y < r.y + r.h; ++y) {
    for (int x = r.x; x < r.x + r.w; ++x) set(x, y, c);
  }
}

void Canvas::frame(Rect r, Color c) {
  line(r.x, r.y, r.x + r.w - 1, r.y, c);
  line(r.x, r.y + r.h - 1, r.x + r.w - 1, r.y + r.h - 1, c);
  line(r.x, r.y, r.x, r.y + r.h - 1, c);
  line(r.x + r.w - 1, r.y, r.x + r.w - 1, r.y + r.h - 1, c);
}

void Canvas::text(int x, int y, const std::string& s, Color c, int scale) {
  for (std::size_t k = 0; k < s.size(); ++k) {
    const char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(s[k])));
    const auto it = font().find(ch);
    if (it == font().end()) continue;
    const int gx = x + static_cast<int>(k) * kAdvance * scale;
    for (int row = 0; row < kGlyphH; ++row) {
      for (int col = 0; col < kGlyphW; ++col) {
        if (!(it->second[static_cast<std::size_t>(row)] >> (kGlyphW - 1 - col) & 1)) continue;
        fill({gx + col * scale, y + row * scale, scale, scale}, c);
      }
    }
  }
}

int Canvas::text_width(const std::string& s, int scale) {
  return s.empty() ? 0 : (static_cast<int>(s.size()) * kAdvance - 1) * scale;
}

void Canvas::save(const std::filesystem::path& path) const { write_png(path, pixels_); }

Canvas line_chart(const std::string& title, const std::string& x_label,
                  const std::vector<Series>& series, bool unit_range) {
  if (series.empty()) throw ConfigError("line_chart: no series");
  const int w = 560, h = 380;
  const Rect plot{70, 40, 460, 270};
  Canvas cv(w, h);
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    if (!s.x.empty() && s.x.size() != s.y.size()) throw DimensionError("series x/y length mismatch");
    for (std::size_t k = 0; k < s.y.size(); ++k) {
      const double x = s.x.empty() ? static_cast<double>(k + 1) : s.x[k];
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, s.y[k]);
      ymax = std::max(ymax, s.y[k]);
    }
  }
  if (xmin > xmax) throw ConfigError("line_chart: series are empty");
  if (unit_range) {
    ymin = 0.0;
    ymax = 1.0;
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const auto px = [&](double x) { return plot.x + (x - xmin) / (xmax - xmin) * (plot.w - 1); };
  const auto py = [&](double y) { return plot.y + plot.h - 1 - (y - ymin) / (ymax - ymin) * (plot.h - 1); };

  const Color ink{0, 0, 0}, grid{0.88, 0.88, 0.88};
  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 4.0;
    cv.line(plot.x, py(yv), plot.x + plot.w - 1, py(yv), grid);
    const std::string label = format_tick(yv);
    cv.text(plot.x - 6 - Canvas::text_width(label), static_cast<int>(py(yv)) - 3, label, ink);
    const double xv = xmin + (xmax - xmin) * k / 4.0;
    const std::string xl = format_tick(xv);
    cv.text(static_cast<int>(px(xv)) - Canvas::text_width(xl) / 2, plot.y + plot.h + 6, xl, ink);
  }
  cv.frame(plot, ink);
  cv.text((w - Canvas::text_width(title, 2)) / 2, 10, title, ink, 2);
  cv.text(plot.x + (plot.w - Canvas::text_width(x_label)) / 2, plot.y + plot.h + 22, x_label, ink);

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const Color c = kPalette[si % kPalette.size()];
    for (std::size_t k = 0; k + 1 < s.y.size(); ++k) {
      const double x0 = s.x.empty() ? static_cast<double>(k + 1) : s.x[k];
      const double x1 = s.x.empty() ? static_cast<double>(k + 2) : s.x[k + 1];
      cv.line(px(x0), py(s.y[k]), px(x1), py(s.y[k + 1]), c);
      cv.line(px(x0), py(s.y[k]) + 1, px(x1), py(s.y[k + 1]) + 1, c);
    }
    if (s.y.size() == 1) cv.fill({static_cast<int>(px(xmin)) - 2, static_cast<int>(py(s.y[0])) - 2, 5, 5}, c);
    const int ly = h - 34 + static_cast<int>(si / 3) * 12;
    const int lx = 20 + static_cast<int>(si % 3) * 180;
    cv.fill({lx, ly + 2, 14, 3}, c);
    cv.text(lx + 20, ly, s.label, ink);
  }
  return cv;
}

Rect HeatmapLayout::cell_rect(std::size_t row, std::size_t col) const {
  return {left + static_cast<int>(col) * cell, top + static_cast<int>(row) * cell, cell, cell};
}

Canvas confusion_heatmap(const std::vector<std::vector<std::size_t>>& counts,
                         const std::vector<std::string>& labels, const HeatmapLayout& layout) {
  const std::size_t n = counts.size();
  if (n == 0 || labels.size() != n) throw DimensionError("confusion_heatmap: label count mismatch");
  std::size_t peak = 0;
  for (const auto& row : counts) {
    if (row.size() != n) throw DimensionError("confusion_heatmap: matrix must be square");
    for (auto v : row) peak = std::max(peak, v);
  }
  Canvas cv(layout.width(n), layout.height(n));
  const Color ink{0, 0, 0};
  cv.text(layout.left, 12, "PREDICTED", ink);
  cv.text(4, 12, "TRUE", ink);
  for (std::size_t r = 0; r < n; ++r) {
    const Rect left = layout.cell_rect(r, 0);
    cv.text(4, left.y + left.h / 2 - 3, labels[r], ink);
    const Rect bottom = layout.cell_rect(n - 1, r);
    // Alternate rows so neighbouring column labels never touch.
    cv.text(bottom.x + 2, bottom.y + bottom.h + 6 + static_cast<int>(r % 2) * 12, labels[r].substr(0, 8), ink);
    for (std::size_t c = 0; c < n; ++c) {
      const Rect cell = layout.cell_rect(r, c);
      const double f = peak > 0 ? static_cast<double>(counts[r][c]) / static_cast<double>(peak) : 0.0;
      const Color shade{1.0 - 0.8 * f, 1.0 - 0.55 * f, 1.0 - 0.2 * f};
      cv.fill(cell, shade);
      cv.frame(cell, {0.5, 0.5, 0.5});
      const std::string s = std::to_string(counts[r][c]);
      const Color txt = f > 0.55 ? Color{1, 1, 1} : ink;
      cv.text(cell.x + (cell.w - Canvas::text_width(s, 2)) / 2, cell.y + (cell.h - 14) / 2, s, txt, 2);
    }
  }
  return cv;
}

}  // namespace wd::harness
