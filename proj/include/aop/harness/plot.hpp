#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace aop {

using Rgb = std::array<std::uint8_t, 3>;

/// RGB raster with a few drawing primitives and a PNG writer.
class Canvas {
 public:
  Canvas(int width, int height, Rgb background = {255, 255, 255});

  int width() const { return width_; }
  int height() const { return height_; }
  Rgb pixel(int x, int y) const;

  void set(int x, int y, Rgb c);
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
  void line(int x0, int y0, int x1, int y1, Rgb c, int thickness = 1);
  /// Upper-case letters, digits and a little punctuation in a 3x5 font.
  void text(int x, int y, const std::string& s, Rgb c, int scale = 2);

  void save_png(const std::filesystem::path& path) const;

 private:
  int width_, height_;
  std::vector<std::uint8_t> rgb_;
};

struct Series {
  std::string name;
  std::vector<double> values;
  Rgb color;
};

/// Line chart over x = 1..n with y in [y_min, y_max].
void plot_lines(const std::filesystem::path& path, const std::string& title, const std::vector<Series>& series,
                double y_min = 0.0, double y_max = 1.0);

/// Grouped bar chart; every series must have the same length.
void plot_bars(const std::filesystem::path& path, const std::string& title, const std::vector<Series>& series);

}  // namespace aop
