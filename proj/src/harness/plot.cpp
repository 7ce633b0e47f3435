#include "aop/harness/plot.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "aop/core/errors.hpp"

namespace aop {

namespace {

// 3x5 glyphs, one row per 3-bit mask, top row first.
struct Glyph {
  char c;
  std::uint8_t rows[5];
};

constexpr Glyph kFont[] = {
    {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}}, {'3', {7, 1, 7, 1, 7}},
    {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}}, {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 1, 1}},
    {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 7}}, {'A', {2, 5, 7, 5, 5}}, {'B', {6, 5, 6, 5, 6}},
    {'C', {7, 4, 4, 4, 7}}, {'D', {6, 5, 5, 5, 6}}, {'E', {7, 4, 6, 4, 7}}, {'F', {7, 4, 6, 4, 4}},
    {'G', {7, 4, 5, 5, 7}}, {'H', {5, 5, 7, 5, 5}}, {'I', {7, 2, 2, 2, 7}}, {'J', {1, 1, 1, 5, 7}},
    {'K', {5, 5, 6, 5, 5}}, {'L', {4, 4, 4, 4, 7}}, {'M', {5, 7, 7, 5, 5}}, {'N', {6, 5, 5, 5, 5}},
    {'O', {7, 5, 5, 5, 7}}, {'P', {7, 5, 7, 4, 4}}, {'Q', {7, 5, 5, 7, 1}}, {'R', {7, 5, 6, 5, 5}},
    {'S', {7, 4, 7, 1, 7}}, {'T', {7, 2, 2, 2, 2}}, {'U', {5, 5, 5, 5, 7}}, {'V', {5, 5, 5, 5, 2}},
    {'W', {5, 5, 7, 7, 5}}, {'X', {5, 5, 2, 5, 5}}, {'Y', {5, 5, 2, 2, 2}}, {'Z', {7, 1, 2, 4, 7}},
    {'.', {0, 0, 0, 0, 2}}, {'-', {0, 0, 7, 0, 0}}, {':', {0, 2, 0, 2, 0}}, {'/', {1, 1, 2, 4, 4}},
    {'(', {1, 2, 2, 2, 1}}, {')', {4, 2, 2, 2, 4}}, {'%', {5, 1, 2, 4, 5}}, {'_', {0, 0, 0, 0, 7}},
};

const Glyph* glyph(char c) {
  const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : kFont) {
    if (g.c == u) return &g;
  }
  return nullptr;
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void chunk(std::ofstream& out, const char* type, const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> buf;
  put_u32_be(buf, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_at = buf.size();
  buf.insert(buf.end(), type, type + 4);
  buf.insert(buf.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, buf.data() + type_at, static_cast<uInt>(buf.size() - type_at));
  put_u32_be(buf, static_cast<std::uint32_t>(crc));
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

const Rgb kAxis{40, 40, 40};
const Rgb kGrid{225, 225, 225};

struct Frame {
  int left = 60, right = 20, top = 40, bottom = 40;
};

}  // namespace

Canvas::Canvas(int width, int height, Rgb background) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw InputError("canvas dimensions must be positive");
  rgb_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < rgb_.size(); i += 3) std::copy(background.begin(), background.end(), rgb_.begin() + static_cast<long>(i));
}

Rgb Canvas::pixel(int x, int y) const {
  const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  return {rgb_[i], rgb_[i + 1], rgb_[i + 2]};
}

void Canvas::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  rgb_[i] = c[0];
  rgb_[i + 1] = c[1];
  rgb_[i + 2] = c[2];
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) set(x, y, c);
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb c, int thickness) {
  // Bresenham with a square brush.
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  const int r = thickness / 2;
  while (true) {
    fill_rect(x0 - r, y0 - r, x0 + thickness - 1 - r, y0 + thickness - 1 - r, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) { err += dy; x0 += sx; }
    if (e2 <= dx) { err += dx; y0 += sy; }
  }
}

void Canvas::text(int x, int y, const std::string& s, Rgb c, int scale) {
  for (char ch : s) {
    if (const Glyph* g = glyph(ch)) {
      for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col)
          if (g->rows[row] & (4 >> col)) fill_rect(x + col * scale, y + row * scale, x + (col + 1) * scale - 1, y + (row + 1) * scale - 1, c);
    }
    x += 4 * scale;
  }
}

void Canvas::save_png(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height_) * (static_cast<std::size_t>(width_) * 3 + 1));
  for (int y = 0; y < height_; ++y) {
    raw.push_back(0);  // filter: none
    const auto row = rgb_.begin() + static_cast<long>(y) * width_ * 3;
    raw.insert(raw.end(), row, row + width_ * 3);
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw IoError("png compression failed for " + path.string());
  }
  packed.resize(packed_size);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  static const std::uint8_t signature[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.write(reinterpret_cast<const char*>(signature), sizeof signature);
  std::vector<std::uint8_t> header;
  put_u32_be(header, static_cast<std::uint32_t>(width_));
  put_u32_be(header, static_cast<std::uint32_t>(height_));
  header.insert(header.end(), {8, 2, 0, 0, 0});  // 8-bit RGB
  chunk(out, "IHDR", header);
  chunk(out, "IDAT", packed);
  chunk(out, "IEND", {});
  if (!out) throw IoError("failed writing " + path.string());
}

void plot_lines(const std::filesystem::path& path, const std::string& title, const std::vector<Series>& series,
                double y_min, double y_max) {
  if (series.empty()) throw InputError("plot_lines: no series");
  if (!(y_max > y_min)) throw InputError("plot_lines: empty y range");
  std::size_t n = 0;
  for (const auto& s : series) n = std::max(n, s.values.size());
  if (n == 0) throw InputError("plot_lines: series are empty");

  Canvas canvas(640, 400);
  const Frame f;
  const int x0 = f.left, x1 = canvas.width() - f.right, y0 = f.top, y1 = canvas.height() - f.bottom;
  auto px = [&](std::size_t i) {
    return n == 1 ? (x0 + x1) / 2 : x0 + static_cast<int>(std::lround(double(i) * (x1 - x0) / double(n - 1)));
  };
  auto py = [&](double v) {
    const double t = std::clamp((v - y_min) / (y_max - y_min), 0.0, 1.0);
    return y1 - static_cast<int>(std::lround(t * (y1 - y0)));
  };
  for (int k = 0; k <= 4; ++k) {
    const double v = y_min + (y_max - y_min) * k / 4.0;
    canvas.line(x0, py(v), x1, py(v), kGrid);
    char label[16];
    std::snprintf(label, sizeof label, "%.2f", v);
    canvas.text(8, py(v) - 5, label, kAxis);
  }
  for (std::size_t i = 0; i < n; ++i) canvas.text(px(i) - 3, y1 + 10, std::to_string(i + 1), kAxis);
  canvas.line(x0, y0, x0, y1, kAxis, 2);
  canvas.line(x0, y1, x1, y1, kAxis, 2);
  canvas.text(x0, 12, title, kAxis);

  int legend_x = x1 - 150;
  int legend_y = y0 + 6;
  for (const auto& s : series) {
    for (std::size_t i = 0; i + 1 < s.values.size(); ++i) {
      canvas.line(px(i), py(s.values[i]), px(i + 1), py(s.values[i + 1]), s.color, 3);
    }
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      canvas.fill_rect(px(i) - 3, py(s.values[i]) - 3, px(i) + 3, py(s.values[i]) + 3, s.color);
    }
    canvas.fill_rect(legend_x, legend_y, legend_x + 12, legend_y + 9, s.color);
    canvas.text(legend_x + 18, legend_y, s.name, kAxis);
    legend_y += 16;
  }
  canvas.save_png(path);
}

void plot_bars(const std::filesystem::path& path, const std::string& title, const std::vector<Series>& series) {
  if (series.empty() || series.front().values.empty()) throw InputError("plot_bars: no data");
  const std::size_t n = series.front().values.size();
  double top = 0;
  for (const auto& s : series) {
    if (s.values.size() != n) throw InputError("plot_bars: series lengths differ");
    for (double v : s.values) top = std::max(top, v);
  }
  if (top <= 0) top = 1;

  Canvas canvas(std::max(640, static_cast<int>(n) * 12 * static_cast<int>(series.size()) + 100), 400);
  const Frame f;
  const int x0 = f.left, x1 = canvas.width() - f.right, y0 = f.top, y1 = canvas.height() - f.bottom;
  const double group = double(x1 - x0) / double(n);
  const double bar = group * 0.8 / double(series.size());
  for (int k = 0; k <= 4; ++k) {
    const int y = y1 - (y1 - y0) * k / 4;
    canvas.line(x0, y, x1, y, kGrid);
    char label[16];
    std::snprintf(label, sizeof label, "%.0f", top * k / 4.0);
    canvas.text(8, y - 5, label, kAxis);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < series.size(); ++s) {
      const int bx = x0 + static_cast<int>(group * double(i) + group * 0.1 + bar * double(s));
      const int h = static_cast<int>(std::lround(series[s].values[i] / top * (y1 - y0)));
      if (h > 0) canvas.fill_rect(bx, y1 - h, bx + std::max(1, static_cast<int>(bar) - 1), y1, series[s].color);
    }
    if (n <= 40) canvas.text(x0 + static_cast<int>(group * (double(i) + 0.3)), y1 + 10, std::to_string(i), kAxis, 1);
  }
  canvas.line(x0, y0, x0, y1, kAxis, 2);
  canvas.line(x0, y1, x1, y1, kAxis, 2);
  canvas.text(x0, 12, title, kAxis);
  int legend_x = x1 - 150;
  int legend_y = y0 + 6;
  for (const auto& s : series) {
    canvas.fill_rect(legend_x, legend_y, legend_x + 12, legend_y + 9, s.color);
    canvas.text(legend_x + 18, legend_y, s.name, kAxis);
    legend_y += 16;
  }
  canvas.save_png(path);
}

}  // namespace aop
