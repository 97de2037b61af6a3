#pragma once

// Minimal raster plotting (line and grouped bar charts) written as PNG.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "studa/core/png_io.hpp"

namespace studa::plot {

struct Color {
  std::uint8_t r, g, b;
};

inline constexpr std::array<Color, 8> kPalette = {{{31, 119, 180},
                                                    {255, 127, 14},
                                                    {44, 160, 44},
                                                    {214, 39, 40},
                                                    {148, 103, 189},
                                                    {140, 86, 75},
                                                    {227, 119, 194},
                                                    {127, 127, 127}}};

namespace detail {

struct Glyph {
  char c;
  std::array<std::uint8_t, 7> rows;
};

// 5x7 bitmap font, upper case only.
inline const std::vector<Glyph>& font() {
  static const std::vector<Glyph> f = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}}, {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
      {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}}, {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
      {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}}, {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}},
      {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}}, {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
  };
  return f;
}

}  // namespace detail

class Canvas {
 public:
  Canvas(int width, int height, Color bg = {255, 255, 255})
      : w_(width), h_(height), px_(static_cast<std::size_t>(width) * height * 3) {
    fill_rect(0, 0, width, height, bg);
  }

  int width() const { return w_; }
  int height() const { return h_; }

  void set(int x, int y, Color c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    auto* p = &px_[(static_cast<std::size_t>(y) * w_ + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  void fill_rect(int x0, int y0, int x1, int y1, Color c) {
    for (int y = std::max(0, y0); y < std::min(h_, y1); ++y)
      for (int x = std::max(0, x0); x < std::min(w_, x1); ++x) set(x, y, c);
  }

  void line(int x0, int y0, int x1, int y1, Color c, int thickness = 1) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0), sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      for (int t = 0; t < thickness; ++t) {
        set(x0, y0 + t, c);
        set(x0 + t, y0, c);
      }
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  // Draws text with its top-left corner at (x, y); returns the advance width.
  int text(int x, int y, const std::string& s, Color c, int scale = 1) {
    int cx = x;
    for (char ch : s) {
      const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      for (const auto& g : detail::font()) {
        if (g.c != u) continue;
        for (int r = 0; r < 7; ++r)
          for (int b = 0; b < 5; ++b)
            if (g.rows[r] & (0x10 >> b)) fill_rect(cx + b * scale, y + r * scale, cx + (b + 1) * scale, y + (r + 1) * scale, c);
      }
      cx += 6 * scale;
    }
    return cx - x;
  }

  void save(const std::filesystem::path& path) const { png::write(path, png::Image8{h_, w_, 3, px_}); }

 private:
  int w_, h_;
  std::vector<std::uint8_t> px_;
};

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, std::abs(v) >= 100 || v == 0 ? "%.0f" : std::abs(v) >= 1 ? "%.2f" : "%.3f", v);
  return buf;
}

struct Series {
  std::string name;
  std::vector<double> x, y;
};

namespace detail {

struct Frame {
  int left = 60, right = 170, top = 30, bottom = 40;
  int x0, x1, y0, y1;  // plot area in pixels
  double lo, hi;       // y range
};

inline Frame draw_frame(Canvas& c, const std::string& title, double lo, double hi) {
  Frame f;
  if (!(hi > lo)) hi = lo + 1;
  f.lo = lo;
  f.hi = hi;
  f.x0 = f.left;
  f.x1 = c.width() - f.right;
  f.y0 = f.top;
  f.y1 = c.height() - f.bottom;
  const Color ink{40, 40, 40}, grid{225, 225, 225};
  c.text(f.left, 10, title, ink);
  for (int i = 0; i <= 4; ++i) {
    const int y = f.y1 - (f.y1 - f.y0) * i / 4;
    c.line(f.x0, y, f.x1, y, grid);
    const auto label = format_number(lo + (hi - lo) * i / 4);
    c.text(f.x0 - 8 - 6 * static_cast<int>(label.size()), y - 3, label, ink);
  }
  c.line(f.x0, f.y0, f.x0, f.y1, ink);
  c.line(f.x0, f.y1, f.x1, f.y1, ink);
  return f;
}

inline int to_py(const Frame& f, double v) {
  return f.y1 - static_cast<int>(std::lround((v - f.lo) / (f.hi - f.lo) * (f.y1 - f.y0)));
}

inline void legend(Canvas& c, const Frame& f, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const int y = f.y0 + 4 + static_cast<int>(i) * 14;
    c.fill_rect(f.x1 + 12, y, f.x1 + 22, y + 7, kPalette[i % kPalette.size()]);
    c.text(f.x1 + 28, y, names[i], {40, 40, 40});
  }
}

}  // namespace detail

inline void line_chart(const std::filesystem::path& path, const std::string& title, const std::vector<Series>& series,
                       const std::string& x_label = "", int width = 720, int height = 360) {
  Canvas c(width, height);
  double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  if (!std::isfinite(xlo)) xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  if (!(xhi > xlo)) xhi = xlo + 1;
  auto f = detail::draw_frame(c, title, ylo, yhi);
  c.text(f.x0, f.y1 + 8, format_number(xlo), {40, 40, 40});
  const auto xr = format_number(xhi);
  c.text(f.x1 - 6 * static_cast<int>(xr.size()), f.y1 + 8, xr, {40, 40, 40});
  if (!x_label.empty()) c.text((f.x0 + f.x1) / 2 - 3 * static_cast<int>(x_label.size()), f.y1 + 22, x_label, {40, 40, 40});
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    names.push_back(s.name);
    const Color col = kPalette[k % kPalette.size()];
    int px = -1, py = -1;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      const int x = f.x0 + static_cast<int>(std::lround((s.x[i] - xlo) / (xhi - xlo) * (f.x1 - f.x0)));
      const int y = detail::to_py(f, s.y[i]);
      if (px >= 0) c.line(px, py, x, y, col);
      px = x;
      py = y;
    }
  }
  detail::legend(c, f, names);
  c.save(path);
}

// values[g][s]: bar of series s in group g.
inline void bar_chart(const std::filesystem::path& path, const std::string& title,
                      const std::vector<std::string>& groups, const std::vector<std::string>& series,
                      const std::vector<std::vector<double>>& values, int width = 720, int height = 360) {
  Canvas c(width, height);
  double hi = 0;
  for (const auto& g : values)
    for (double v : g)
      if (std::isfinite(v)) hi = std::max(hi, v);
  auto f = detail::draw_frame(c, title, 0.0, hi > 0 ? hi : 1.0);
  const int G = static_cast<int>(groups.size()), S = static_cast<int>(series.size());
  if (G > 0 && S > 0) {
    const int gw = (f.x1 - f.x0) / G, bw = std::max(1, (gw - 12) / S);
    for (int g = 0; g < G; ++g) {
      const int gx = f.x0 + g * gw + 6;
      for (int s = 0; s < S; ++s) {
        const double v = values[g][s];
        if (!std::isfinite(v)) continue;
        c.fill_rect(gx + s * bw, detail::to_py(f, v), gx + (s + 1) * bw - 1, f.y1, kPalette[s % kPalette.size()]);
      }
      c.text(gx, f.y1 + 8, groups[g], {40, 40, 40});
    }
  }
  detail::legend(c, f, series);
  c.save(path);
}

}  // namespace studa::plot
