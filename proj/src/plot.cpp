#include "onadesep/plot.h"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>

#include "onadesep/errors.h"
#include "onadesep/text.h"

namespace onadesep {
namespace {

// 5x7 glyphs, one string per row, '#' = ink.
const std::map<char, std::array<const char*, 7>>& font() {
  static const std::map<char, std::array<const char*, 7>> f = {
      {'0', {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."}},
      {'1', {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."}},
      {'2', {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"}},
      {'3', {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."}},
      {'4', {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."}},
      {'5', {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."}},
      {'6', {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."}},
      {'7', {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."}},
      {'8', {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."}},
      {'9', {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."}},
      {'A', {".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
      {'B', {"####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."}},
      {'C', {".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."}},
      {'D', {"###..", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."}},
      {'E', {"#####", "#....", "#....", "####.", "#....", "#....", "#####"}},
      {'F', {"#####", "#....", "#....", "####.", "#....", "#....", "#...."}},
      {'G', {".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"}},
      {'H', {"#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
      {'I', {".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."}},
      {'J', {"..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."}},
      {'K', {"#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"}},
      {'L', {"#....", "#....", "#....", "#....", "#....", "#....", "#####"}},
      {'M', {"#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"}},
      {'N', {"#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"}},
      {'O', {".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
      {'P', {"####.", "#...#", "#...#", "####.", "#....", "#....", "#...."}},
      {'Q', {".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"}},
      {'R', {"####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"}},
      {'S', {".####", "#....", "#....", ".###.", "....#", "....#", "####."}},
      {'T', {"#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."}},
      {'U', {"#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
      {'V', {"#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."}},
      {'W', {"#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."}},
      {'X', {"#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"}},
      {'Y', {"#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."}},
      {'Z', {"#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"}},
      {'.', {".....", ".....", ".....", ".....", ".....", ".##..", ".##.."}},
      {'-', {".....", ".....", ".....", "#####", ".....", ".....", "....."}},
      {'+', {".....", "..#..", "..#..", "#####", "..#..", "..#..", "....."}},
      {'=', {".....", ".....", "#####", ".....", "#####", ".....", "....."}},
      {'_', {".....", ".....", ".....", ".....", ".....", ".....", "#####"}},
      {'(', {"...#.", "..#..", ".#...", ".#...", ".#...", "..#..", "...#."}},
      {')', {".#...", "..#..", "...#.", "...#.", "...#.", "..#..", ".#..."}},
      {':', {".....", ".##..", ".##..", ".....", ".##..", ".##..", "....."}},
      {'/', {".....", "....#", "...#.", "..#..", ".#...", "#....", "....."}},
      {'%', {"##...", "##..#", "...#.", "..#..", ".#...", "#..##", "...##"}},
  };
  return f;
}

}  // namespace

Canvas::Canvas(int width, int height, Rgb background)
    : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height * 3) {
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = background.r;
    pixels_[i + 1] = background.g;
    pixels_[i + 2] = background.b;
  }
}

void Canvas::blend(int x, int y, Rgb c, double alpha) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  auto* p = &pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3];
  auto mixc = [alpha](std::uint8_t dst, std::uint8_t src) {
    return static_cast<std::uint8_t>(std::lround(dst * (1.0 - alpha) + src * alpha));
  };
  p[0] = mixc(p[0], c.r);
  p[1] = mixc(p[1], c.g);
  p[2] = mixc(p[2], c.b);
}

void Canvas::line(double x0, double y0, double x1, double y1, Rgb c, int thickness, int dash) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int n = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
  const int half = thickness / 2;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    if (dash > 0 && static_cast<int>(t * len / dash) % 2 == 1) continue;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    for (int dy = -half; dy <= thickness - 1 - half; ++dy) {
      for (int dx = -half; dx <= thickness - 1 - half; ++dx) blend(x + dx, y + dy, c);
    }
  }
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Rgb c, double alpha) {
  for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
    for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) blend(x, y, c, alpha);
  }
}

void Canvas::fill_band(const std::vector<double>& xs, const std::vector<double>& lo,
                       const std::vector<double>& hi, Rgb c, double alpha) {
  for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
    const int xa = static_cast<int>(std::lround(xs[k]));
    const int xb = static_cast<int>(std::lround(xs[k + 1]));
    for (int x = xa; x < xb || (k + 2 == xs.size() && x == xb); ++x) {
      const double t = xb == xa ? 0.0 : static_cast<double>(x - xa) / (xb - xa);
      const double ylo = lo[k] + t * (lo[k + 1] - lo[k]);
      const double yhi = hi[k] + t * (hi[k + 1] - hi[k]);
      for (int y = static_cast<int>(std::lround(std::min(ylo, yhi)));
           y <= static_cast<int>(std::lround(std::max(ylo, yhi))); ++y) {
        blend(x, y, c, alpha);
      }
    }
  }
}

void Canvas::text(int x, int y, const std::string& s, Rgb c, int scale) {
  int cx = x;
  for (char ch : s) {
    const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    const auto it = font().find(up);
    if (it != font().end()) {
      for (int row = 0; row < 7; ++row) {
        for (int col = 0; col < 5; ++col) {
          if (it->second[row][col] != '#') continue;
          fill_rect(cx + col * scale, y + row * scale, cx + (col + 1) * scale - 1,
                    y + (row + 1) * scale - 1, c);
        }
      }
    }
    cx += 6 * scale;
  }
}

int Canvas::text_width(const std::string& s, int scale) {
  return s.empty() ? 0 : static_cast<int>(s.size()) * 6 * scale - scale;
}

void Canvas::write_png(const std::filesystem::path& path) const {
  std::unique_ptr<FILE, decltype(&std::fclose)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width_, height_, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height_; ++y) {
    png_write_row(png, const_cast<png_bytep>(&pixels_[static_cast<std::size_t>(y) * width_ * 3]));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void plot_sweep(const SweepCurve& curve, const std::filesystem::path& path) {
  if (curve.steps.empty()) throw DataError("sweep curve for '" + curve.title + "' is empty");
  constexpr int kW = 640, kH = 420;
  constexpr int kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
  const Rgb ink{40, 40, 40}, grid{225, 225, 225}, series{31, 119, 180}, base{214, 39, 40};

  double ymin = *std::min_element(curve.ci_low.begin(), curve.ci_low.end());
  double ymax = *std::max_element(curve.ci_high.begin(), curve.ci_high.end());
  if (curve.baseline) {
    ymin = std::min(ymin, *curve.baseline);
    ymax = std::max(ymax, *curve.baseline);
  }
  const double pad = std::max(0.5, 0.1 * (ymax - ymin));
  ymin = std::floor(ymin - pad);
  ymax = std::ceil(ymax + pad);

  const double xlo = std::log2(static_cast<double>(curve.steps.front()));
  const double xhi = std::log2(static_cast<double>(curve.steps.back()));
  const double xspan = xhi > xlo ? xhi - xlo : 1.0;
  auto px = [&](int steps) {
    const double u = (std::log2(static_cast<double>(steps)) - xlo) / xspan;
    return kLeft + 10 + u * (kW - kLeft - kRight - 20);
  };
  auto py = [&](double v) { return kTop + (ymax - v) / (ymax - ymin) * (kH - kTop - kBottom); };

  Canvas c(kW, kH);
  const double ystep = std::max(1.0, std::ceil((ymax - ymin) / 8.0));
  for (double v = ymin; v <= ymax + 1e-9; v += ystep) {
    c.line(kLeft, py(v), kW - kRight, py(v), grid);
    const std::string label = format_fixed(v, 1);
    c.text(kLeft - 8 - Canvas::text_width(label), static_cast<int>(py(v)) - 3, label, ink);
  }
  for (int s : curve.steps) {
    c.line(px(s), kTop, px(s), kH - kBottom, grid);
    const std::string label = std::to_string(s);
    c.text(static_cast<int>(px(s)) - Canvas::text_width(label) / 2, kH - kBottom + 8, label,
           ink);
  }
  c.line(kLeft, kTop, kLeft, kH - kBottom, ink);
  c.line(kLeft, kH - kBottom, kW - kRight, kH - kBottom, ink);

  std::vector<double> xs, lo, hi;
  for (std::size_t k = 0; k < curve.steps.size(); ++k) {
    xs.push_back(px(curve.steps[k]));
    lo.push_back(py(curve.ci_low[k]));
    hi.push_back(py(curve.ci_high[k]));
  }
  c.fill_band(xs, lo, hi, series, 0.2);
  if (curve.baseline) {
    c.line(kLeft, py(*curve.baseline), kW - kRight, py(*curve.baseline), base, 2, 2);
  }
  for (std::size_t k = 0; k + 1 < curve.steps.size(); ++k) {
    c.line(xs[k], py(curve.mean[k]), xs[k + 1], py(curve.mean[k + 1]), series, 2);
  }
  for (std::size_t k = 0; k < curve.steps.size(); ++k) {
    const int x = static_cast<int>(std::lround(xs[k]));
    const int y = static_cast<int>(std::lround(py(curve.mean[k])));
    c.fill_rect(x - 3, y - 3, x + 3, y + 3, series);
  }

  c.text(kLeft, 12, curve.title + " SI-SDRI (DB)", ink, 2);
  const std::string xlabel = "GIBBS STEPS (LOG SCALE)";
  c.text((kW - Canvas::text_width(xlabel)) / 2, kH - 24, xlabel, ink);
  if (curve.baseline) {
    c.line(kW - 170, 20, kW - 140, 20, base, 2, 2);
    c.text(kW - 132, 17, "BASELINE", ink);
  }
  c.write_png(path);
}

}  // namespace onadesep
