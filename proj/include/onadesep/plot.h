#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace onadesep {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

// Minimal raster canvas for report figures, written as 8-bit RGB PNG.
class Canvas {
 public:
  Canvas(int width, int height, Rgb background = {255, 255, 255});

  int width() const { return width_; }
  int height() const { return height_; }

  void blend(int x, int y, Rgb c, double alpha = 1.0);
  void line(double x0, double y0, double x1, double y1, Rgb c, int thickness = 1,
            int dash = 0);
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c, double alpha = 1.0);
  // Fills the region between two polylines sharing x coordinates.
  void fill_band(const std::vector<double>& xs, const std::vector<double>& lo,
                 const std::vector<double>& hi, Rgb c, double alpha);
  // 5x7 bitmap text; lowercase is drawn as uppercase.
  void text(int x, int y, const std::string& s, Rgb c, int scale = 1);
  static int text_width(const std::string& s, int scale = 1);

  void write_png(const std::filesystem::path& path) const;

 private:
  int width_, height_;
  std::vector<std::uint8_t> pixels_;
};

struct SweepCurve {
  std::string title;
  std::vector<int> steps;
  std::vector<double> mean;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  std::optional<double> baseline;
};

// Mean SI-SDRi against Gibbs steps on a log-scaled x axis, CI band shaded,
// baseline as a dotted horizontal line, x ticks at the step values.
void plot_sweep(const SweepCurve& curve, const std::filesystem::path& path);

}  // namespace onadesep
