#include "pipeline/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace daufi::pipeline {

using img::ImageU8;

ImageU8 compose_triptych(const ImageU8& image, const ImageU8& gt_rgb,
                         const ImageU8& pred_rgb) {
  const int h = image.h, w = image.w, sep = 2;
  ImageU8 out(h, 3 * w + 2 * sep, 3, 255);
  auto blit = [&](const ImageU8& src, int x0) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          out.at(y, x0 + x, c) =
              src.channels == 3 ? src.at(y, x, c) : src.at(y, x, 0);
  };
  blit(image, 0);
  blit(gt_rgb, w + sep);
  blit(pred_rgb, 2 * (w + sep));
  return out;
}

namespace {

const std::uint8_t kPalette[8][3] = {
    {31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
    {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127}};

void draw_line(ImageU8& im, int y0, int x0, int y1, int x1,
               const std::uint8_t* color) {
  const int steps = std::max({std::abs(y1 - y0), std::abs(x1 - x0), 1});
  for (int s = 0; s <= steps; ++s) {
    const int y = y0 + (y1 - y0) * s / steps;
    const int x = x0 + (x1 - x0) * s / steps;
    if (y < 0 || y >= im.h || x < 0 || x >= im.w) continue;
    for (int c = 0; c < 3; ++c) im.at(y, x, c) = color[c];
  }
}

}  // namespace

void render_curve_sheet(const std::string& png_path,
                        const std::vector<Curve>& curves) {
  const int W = 640, H = 420, ml = 40, mr = 16, mt = 16, mb = 28;
  ImageU8 im(H, W, 3, 255);

  double lo = 0.0, hi = 1.0;
  std::size_t max_len = 2;
  bool first = true;
  for (const Curve& c : curves)
    for (double v : c.values) {
      if (!std::isfinite(v)) continue;
      if (first) {
        lo = hi = v;
        first = false;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  for (const Curve& c : curves) max_len = std::max(max_len, c.values.size());
  if (hi - lo < 1e-12) hi = lo + 1.0;

  const std::uint8_t axis[3] = {60, 60, 60};
  draw_line(im, H - mb, ml, H - mb, W - mr, axis);
  draw_line(im, mt, ml, H - mb, ml, axis);

  auto px = [&](std::size_t i) {
    return ml + static_cast<int>((W - ml - mr - 1) *
                                 (max_len > 1
                                      ? static_cast<double>(i) / (max_len - 1)
                                      : 0.0));
  };
  auto py = [&](double v) {
    return mt + static_cast<int>((H - mt - mb - 1) * (1.0 - (v - lo) / (hi - lo)));
  };

  for (std::size_t k = 0; k < curves.size(); ++k) {
    const std::uint8_t* col = kPalette[k % 8];
    const auto& v = curves[k].values;
    for (std::size_t i = 1; i < v.size(); ++i)
      if (std::isfinite(v[i - 1]) && std::isfinite(v[i]))
        draw_line(im, py(v[i - 1]), px(i - 1), py(v[i]), px(i), col);
    // Legend swatch in the top-right corner.
    for (int dy = 0; dy < 8; ++dy)
      for (int dx = 0; dx < 8; ++dx)
        for (int c = 0; c < 3; ++c)
          im.at(mt + 12 * static_cast<int>(k) + dy, W - mr - 10 + dx, c) =
              col[c];
  }
  img::write_image(png_path, im);

  // Legend + axis ranges in a sidecar so the sheet stays text-free.
  std::ofstream side(png_path + ".json");
  side << "{\n  \"y_min\": " << lo << ",\n  \"y_max\": " << hi
       << ",\n  \"x_max\": " << max_len << ",\n  \"series\": [";
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const std::uint8_t* col = kPalette[k % 8];
    side << (k ? ", " : "") << "{\"name\": \"" << curves[k].name
         << "\", \"rgb\": [" << int(col[0]) << "," << int(col[1]) << ","
         << int(col[2]) << "]}";
  }
  side << "]\n}\n";
}

}  // namespace daufi::pipeline
