#include "data/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "nn/rng.hpp"

namespace daufi::data {

namespace {

using img::Plane;
using nn::Rng;

struct Rgb {
  double r, g, b;
};

struct Canvas {
  Plane r, g, b;
  IndexMask mask;

  Canvas(int h, int w)
      : r(h, w), g(h, w), b(h, w), mask(h, w, 0) {}
  int h() const { return r.h; }
  int w() const { return r.w; }

  void paint(int y, int x, const Rgb& c, int cls) {
    if (y < 0 || y >= h() || x < 0 || x >= w()) return;
    r.at(y, x) = c.r;
    g.at(y, x) = c.g;
    b.at(y, x) = c.b;
    mask.at(y, x) = cls;
  }
};

// Bilinear value noise on a coarse lattice.
Plane value_noise(int h, int w, int cell, Rng& rng) {
  const int gy = h / cell + 2, gx = w / cell + 2;
  std::vector<double> grid(static_cast<std::size_t>(gy) * gx);
  for (double& v : grid) v = rng.uniform();
  Plane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double fy = static_cast<double>(y) / cell;
      const double fx = static_cast<double>(x) / cell;
      const int iy = static_cast<int>(fy), ix = static_cast<int>(fx);
      const double ty = fy - iy, tx = fx - ix;
      auto g = [&](int yy, int xx) { return grid[yy * gx + xx]; };
      out.at(y, x) = (1 - ty) * ((1 - tx) * g(iy, ix) + tx * g(iy, ix + 1)) +
                     ty * ((1 - tx) * g(iy + 1, ix) + tx * g(iy + 1, ix + 1));
    }
  return out;
}

void draw_disk(Canvas& cv, double cy, double cx, double rad, const Rgb& c,
               int cls) {
  for (int y = std::max(0, int(cy - rad)); y <= std::min(cv.h() - 1, int(cy + rad)); ++y)
    for (int x = std::max(0, int(cx - rad)); x <= std::min(cv.w() - 1, int(cx + rad)); ++x)
      if (std::hypot(y - cy, x - cx) <= rad) cv.paint(y, x, c, cls);
}

void draw_stroke(Canvas& cv, double y0, double x0, double y1, double x1,
                 double thickness, const Rgb& c, int cls) {
  const double len = std::hypot(y1 - y0, x1 - x0);
  const int steps = std::max(1, static_cast<int>(len * 2));
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    draw_disk(cv, y0 + t * (y1 - y0), x0 + t * (x1 - x0), thickness / 2.0, c,
              cls);
  }
}

// Random-walk polyline; jag controls the angular variance.
void paint_polyline(Canvas& cv, Rng& rng, double thickness, double jag,
                    const Rgb& c, int cls) {
  double y = rng.uniform(0.15, 0.85) * cv.h();
  double x = rng.uniform(0.15, 0.85) * cv.w();
  double ang = rng.uniform(0.0, 2.0 * M_PI);
  const int segs = 6 + static_cast<int>(rng.uniform_int(8));
  const double step = cv.h() / 10.0;
  for (int s = 0; s < segs; ++s) {
    const double ny = y + step * std::sin(ang);
    const double nx = x + step * std::cos(ang);
    draw_stroke(cv, y, x, ny, nx, thickness, c, cls);
    y = ny;
    x = nx;
    ang += rng.uniform(-jag, jag);
    if (y < 2 || y > cv.h() - 3 || x < 2 || x > cv.w() - 3) break;
  }
}

void paint_roots(Canvas& cv, Rng& rng, const Rgb& c, int cls) {
  const double y0 = rng.uniform(0.2, 0.8) * cv.h();
  const double x0 = rng.uniform(0.2, 0.8) * cv.w();
  const int branches = 3 + static_cast<int>(rng.uniform_int(3));
  for (int b = 0; b < branches; ++b) {
    double ang = rng.uniform(0.0, 2.0 * M_PI);
    double y = y0, x = x0;
    const int segs = 3 + static_cast<int>(rng.uniform_int(4));
    for (int s = 0; s < segs; ++s) {
      const double step = cv.h() * rng.uniform(0.04, 0.10);
      const double ny = y + step * std::sin(ang);
      const double nx = x + step * std::cos(ang);
      draw_stroke(cv, y, x, ny, nx, 1.6, c, cls);
      y = ny;
      x = nx;
      ang += rng.uniform(-0.9, 0.9);
    }
  }
}

void paint_ellipse(Canvas& cv, Rng& rng, bool filled, double thickness,
                   const Rgb& c, int cls) {
  const double cy = rng.uniform(0.25, 0.75) * cv.h();
  const double cx = rng.uniform(0.25, 0.75) * cv.w();
  const double ry = rng.uniform(0.06, 0.16) * cv.h();
  const double rx = rng.uniform(0.06, 0.16) * cv.w();
  for (int y = 0; y < cv.h(); ++y)
    for (int x = 0; x < cv.w(); ++x) {
      const double d = std::hypot((y - cy) / ry, (x - cx) / rx);
      const bool on = filled ? d <= 1.0 : std::fabs(d - 1.0) * std::min(ry, rx) <= thickness;
      if (on) cv.paint(y, x, c, cls);
    }
}

void paint_texture_patch(Canvas& cv, Rng& rng, int cls) {
  const double cy = rng.uniform(0.3, 0.7) * cv.h();
  const double cx = rng.uniform(0.3, 0.7) * cv.w();
  const double ry = rng.uniform(0.10, 0.22) * cv.h();
  const double rx = rng.uniform(0.10, 0.22) * cv.w();
  Plane tex = value_noise(cv.h(), cv.w(), 2, rng);
  for (int y = 0; y < cv.h(); ++y)
    for (int x = 0; x < cv.w(); ++x)
      if (std::hypot((y - cy) / ry, (x - cx) / rx) <= 1.0) {
        const double v = 0.55 + 0.45 * tex.at(y, x);
        cv.paint(y, x, {v, v * 0.95, v * 0.8}, cls);
      }
}

void paint_band(Canvas& cv, Rng& rng, const Rgb& c, int cls) {
  const double frac = rng.uniform(0.10, 0.22);
  const int top = static_cast<int>((1.0 - frac) * cv.h());
  Plane wave = value_noise(1, cv.w(), 8, rng);
  for (int x = 0; x < cv.w(); ++x) {
    const int yt = top + static_cast<int>(3.0 * (wave.at(0, x) - 0.5));
    for (int y = std::max(0, yt); y < cv.h(); ++y) cv.paint(y, x, c, cls);
  }
}

void paint_arc(Canvas& cv, Rng& rng, double thickness, double extent,
               const Rgb& c, int cls) {
  const double cy = rng.uniform(0.3, 0.7) * cv.h();
  const double cx = rng.uniform(0.3, 0.7) * cv.w();
  const double rad = rng.uniform(0.12, 0.25) * std::min(cv.h(), cv.w());
  const double a0 = rng.uniform(0.0, 2.0 * M_PI);
  const int steps = static_cast<int>(rad * extent * 4);
  for (int s = 0; s <= steps; ++s) {
    const double a = a0 + extent * s / std::max(1, steps);
    draw_disk(cv, cy + rad * std::sin(a), cx + rad * std::cos(a),
              thickness / 2.0, c, cls);
  }
}

void paint_blob(Canvas& cv, Rng& rng, const Rgb& c, int cls) {
  const double cy = rng.uniform(0.3, 0.7) * cv.h();
  const double cx = rng.uniform(0.3, 0.7) * cv.w();
  const double base = rng.uniform(0.08, 0.18) * std::min(cv.h(), cv.w());
  // Radial wobble makes an irregular closed region.
  std::vector<double> wob(12);
  for (double& v : wob) v = rng.uniform(0.7, 1.3);
  for (int y = 0; y < cv.h(); ++y)
    for (int x = 0; x < cv.w(); ++x) {
      const double d = std::hypot(y - cy, x - cx);
      double a = std::atan2(y - cy, x - cx) + M_PI;
      const int k = static_cast<int>(a / (2 * M_PI) * 12) % 12;
      if (d <= base * wob[k]) cv.paint(y, x, c, cls);
    }
}

void paint_primitive(Canvas& cv, Rng& rng, const ClassEntry& cls) {
  const std::string& n = cls.name;
  const int id = cls.index;
  if (n == "Cracks")
    paint_polyline(cv, rng, 1.2, 0.5, {0.06, 0.05, 0.05}, id);
  else if (n == "Fracture")
    paint_polyline(cv, rng, 2.6, 1.1, {0.12, 0.10, 0.16}, id);
  else if (n == "Roots")
    paint_roots(cv, rng, {0.30, 0.16, 0.06}, id);
  else if (n == "Holes")
    paint_ellipse(cv, rng, true, 0.0, {0.03, 0.03, 0.04}, id);
  else if (n == "Encrustation/Deposits")
    paint_texture_patch(cv, rng, id);
  else if (n == "Water Level")
    paint_band(cv, rng, {0.10, 0.22, 0.26}, id);
  else if (n == "Joint Problems")
    paint_ellipse(cv, rng, false, 1.5, {0.16, 0.14, 0.12}, id);
  else if (n == "Loose Gasket")
    paint_arc(cv, rng, 3.0, rng.uniform(1.5, 3.0), {0.10, 0.10, 0.10}, id);
  else if (n == "Deformation")
    paint_blob(cv, rng, {0.62, 0.55, 0.45}, id);
  else
    paint_blob(cv, rng, {0.45, 0.30, 0.25}, id);
}

}  // namespace

std::vector<Sample> generate_synthetic(int num, int height, int width,
                                       std::uint64_t seed,
                                       const ClassTable& table) {
  if (num < 0) throw std::invalid_argument("generate_synthetic: num < 0");
  const int defects = table.num_classes() - 1;
  std::vector<Sample> out;
  out.reserve(num);
  for (int i = 0; i < num; ++i) {
    // Per-sample stream: sample i is identical regardless of num.
    Rng rng(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(i) + 1);
    Canvas cv(height, width);

    Plane coarse = value_noise(height, width, 16, rng);
    Plane fine = value_noise(height, width, 4, rng);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double v =
            0.40 + 0.30 * coarse.at(y, x) + 0.12 * (fine.at(y, x) - 0.5);
        cv.r.at(y, x) = v;
        cv.g.at(y, x) = v * 0.88;
        cv.b.at(y, x) = v * 0.72;
      }

    if (defects > 0) {
      const int extra = static_cast<int>(rng.uniform_int(3));
      for (int p = 0; p <= extra; ++p) {
        // First primitive cycles through the classes so every class shows up
        // in any reasonably sized set; the rest are random.
        const int cls = p == 0 ? 1 + i % defects
                               : 1 + static_cast<int>(rng.uniform_int(defects));
        paint_primitive(cv, rng, table.entry(cls));
      }
    }

    Sample s;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth_%05d", i);
    s.id = buf;
    s.image = ImageU8(height, width, 3);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        auto q = [](double v) {
          return static_cast<std::uint8_t>(
              std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        };
        s.image.at(y, x, 0) = q(cv.r.at(y, x));
        s.image.at(y, x, 1) = q(cv.g.at(y, x));
        s.image.at(y, x, 2) = q(cv.b.at(y, x));
      }
    s.mask = std::move(cv.mask);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace daufi::data
