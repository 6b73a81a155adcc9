#include "features/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace daufi::img {

double Plane::at_reflect(int y, int x) const {
  if (y < 0) y = -y;
  if (y >= h) y = 2 * h - 2 - y;
  if (x < 0) x = -x;
  if (x >= w) x = 2 * w - 2 - x;
  return at(y, x);
}

double Plane::max_value() const {
  double m = v.empty() ? 0.0 : v[0];
  for (double x : v) m = std::max(m, x);
  return m;
}

double Plane::min_value() const {
  double m = v.empty() ? 0.0 : v[0];
  for (double x : v) m = std::min(m, x);
  return m;
}

Plane to_gray(const ImageU8& img) {
  Plane out(img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      double g;
      if (img.channels == 1) {
        g = img.at(y, x, 0) / 255.0;
      } else {
        g = (0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
             0.114 * img.at(y, x, 2)) /
            255.0;
      }
      out.at(y, x) = g;
    }
  return out;
}

std::vector<Plane> to_planes(const ImageU8& img) {
  std::vector<Plane> out(img.channels, Plane(img.h, img.w));
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < img.channels; ++c)
        out[c].at(y, x) = img.at(y, x, c) / 255.0;
  return out;
}

void normalize_minmax(Plane& p) {
  const double lo = p.min_value(), hi = p.max_value();
  const double range = hi - lo;
  if (range <= 0.0) {
    std::fill(p.v.begin(), p.v.end(), 0.0);
    return;
  }
  for (double& x : p.v) x = (x - lo) / range;
}

namespace {

bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

ImageU8 read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png read failed: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = static_cast<int>(png_get_channels(png, info));
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unsupported png channel count in " + path);
  }
  ImageU8 out(h, w, ch);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = out.v.data() + static_cast<std::size_t>(y) * w * ch;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const std::string& path, const ImageU8& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open " + path + " for writing");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.w, img.h, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.h);
  for (int y = 0; y < img.h; ++y)
    rows[y] = const_cast<png_bytep>(
        img.v.data() + static_cast<std::size_t>(y) * img.w * img.channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageU8 read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5" && magic != "P6")
    throw std::runtime_error("unsupported pnm magic in " + path);
  auto next_int = [&]() {
    int v;
    // Skip whitespace and '#' comments.
    while (true) {
      int c = f.peek();
      if (c == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(c)) {
        f.get();
      } else {
        break;
      }
    }
    f >> v;
    return v;
  };
  const int w = next_int(), h = next_int(), maxv = next_int();
  if (maxv != 255) throw std::runtime_error("pnm maxval must be 255: " + path);
  f.get();  // single whitespace after header
  const int ch = magic == "P6" ? 3 : 1;
  ImageU8 out(h, w, ch);
  f.read(reinterpret_cast<char*>(out.v.data()),
         static_cast<std::streamsize>(out.v.size()));
  if (!f) throw std::runtime_error("truncated pnm file " + path);
  return out;
}

void write_pnm(const std::string& path, const ImageU8& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << (img.channels == 3 ? "P6" : "P5") << "\n"
    << img.w << " " << img.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.v.data()),
          static_cast<std::streamsize>(img.v.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace

ImageU8 read_image(const std::string& path) {
  if (has_suffix(path, ".png")) return read_png(path);
  if (has_suffix(path, ".ppm") || has_suffix(path, ".pgm"))
    return read_pnm(path);
  throw std::runtime_error("unsupported image extension: " + path);
}

void write_image(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::runtime_error("write_image: only 1 or 3 channels supported");
  if (has_suffix(path, ".png")) {
    write_png(path, img);
    return;
  }
  if (has_suffix(path, ".ppm") || has_suffix(path, ".pgm")) {
    write_pnm(path, img);
    return;
  }
  throw std::runtime_error("unsupported image extension: " + path);
}

}  // namespace daufi::img
