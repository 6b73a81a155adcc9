#include "features/extractors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <sstream>

#include "util/hash.hpp"

namespace daufi::features {

namespace {

Plane convolve_reflect(const Plane& src, const std::vector<double>& kernel,
                       int kh, int kw) {
  const int ph = kh / 2, pw = kw / 2;
  Plane out(src.h, src.w);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kh; ++i)
        for (int j = 0; j < kw; ++j)
          acc += src.at_reflect(y + i - ph, x + j - pw) *
                 kernel[static_cast<std::size_t>(i) * kw + j];
      out.at(y, x) = acc;
    }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

}  // namespace

void GaborParams::validate() const {
  if (kernel_size <= 0 || kernel_size % 2 == 0)
    throw std::invalid_argument("GaborParams: kernel_size must be odd");
  if (orientations.empty() || wavelengths.empty())
    throw std::invalid_argument("GaborParams: need orientations and wavelengths");
  for (double w : wavelengths)
    if (w <= 1.0)
      throw std::invalid_argument("GaborParams: wavelengths must be > 1");
  if (sigma_ratio <= 0.0 || gamma <= 0.0)
    throw std::invalid_argument("GaborParams: sigma and gamma must be positive");
}

std::string GaborParams::canonical() const {
  std::string s = "gabor{o=[";
  for (double o : orientations) s += fmt(o) + ",";
  s += "],w=[";
  for (double w : wavelengths) s += fmt(w) + ",";
  s += "],sr=" + fmt(sigma_ratio) + ",g=" + fmt(gamma) + ",k=" +
       std::to_string(kernel_size) + ",p=" + fmt(phase) + ",im=" +
       (include_imaginary ? "1" : "0") + "}";
  return s;
}

void CannyParams::validate() const {
  if (gaussian_sigma <= 0.0)
    throw std::invalid_argument("CannyParams: sigma must be positive");
  if (gaussian_kernel_size <= 0 || gaussian_kernel_size % 2 == 0)
    throw std::invalid_argument("CannyParams: kernel size must be odd");
  if (!(0.0 < low_ratio && low_ratio < high_ratio && high_ratio <= 1.0))
    throw std::invalid_argument("CannyParams: need 0 < low < high <= 1");
}

std::string CannyParams::canonical() const {
  return "canny{s=" + fmt(gaussian_sigma) + ",k=" +
         std::to_string(gaussian_kernel_size) + ",lo=" + fmt(low_ratio) +
         ",hi=" + fmt(high_ratio) + "}";
}

void HogParams::validate() const {
  if (cell_size <= 0 || num_bins <= 0 || block_size <= 0)
    throw std::invalid_argument("HogParams: all fields must be positive");
}

std::string HogParams::canonical() const {
  return "hog{c=" + std::to_string(cell_size) + ",b=" +
         std::to_string(num_bins) + ",bl=" + std::to_string(block_size) + "}";
}

void ColorParams::validate() const {
  if (local_std_window <= 0 || local_std_window % 2 == 0)
    throw std::invalid_argument("ColorParams: window must be odd and positive");
}

std::string ColorParams::canonical() const {
  return "color{w=" + std::to_string(local_std_window) + "}";
}

std::string ExtractorConfig::canonical() const {
  return gabor.canonical() + canny.canonical() + hog.canonical() +
         color.canonical();
}

std::string ExtractorConfig::params_hash() const {
  return util::hex64(util::fnv1a64(canonical()));
}

void FeatureStack::append(const FeatureStack& other) {
  if (count() == 0) {
    h = other.h;
    w = other.w;
  }
  if (other.h != h || other.w != w)
    throw std::invalid_argument("FeatureStack: size mismatch on append");
  names.insert(names.end(), other.names.begin(), other.names.end());
  channels.insert(channels.end(), other.channels.begin(), other.channels.end());
}

void FeatureStack::validate() const {
  if (names.size() != channels.size())
    throw std::logic_error("FeatureStack: names/channels out of sync");
  for (const Plane& p : channels) {
    if (p.h != h || p.w != w)
      throw std::logic_error("FeatureStack: channel size mismatch");
    for (double v : p.v)
      if (!(v >= 0.0 && v <= 1.0))
        throw std::logic_error("FeatureStack: value outside [0,1]");
  }
}

// ---------------------------------------------------------------------------

FeatureStack gabor_bank(const Plane& gray, const GaborParams& p,
                        bool normalize) {
  p.validate();
  FeatureStack out;
  out.h = gray.h;
  out.w = gray.w;
  const int k = p.kernel_size, half = k / 2;
  std::vector<double> kernel(static_cast<std::size_t>(k) * k);
  for (double theta : p.orientations) {
    for (double lambda : p.wavelengths) {
      const double sigma = p.sigma_ratio * lambda;
      const double ct = std::cos(theta), st = std::sin(theta);
      double mean = 0.0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double yy = i - half, xx = j - half;
          const double u = xx * ct + yy * st;
          const double v = -xx * st + yy * ct;
          const double g =
              std::exp(-(u * u + p.gamma * p.gamma * v * v) /
                       (2.0 * sigma * sigma)) *
              std::cos(2.0 * M_PI * u / lambda + p.phase);
          kernel[static_cast<std::size_t>(i) * k + j] = g;
          mean += g;
        }
      // Remove the DC component so flat regions give zero response.
      mean /= static_cast<double>(k) * k;
      for (double& g : kernel) g -= mean;

      Plane resp = convolve_reflect(gray, kernel, k, k);
      for (double& v : resp.v) v = std::fabs(v);
      if (normalize) normalize_minmax(resp);
      std::ostringstream name;
      name << "gabor.o" << static_cast<int>(std::round(theta * 180.0 / M_PI))
           << ".w" << lambda;
      out.names.push_back(name.str());
      out.channels.push_back(std::move(resp));

      if (p.include_imaginary) {
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) {
            const double yy = i - half, xx = j - half;
            const double u = xx * ct + yy * st;
            const double v = -xx * st + yy * ct;
            kernel[static_cast<std::size_t>(i) * k + j] =
                std::exp(-(u * u + p.gamma * p.gamma * v * v) /
                         (2.0 * sigma * sigma)) *
                std::sin(2.0 * M_PI * u / lambda + p.phase);
          }
        Plane resp_i = convolve_reflect(gray, kernel, k, k);
        for (double& v : resp_i.v) v = std::fabs(v);
        if (normalize) normalize_minmax(resp_i);
        out.names.push_back(name.str() + ".im");
        out.channels.push_back(std::move(resp_i));
      }
    }
  }
  return out;
}

SobelRaw sobel_raw(const Plane& gray) {
  static const std::vector<double> kx{-1, 0, 1, -2, 0, 2, -1, 0, 1};
  static const std::vector<double> ky{-1, -2, -1, 0, 0, 0, 1, 2, 1};
  SobelRaw out;
  out.gx = convolve_reflect(gray, kx, 3, 3);
  out.gy = convolve_reflect(gray, ky, 3, 3);
  out.magnitude = Plane(gray.h, gray.w);
  for (std::size_t i = 0; i < out.magnitude.v.size(); ++i)
    out.magnitude.v[i] =
        std::hypot(out.gx.v[i], out.gy.v[i]);
  return out;
}

FeatureStack sobel_edges(const Plane& gray) {
  SobelRaw raw = sobel_raw(gray);
  FeatureStack out;
  out.h = gray.h;
  out.w = gray.w;
  Plane ax = raw.gx, ay = raw.gy;
  for (double& v : ax.v) v = std::fabs(v);
  for (double& v : ay.v) v = std::fabs(v);
  normalize_minmax(ax);
  normalize_minmax(ay);
  normalize_minmax(raw.magnitude);
  out.names = {"sobel.gx", "sobel.gy", "sobel.mag"};
  out.channels = {std::move(ax), std::move(ay), std::move(raw.magnitude)};
  return out;
}

namespace {

std::vector<double> gaussian_kernel(double sigma, int size) {
  std::vector<double> k(static_cast<std::size_t>(size) * size);
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const double dy = i - half, dx = j - half;
      const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>(i) * size + j] = g;
      sum += g;
    }
  for (double& v : k) v /= sum;
  return k;
}

// Non-maximum suppression along the quantized gradient direction. Ties are
// broken toward the lesser coordinate so plateau edges stay one pixel wide.
Plane non_max_suppress(const SobelRaw& g) {
  const int h = g.magnitude.h, w = g.magnitude.w;
  Plane out(h, w);
  auto mag_at = [&](int y, int x) -> double {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return g.magnitude.at(y, x);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double m = g.magnitude.at(y, x);
      if (m <= 0.0) continue;
      double ang = std::atan2(g.gy.at(y, x), g.gx.at(y, x)) * 180.0 / M_PI;
      if (ang < 0.0) ang += 180.0;
      double n1, n2;  // n1 = neighbor at lesser coordinate
      if (ang < 22.5 || ang >= 157.5) {
        n1 = mag_at(y, x - 1);
        n2 = mag_at(y, x + 1);
      } else if (ang < 67.5) {
        n1 = mag_at(y - 1, x - 1);
        n2 = mag_at(y + 1, x + 1);
      } else if (ang < 112.5) {
        n1 = mag_at(y - 1, x);
        n2 = mag_at(y + 1, x);
      } else {
        n1 = mag_at(y - 1, x + 1);
        n2 = mag_at(y + 1, x - 1);
      }
      if (m > n1 && m >= n2) out.at(y, x) = m;
    }
  return out;
}

}  // namespace

Plane canny_edges(const Plane& gray, const CannyParams& p) {
  p.validate();
  // Stage 1: Gaussian smoothing.
  Plane smoothed = convolve_reflect(
      gray, gaussian_kernel(p.gaussian_sigma, p.gaussian_kernel_size),
      p.gaussian_kernel_size, p.gaussian_kernel_size);
  // Stage 2: Sobel gradients.
  SobelRaw g = sobel_raw(smoothed);
  const double max_mag = g.magnitude.max_value();
  Plane edges(gray.h, gray.w);
  // Gradients at double-precision noise scale are not edges.
  if (max_mag <= 1e-12) return edges;
  // Stage 3: non-maximum suppression.
  Plane thin = non_max_suppress(g);
  // Stage 4: double threshold + hysteresis over 8-connectivity.
  const double lo = p.low_ratio * max_mag, hi = p.high_ratio * max_mag;
  const int h = gray.h, w = gray.w;
  std::deque<std::pair<int, int>> frontier;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (thin.at(y, x) >= hi) {
        edges.at(y, x) = 1.0;
        frontier.emplace_back(y, x);
      }
  while (!frontier.empty()) {
    auto [y, x] = frontier.front();
    frontier.pop_front();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        if (edges.at(yy, xx) != 0.0) continue;
        if (thin.at(yy, xx) >= lo) {
          edges.at(yy, xx) = 1.0;
          frontier.emplace_back(yy, xx);
        }
      }
  }
  return edges;
}

FeatureStack canny_stack(const Plane& gray, const CannyParams& p) {
  FeatureStack out;
  out.h = gray.h;
  out.w = gray.w;
  out.names = {"canny.edges"};
  out.channels = {canny_edges(gray, p)};
  return out;
}

FeatureStack hog_map(const Plane& gray, const HogParams& p) {
  p.validate();
  const int cs = p.cell_size, nb = p.num_bins, bs = p.block_size;
  const int H = gray.h, W = gray.w;
  // Reflect-pad up to a multiple of the cell size, crop at the end.
  const int ph = (cs - H % cs) % cs, pw = (cs - W % cs) % cs;
  Plane padded(H + ph, W + pw);
  for (int y = 0; y < padded.h; ++y)
    for (int x = 0; x < padded.w; ++x)
      padded.at(y, x) = gray.at_reflect(y, x);
  const int cy = padded.h / cs, cx = padded.w / cs;
  const double bin_width = 180.0 / nb;

  // Per-cell histograms with unsigned gradients and soft bin assignment.
  std::vector<double> hist(static_cast<std::size_t>(cy) * cx * nb, 0.0);
  for (int y = 0; y < padded.h; ++y)
    for (int x = 0; x < padded.w; ++x) {
      const double gx = padded.at_reflect(y, x + 1) - padded.at_reflect(y, x - 1);
      const double gy = padded.at_reflect(y + 1, x) - padded.at_reflect(y - 1, x);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double ang = std::atan2(gy, gx) * 180.0 / M_PI;
      if (ang < 0.0) ang += 180.0;
      if (ang >= 180.0) ang -= 180.0;
      // Bin centers at b*bin_width; linear split between the two nearest.
      const double pos = ang / bin_width;
      int b0 = static_cast<int>(std::floor(pos)) % nb;
      const double frac = pos - std::floor(pos);
      const int b1 = (b0 + 1) % nb;
      const std::size_t cell =
          (static_cast<std::size_t>(y / cs) * cx + x / cs) * nb;
      hist[cell + b0] += (1.0 - frac) * mag;
      hist[cell + b1] += frac * mag;
    }

  // 2x2-cell block L2 normalization; each cell averages the normalized
  // copies over every block containing it.
  std::vector<double> norm(hist.size(), 0.0);
  std::vector<int> cover(static_cast<std::size_t>(cy) * cx, 0);
  const int by = std::max(1, cy - bs + 1), bx = std::max(1, cx - bs + 1);
  for (int i = 0; i < by; ++i)
    for (int j = 0; j < bx; ++j) {
      double ss = 0.0;
      for (int di = 0; di < bs && i + di < cy; ++di)
        for (int dj = 0; dj < bs && j + dj < cx; ++dj) {
          const std::size_t cell =
              (static_cast<std::size_t>(i + di) * cx + j + dj) * nb;
          for (int b = 0; b < nb; ++b) ss += hist[cell + b] * hist[cell + b];
        }
      const double inv = 1.0 / std::sqrt(ss + 1e-12);
      for (int di = 0; di < bs && i + di < cy; ++di)
        for (int dj = 0; dj < bs && j + dj < cx; ++dj) {
          const std::size_t ci = static_cast<std::size_t>(i + di) * cx + j + dj;
          for (int b = 0; b < nb; ++b) norm[ci * nb + b] += hist[ci * nb + b] * inv;
          ++cover[ci];
        }
    }
  for (std::size_t ci = 0; ci < cover.size(); ++ci)
    if (cover[ci] > 0)
      for (int b = 0; b < nb; ++b) norm[ci * nb + b] /= cover[ci];

  FeatureStack out;
  out.h = H;
  out.w = W;
  for (int b = 0; b < nb; ++b) {
    Plane ch(H, W);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const std::size_t ci = static_cast<std::size_t>(y / cs) * cx + x / cs;
        ch.at(y, x) = std::min(1.0, norm[ci * nb + b]);
      }
    out.names.push_back("hog.bin" + std::to_string(b));
    out.channels.push_back(std::move(ch));
  }
  return out;
}

FeatureStack color_intensity(const ImageU8& rgb, const ColorParams& p) {
  p.validate();
  if (rgb.channels != 3)
    throw std::invalid_argument("color_intensity: RGB input required");
  const int H = rgb.h, W = rgb.w;
  Plane hue(H, W), sat(H, W), val(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double r = rgb.at(y, x, 0) / 255.0;
      const double g = rgb.at(y, x, 1) / 255.0;
      const double b = rgb.at(y, x, 2) / 255.0;
      const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
      const double d = mx - mn;
      double h = 0.0;
      if (d > 0.0) {
        if (mx == r)
          h = std::fmod((g - b) / d, 6.0);
        else if (mx == g)
          h = (b - r) / d + 2.0;
        else
          h = (r - g) / d + 4.0;
        h *= 60.0;
        if (h < 0.0) h += 360.0;
      }
      hue.at(y, x) = h / 360.0;
      sat.at(y, x) = mx > 0.0 ? d / mx : 0.0;
      val.at(y, x) = mx;
    }

  Plane gray = to_gray(rgb);
  Plane lstd(H, W);
  const int half = p.local_std_window / 2;
  const double n = static_cast<double>(p.local_std_window) * p.local_std_window;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double s = 0.0, s2 = 0.0;
      for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
          const double v = gray.at_reflect(y + dy, x + dx);
          s += v;
          s2 += v * v;
        }
      const double var = std::max(0.0, s2 / n - (s / n) * (s / n));
      lstd.at(y, x) = std::sqrt(var);
    }
  normalize_minmax(lstd);

  FeatureStack out;
  out.h = H;
  out.w = W;
  out.names = {"color.hue", "color.sat", "color.val", "color.localstd"};
  out.channels = {std::move(hue), std::move(sat), std::move(val),
                  std::move(lstd)};
  return out;
}

FeatureStack mask_guided(const FeatureStack& stack, const Plane& mask) {
  if (mask.h != stack.h || mask.w != stack.w)
    throw std::invalid_argument("mask_guided: mask size mismatch");
  for (double v : mask.v)
    if (v != 0.0 && v != 1.0)
      throw std::invalid_argument("mask_guided: mask must be binary");
  FeatureStack out = stack;
  for (Plane& ch : out.channels)
    for (std::size_t i = 0; i < ch.v.size(); ++i) ch.v[i] *= mask.v[i];
  return out;
}

const std::vector<std::string> kExtractorOrder{"gabor", "sobel", "canny",
                                               "hog", "color"};

FeatureStack extract(const ImageU8& image, const std::set<std::string>& enabled,
                     const ExtractorConfig& cfg, const Plane* mask) {
  if (enabled.empty())
    throw std::invalid_argument("extract: empty extractor set");
  for (const std::string& e : enabled)
    if (std::find(kExtractorOrder.begin(), kExtractorOrder.end(), e) ==
        kExtractorOrder.end())
      throw std::invalid_argument("extract: unknown extractor '" + e + "'");

  const Plane gray = to_gray(image);
  FeatureStack out;
  out.h = image.h;
  out.w = image.w;
  for (const std::string& e : kExtractorOrder) {
    if (!enabled.count(e)) continue;
    if (e == "gabor")
      out.append(gabor_bank(gray, cfg.gabor));
    else if (e == "sobel")
      out.append(sobel_edges(gray));
    else if (e == "canny")
      out.append(canny_stack(gray, cfg.canny));
    else if (e == "hog")
      out.append(hog_map(gray, cfg.hog));
    else if (e == "color")
      out.append(color_intensity(image, cfg.color));
  }
  out.params_hash = cfg.params_hash();
  if (mask) return mask_guided(out, *mask);
  return out;
}

int extract_channel_count(const std::set<std::string>& enabled,
                          const ExtractorConfig& cfg) {
  int n = 0;
  for (const std::string& e : enabled) {
    if (e == "gabor")
      n += static_cast<int>(cfg.gabor.orientations.size() *
                            cfg.gabor.wavelengths.size()) *
           (cfg.gabor.include_imaginary ? 2 : 1);
    else if (e == "sobel")
      n += 3;
    else if (e == "canny")
      n += 1;
    else if (e == "hog")
      n += cfg.hog.num_bins;
    else if (e == "color")
      n += 4;
    else
      throw std::invalid_argument("unknown extractor '" + e + "'");
  }
  return n;
}

void save_stack(const std::string& path, const FeatureStack& stack) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "DFSK 1\n" << stack.h << " " << stack.w << " " << stack.count() << "\n"
    << stack.params_hash << "\n";
  for (const std::string& n : stack.names) f << n << "\n";
  for (const Plane& ch : stack.channels)
    f.write(reinterpret_cast<const char*>(ch.v.data()),
            static_cast<std::streamsize>(ch.v.size() * sizeof(double)));
  if (!f) throw std::runtime_error("write failed: " + path);
}

FeatureStack load_stack(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string magic;
  int version = 0;
  f >> magic >> version;
  if (magic != "DFSK" || version != 1)
    throw std::runtime_error("bad feature stack file: " + path);
  FeatureStack out;
  int count = 0;
  f >> out.h >> out.w >> count >> out.params_hash;
  std::string line;
  std::getline(f, line);
  for (int i = 0; i < count; ++i) {
    std::getline(f, line);
    out.names.push_back(line);
  }
  for (int i = 0; i < count; ++i) {
    Plane ch(out.h, out.w);
    f.read(reinterpret_cast<char*>(ch.v.data()),
           static_cast<std::streamsize>(ch.v.size() * sizeof(double)));
    out.channels.push_back(std::move(ch));
  }
  if (!f) throw std::runtime_error("truncated feature stack file: " + path);
  return out;
}

}  // namespace daufi::features
