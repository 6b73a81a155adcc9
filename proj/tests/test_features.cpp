#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "features/extractors.hpp"

using namespace daufi;
using features::CannyParams;
using features::ExtractorConfig;
using features::FeatureStack;
using features::GaborParams;
using img::ImageU8;
using img::Plane;

namespace {

Plane horizontal_sinusoid(int size, double wavelength) {
  Plane p(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      p.at(y, x) = 0.5 + 0.5 * std::sin(2.0 * M_PI * x / wavelength);
  return p;
}

double channel_mean(const Plane& p) {
  double s = 0.0;
  for (double v : p.v) s += v;
  return s / static_cast<double>(p.v.size());
}

// Brute-force zero-mean Gabor response, written independently of the module.
double oracle_gabor_mean_abs(const Plane& im, double theta, double lambda,
                             double sigma_ratio, double gamma, int k) {
  const int half = k / 2;
  std::vector<double> ker(static_cast<std::size_t>(k) * k);
  const double sigma = sigma_ratio * lambda;
  double mean = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double yy = i - half, xx = j - half;
      const double u = xx * std::cos(theta) + yy * std::sin(theta);
      const double v = -xx * std::sin(theta) + yy * std::cos(theta);
      ker[i * k + j] = std::exp(-(u * u + gamma * gamma * v * v) /
                                (2 * sigma * sigma)) *
                       std::cos(2 * M_PI * u / lambda);
      mean += ker[i * k + j];
    }
  mean /= k * k;
  double acc = 0.0;
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x) {
      double r = 0.0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
          r += im.at_reflect(y + i - half, x + j - half) *
               (ker[i * k + j] - mean);
      acc += std::fabs(r);
    }
  return acc / static_cast<double>(im.h * im.w);
}

}  // namespace

TEST_CASE("gabor bank") {
  GaborParams p;

  SUBCASE("constant image gives all-zero channels") {
    Plane im(32, 32, 0.7);
    FeatureStack s = features::gabor_bank(im, p);
    CHECK(s.count() == 8);
    for (const Plane& ch : s.channels)
      CHECK(ch.max_value() == 0.0);
  }

  SUBCASE("matched orientation and wavelength dominates") {
    Plane im = horizontal_sinusoid(64, 8.0);
    // Dominance is a statement about raw responses; per-channel min-max
    // normalization would rescale each channel independently.
    FeatureStack s = features::gabor_bank(im, p, /*normalize=*/false);
    int matched = -1;
    for (int i = 0; i < s.count(); ++i)
      if (s.names[i] == "gabor.o0.w8") matched = i;
    REQUIRE(matched >= 0);
    const double m = channel_mean(s.channels[matched]);
    for (int i = 0; i < s.count(); ++i)
      if (i != matched)
        CHECK_MESSAGE(m > channel_mean(s.channels[i]),
                      "channel ", s.names[i], " should respond less");
    // Cross-check the winning channel against the brute-force oracle.
    const double oracle = oracle_gabor_mean_abs(im, 0.0, 8.0, p.sigma_ratio,
                                                p.gamma, p.kernel_size);
    CHECK(m == doctest::Approx(oracle).epsilon(1e-9));
  }

  SUBCASE("bank cardinality is orientations x wavelengths") {
    GaborParams q;
    q.orientations = {0.0, M_PI / 2};
    q.wavelengths = {4.0, 6.0, 8.0};
    Plane im = horizontal_sinusoid(32, 6.0);
    CHECK(features::gabor_bank(im, q).count() == 6);
  }

  SUBCASE("degenerate params rejected") {
    GaborParams q;
    q.kernel_size = 8;
    Plane im(8, 8, 0.5);
    CHECK_THROWS_AS(features::gabor_bank(im, q), std::invalid_argument);
    q = GaborParams{};
    q.wavelengths = {0.5};
    CHECK_THROWS_AS(features::gabor_bank(im, q), std::invalid_argument);
  }
}

TEST_CASE("sobel") {
  SUBCASE("constant image is zero everywhere") {
    Plane im(16, 16, 0.4);
    FeatureStack s = features::sobel_edges(im);
    REQUIRE(s.count() == 3);
    for (const Plane& ch : s.channels) CHECK(ch.max_value() == 0.0);
  }

  SUBCASE("vertical step magnitude confined to boundary columns") {
    const int c = 9;
    Plane im(16, 16);
    for (int y = 0; y < 16; ++y)
      for (int x = c; x < 16; ++x) im.at(y, x) = 1.0;
    features::SobelRaw raw = features::sobel_raw(im);
    // Hand convolution: 3x3 Sobel across a step touches columns c-1 and c.
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        if (x == c - 1 || x == c)
          CHECK(raw.magnitude.at(y, x) > 0.0);
        else
          CHECK(raw.magnitude.at(y, x) == doctest::Approx(0.0));
      }
  }

  SUBCASE("45-degree ramp has equal gradient components") {
    Plane im(16, 16);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) im.at(y, x) = 0.02 * (x + y);
    features::SobelRaw raw = features::sobel_raw(im);
    // Interior only: reflection padding flattens the ramp at the borders.
    for (int y = 1; y < 15; ++y)
      for (int x = 1; x < 15; ++x)
        CHECK(std::fabs(raw.gx.at(y, x)) ==
              doctest::Approx(std::fabs(raw.gy.at(y, x))).epsilon(1e-6));
  }
}

TEST_CASE("canny") {
  CannyParams p;

  SUBCASE("blank image has no edges") {
    Plane im(32, 32, 0.3);
    Plane e = features::canny_edges(im, p);
    CHECK(e.max_value() == 0.0);
  }

  SUBCASE("half-plane produces a one-pixel chain near the boundary") {
    const int c = 16;
    Plane im(32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = c; x < 32; ++x) im.at(y, x) = 1.0;
    Plane e = features::canny_edges(im, p);
    for (int y = 0; y < 32; ++y) {
      int count = 0;
      for (int x = 0; x < 32; ++x)
        if (e.at(y, x) == 1.0) {
          ++count;
          CHECK(std::abs(x - c) <= 1);  // within +-1 px of the boundary
        }
      CHECK(count == 1);  // one pixel per row: a 1-px-wide chain
    }
  }

  SUBCASE("weak ring without strong contact is suppressed") {
    // A faint ring (below high threshold) plus one strong isolated square
    // far away that sets max magnitude. The ring never touches a strong
    // pixel, so hysteresis must drop it entirely.
    Plane im(64, 64, 0.0);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const double r = std::hypot(y - 44.0, x - 44.0);
        if (r >= 8.0 && r <= 11.0) im.at(y, x) = 0.18;  // weak ring
      }
    for (int y = 4; y < 12; ++y)
      for (int x = 4; x < 12; ++x) im.at(y, x) = 1.0;  // strong square
    Plane e = features::canny_edges(im, p);
    bool strong_found = false;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        if (e.at(y, x) == 0.0) continue;
        if (std::hypot(y - 44.0, x - 44.0) < 16.0)
          FAIL_CHECK("weak ring pixel survived at ", y, ",", x);
        else
          strong_found = true;
      }
    CHECK(strong_found);
  }

  SUBCASE("edges are invariant to a constant intensity shift") {
    Plane im(32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        im.at(y, x) = 0.3 * ((x * 13 + y * 7) % 5 > 2) + 0.2 * (x > 15);
    Plane shifted = im;
    for (double& v : shifted.v) v += 0.2;
    Plane e1 = features::canny_edges(im, p);
    Plane e2 = features::canny_edges(shifted, p);
    CHECK(e1.v == e2.v);
  }

  SUBCASE("edge pixels are a subset of directional local maxima") {
    Plane im(32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        im.at(y, x) = 0.5 + 0.5 * std::sin(0.4 * x) * std::cos(0.3 * y);
    Plane e = features::canny_edges(im, p);
    // Independent NMS recomputation from scratch.
    std::vector<double> gk;
    const int gs = p.gaussian_kernel_size;
    {
      double sum = 0.0;
      for (int i = 0; i < gs; ++i)
        for (int j = 0; j < gs; ++j) {
          const double dy = i - gs / 2, dx = j - gs / 2;
          gk.push_back(std::exp(-(dx * dx + dy * dy) /
                                (2 * p.gaussian_sigma * p.gaussian_sigma)));
          sum += gk.back();
        }
      for (double& v : gk) v /= sum;
    }
    Plane sm(32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        double acc = 0.0;
        for (int i = 0; i < gs; ++i)
          for (int j = 0; j < gs; ++j)
            acc += im.at_reflect(y + i - gs / 2, x + j - gs / 2) *
                   gk[i * gs + j];
        sm.at(y, x) = acc;
      }
    features::SobelRaw g = features::sobel_raw(sm);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        if (e.at(y, x) == 0.0) continue;
        const double m = g.magnitude.at(y, x);
        double ang = std::atan2(g.gy.at(y, x), g.gx.at(y, x)) * 180.0 / M_PI;
        if (ang < 0) ang += 180.0;
        auto mag_at = [&](int yy, int xx) {
          if (yy < 0 || yy >= 32 || xx < 0 || xx >= 32) return 0.0;
          return g.magnitude.at(yy, xx);
        };
        double n1, n2;
        if (ang < 22.5 || ang >= 157.5) {
          n1 = mag_at(y, x - 1); n2 = mag_at(y, x + 1);
        } else if (ang < 67.5) {
          n1 = mag_at(y - 1, x - 1); n2 = mag_at(y + 1, x + 1);
        } else if (ang < 112.5) {
          n1 = mag_at(y - 1, x); n2 = mag_at(y + 1, x);
        } else {
          n1 = mag_at(y - 1, x + 1); n2 = mag_at(y + 1, x - 1);
        }
        CHECK(m >= std::min(n1, n2));
        CHECK(m >= n2);
      }
  }
}

TEST_CASE("hog") {
  features::HogParams p;

  SUBCASE("constant image gives zero histograms") {
    Plane im(64, 64, 0.6);
    FeatureStack s = features::hog_map(im, p);
    REQUIRE(s.count() == 9);
    for (const Plane& ch : s.channels) CHECK(ch.max_value() == 0.0);
  }

  SUBCASE("vertical stripes put the vote in the 0-degree bin") {
    Plane im(64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) im.at(y, x) = (x / 4) % 2 ? 1.0 : 0.0;
    FeatureStack s = features::hog_map(im, p);
    // Horizontal gradients, unsigned orientation 0 degrees -> bin 0.
    for (int y = 8; y < 56; ++y)
      for (int x = 8; x < 56; ++x) {
        int best = 0;
        double bv = s.channels[0].at(y, x);
        for (int b = 1; b < 9; ++b)
          if (s.channels[b].at(y, x) > bv) {
            bv = s.channels[b].at(y, x);
            best = b;
          }
        if (bv > 0.0) CHECK(best == 0);
      }
  }

  SUBCASE("output aligns with the image grid, including indivisible dims") {
    Plane im(50, 70);
    for (int y = 0; y < 50; ++y)
      for (int x = 0; x < 70; ++x) im.at(y, x) = 0.01 * ((x * y) % 97);
    FeatureStack s = features::hog_map(im, p);
    CHECK(s.h == 50);
    CHECK(s.w == 70);
    s.validate();
  }
}

TEST_CASE("color_intensity") {
  features::ColorParams p;

  SUBCASE("gray image has zero saturation; constant image zero local std") {
    ImageU8 im(16, 16, 3, 128);
    FeatureStack s = features::color_intensity(im, p);
    REQUIRE(s.count() == 4);
    CHECK(s.channels[1].max_value() == 0.0);  // saturation
    CHECK(s.channels[3].max_value() == 0.0);  // local std
  }

  SUBCASE("half red half blue is hue-bimodal") {
    ImageU8 im(16, 16, 3, 0);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        if (x < 8)
          im.at(y, x, 0) = 255;
        else
          im.at(y, x, 2) = 255;
      }
    FeatureStack s = features::color_intensity(im, p);
    std::set<double> hues(s.channels[0].v.begin(), s.channels[0].v.end());
    CHECK(hues.size() == 2);
    CHECK(hues.count(0.0) == 1);
    CHECK(*hues.rbegin() == doctest::Approx(240.0 / 360.0));
  }
}

TEST_CASE("mask_guided") {
  Plane im(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) im.at(y, x) = 0.03 * ((x + 2 * y) % 29);
  FeatureStack s = features::sobel_edges(im);

  SUBCASE("all-ones mask leaves the stack unchanged") {
    Plane ones(16, 16, 1.0);
    FeatureStack m = features::mask_guided(s, ones);
    for (int c = 0; c < s.count(); ++c) CHECK(m.channels[c].v == s.channels[c].v);
  }

  SUBCASE("all-zero mask zeroes the stack") {
    Plane zeros(16, 16, 0.0);
    FeatureStack m = features::mask_guided(s, zeros);
    for (const Plane& ch : m.channels) CHECK(ch.max_value() == 0.0);
  }

  SUBCASE("checkerboard keeps exactly the mask support, and is idempotent") {
    Plane mask(16, 16);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) mask.at(y, x) = (x + y) % 2;
    FeatureStack m1 = features::mask_guided(s, mask);
    for (int c = 0; c < s.count(); ++c)
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
          if (mask.at(y, x) == 0.0)
            CHECK(m1.channels[c].at(y, x) == 0.0);
          else
            CHECK(m1.channels[c].at(y, x) == s.channels[c].at(y, x));
        }
    FeatureStack m2 = features::mask_guided(m1, mask);
    for (int c = 0; c < s.count(); ++c) CHECK(m2.channels[c].v == m1.channels[c].v);
  }

  SUBCASE("shape mismatch rejected") {
    Plane bad(8, 8, 1.0);
    CHECK_THROWS_AS(features::mask_guided(s, bad), std::invalid_argument);
  }
}

TEST_CASE("extract") {
  ExtractorConfig cfg;
  ImageU8 im(32, 32, 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c)
        im.at(y, x, c) = static_cast<std::uint8_t>((x * 7 + y * 13 + c * 40) % 256);

  SUBCASE("channel counts and fixed order") {
    CHECK(features::extract(im, {"sobel"}, cfg).count() == 3);
    FeatureStack s = features::extract(im, {"canny", "sobel", "gabor"}, cfg);
    CHECK(s.count() == 12);  // 8 + 3 + 1, in gabor,sobel,canny order
    CHECK(s.names.front().rfind("gabor.", 0) == 0);
    CHECK(s.names.back() == "canny.edges");
    CHECK(features::extract_channel_count({"gabor", "sobel", "canny"}, cfg) == 12);
  }

  SUBCASE("purity: same image gives identical stacks") {
    FeatureStack a = features::extract(im, {"gabor", "hog", "color"}, cfg);
    FeatureStack b = features::extract(im, {"gabor", "hog", "color"}, cfg);
    REQUIRE(a.count() == b.count());
    for (int c = 0; c < a.count(); ++c) CHECK(a.channels[c].v == b.channels[c].v);
  }

  SUBCASE("empty set rejected") {
    CHECK_THROWS_AS(features::extract(im, {}, cfg), std::invalid_argument);
  }

  SUBCASE("all channels in [0,1]") {
    FeatureStack s =
        features::extract(im, {"gabor", "sobel", "canny", "hog", "color"}, cfg);
    s.validate();
    CHECK(s.count() == 8 + 3 + 1 + 9 + 4);
  }
}

TEST_CASE("stack save/load round-trip") {
  ExtractorConfig cfg;
  ImageU8 im(16, 16, 3);
  for (std::size_t i = 0; i < im.v.size(); ++i)
    im.v[i] = static_cast<std::uint8_t>((i * 31) % 256);
  FeatureStack s = features::extract(im, {"sobel", "canny"}, cfg);
  const std::string path = "/tmp/daufi_test_stack.dfsk";
  features::save_stack(path, s);
  FeatureStack r = features::load_stack(path);
  CHECK(r.h == s.h);
  CHECK(r.names == s.names);
  CHECK(r.params_hash == s.params_hash);
  REQUIRE(r.count() == s.count());
  for (int c = 0; c < s.count(); ++c) CHECK(r.channels[c].v == s.channels[c].v);
  std::filesystem::remove(path);
}

TEST_CASE("image io round-trips") {
  ImageU8 im(9, 13, 3);
  for (std::size_t i = 0; i < im.v.size(); ++i)
    im.v[i] = static_cast<std::uint8_t>((i * 17 + 3) % 256);
  for (const std::string ext : {".png", ".ppm"}) {
    const std::string path = "/tmp/daufi_test_img" + ext;
    img::write_image(path, im);
    ImageU8 r = img::read_image(path);
    CHECK(r.h == im.h);
    CHECK(r.w == im.w);
    CHECK(r.channels == 3);
    CHECK(r.v == im.v);
    std::filesystem::remove(path);
  }
}
