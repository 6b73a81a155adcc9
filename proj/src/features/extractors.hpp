#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "features/image.hpp"

namespace daufi::features {

using img::ImageU8;
using img::Plane;

struct GaborParams {
  std::vector<double> orientations{0.0, M_PI / 4, M_PI / 2, 3 * M_PI / 4};
  std::vector<double> wavelengths{4.0, 8.0};
  double sigma_ratio = 0.56;  // sigma = sigma_ratio * wavelength
  double gamma = 0.5;         // spatial aspect ratio
  int kernel_size = 9;
  double phase = 0.0;
  bool include_imaginary = false;

  void validate() const;
  std::string canonical() const;
};

struct CannyParams {
  double gaussian_sigma = 1.4;
  int gaussian_kernel_size = 5;
  double low_ratio = 0.1;   // fraction of max gradient magnitude
  double high_ratio = 0.3;

  void validate() const;
  std::string canonical() const;
};

struct HogParams {
  int cell_size = 8;
  int num_bins = 9;
  int block_size = 2;  // cells per block side, L2 normalization

  void validate() const;
  std::string canonical() const;
};

struct ColorParams {
  int local_std_window = 7;

  void validate() const;
  std::string canonical() const;
};

// Full extractor configuration; the hash of its canonical form keys feature
// caches.
struct ExtractorConfig {
  GaborParams gabor;
  CannyParams canny;
  HogParams hog;
  ColorParams color;

  std::string canonical() const;
  std::string params_hash() const;
};

// Multi-channel engineered-feature image. All channels share H x W and live
// in [0,1]; names carry the extractor id as a dotted prefix.
struct FeatureStack {
  int h = 0, w = 0;
  std::vector<std::string> names;
  std::vector<Plane> channels;
  std::string params_hash;

  int count() const { return static_cast<int>(channels.size()); }
  void append(const FeatureStack& other);
  void validate() const;
};

// Raw Sobel responses shared by sobel_edges and canny_edges.
struct SobelRaw {
  Plane gx, gy, magnitude;
};
SobelRaw sobel_raw(const Plane& gray);

// One channel per (orientation, wavelength): |real Gabor response|, min-max
// normalized. Kernels are zero-mean so constant inputs give zero channels.
// `normalize=false` keeps raw absolute responses, where relative magnitude
// across channels is meaningful (frequency-matching checks).
FeatureStack gabor_bank(const Plane& gray, const GaborParams& p,
                        bool normalize = true);

// |Gx|, |Gy|, magnitude; each min-max normalized.
FeatureStack sobel_edges(const Plane& gray);

// Full four-stage Canny: Gaussian smoothing, Sobel gradients, non-maximum
// suppression, double threshold with 8-connected hysteresis tracking.
// Output values are exactly 0 or 1.
Plane canny_edges(const Plane& gray, const CannyParams& p);
FeatureStack canny_stack(const Plane& gray, const CannyParams& p);

// 9 orientation-bin channels at pixel resolution (nearest-cell upsampling).
FeatureStack hog_map(const Plane& gray, const HogParams& p);

// hue, saturation, value + local intensity standard deviation.
FeatureStack color_intensity(const ImageU8& rgb, const ColorParams& p);

// Elementwise multiplication of every channel by a {0,1} mask.
FeatureStack mask_guided(const FeatureStack& stack, const Plane& mask);

extern const std::vector<std::string> kExtractorOrder;  // gabor,sobel,canny,hog,color

// Runs the enabled extractors in the fixed documented order and concatenates
// the stacks; applies mask_guided when a mask is given.
FeatureStack extract(const ImageU8& image, const std::set<std::string>& enabled,
                     const ExtractorConfig& cfg,
                     const Plane* mask = nullptr);

// Channel count extract() will produce for a given extractor set.
int extract_channel_count(const std::set<std::string>& enabled,
                          const ExtractorConfig& cfg);

// Binary container + IO for cached stacks (documented in the README).
void save_stack(const std::string& path, const FeatureStack& stack);
FeatureStack load_stack(const std::string& path);

}  // namespace daufi::features
