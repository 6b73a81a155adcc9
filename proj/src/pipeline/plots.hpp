#pragma once

#include <string>
#include <vector>

#include "features/image.hpp"

namespace daufi::pipeline {

// image | ground truth | prediction side by side with separators.
img::ImageU8 compose_triptych(const img::ImageU8& image,
                              const img::ImageU8& gt_rgb,
                              const img::ImageU8& pred_rgb);

struct Curve {
  std::string name;
  std::vector<double> values;
};

// Minimal line-plot rasterizer. Axis ranges auto-scale; the legend (name ->
// color) goes into a JSON sidecar next to the image.
void render_curve_sheet(const std::string& png_path,
                        const std::vector<Curve>& curves);

}  // namespace daufi::pipeline
