#pragma once

#include <array>
#include <string>
#include <vector>

#include "data/class_table.hpp"
#include "features/image.hpp"

namespace daufi::data {

using img::ImageU8;

// Class-index mask at image resolution, row-major.
struct IndexMask {
  int h = 0, w = 0;
  std::vector<std::int32_t> v;

  IndexMask() = default;
  IndexMask(int height, int width, std::int32_t fill = 0)
      : h(height), w(width),
        v(static_cast<std::size_t>(height) * width, fill) {}
  std::int32_t& at(int y, int x) {
    return v[static_cast<std::size_t>(y) * w + x];
  }
  std::int32_t at(int y, int x) const {
    return v[static_cast<std::size_t>(y) * w + x];
  }
};

struct Sample {
  std::string id;
  ImageU8 image;  // RGB
  IndexMask mask;

  void validate(int num_classes) const;
};

// Exact-color mask coding. decode throws on any color outside the palette,
// naming the color and the first offending pixel.
ImageU8 encode_mask(const IndexMask& mask, const ClassTable& table);
IndexMask decode_mask(const ImageU8& mask_img, const ClassTable& table);

// Directory layout: root/images/<id>.<ext>, root/masks/<id>.<ext> with
// matching basenames; <ext> is png, ppm or pgm.
std::vector<Sample> load_dataset(const std::string& root,
                                 const ClassTable& table);
void save_dataset(const std::string& root, const std::vector<Sample>& samples,
                  const ClassTable& table, const std::string& ext = "png");

struct DatasetSplit {
  std::vector<std::string> train, val, test;
  std::uint64_t seed = 0;
};

// Deterministic shuffled split; fractions must sum to 1.
DatasetSplit split_dataset(const std::vector<Sample>& samples,
                           std::array<double, 3> fractions,
                           std::uint64_t seed);

// 2018 Data Science Bowl layout: root/<id>/images/*.png plus
// root/<id>/masks/*.png instance masks, flattened to binary class masks.
// Malformed folders are skipped with a warning on stderr.
std::vector<Sample> import_nuclei_benchmark(const std::string& root);

}  // namespace daufi::data
