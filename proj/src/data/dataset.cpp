#include "data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <stdexcept>

#include "nn/rng.hpp"

namespace fs = std::filesystem;

namespace daufi::data {

void Sample::validate(int num_classes) const {
  if (image.h != mask.h || image.w != mask.w)
    throw std::invalid_argument("Sample " + id + ": image/mask size mismatch");
  for (std::int32_t v : mask.v)
    if (v < 0 || v >= num_classes)
      throw std::invalid_argument("Sample " + id + ": mask value " +
                                  std::to_string(v) + " out of range");
}

ImageU8 encode_mask(const IndexMask& mask, const ClassTable& table) {
  ImageU8 out(mask.h, mask.w, 3);
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) {
      const std::int32_t idx = mask.at(y, x);
      if (idx < 0 || idx >= table.num_classes())
        throw std::invalid_argument("encode_mask: class index out of range");
      const auto& c = table.entry(idx).color;
      out.at(y, x, 0) = c[0];
      out.at(y, x, 1) = c[1];
      out.at(y, x, 2) = c[2];
    }
  return out;
}

IndexMask decode_mask(const ImageU8& mask_img, const ClassTable& table) {
  if (mask_img.channels != 3)
    throw std::invalid_argument("decode_mask: RGB mask image required");
  IndexMask out(mask_img.h, mask_img.w);
  for (int y = 0; y < mask_img.h; ++y)
    for (int x = 0; x < mask_img.w; ++x) {
      const int idx = table.index_of_color(
          mask_img.at(y, x, 0), mask_img.at(y, x, 1), mask_img.at(y, x, 2));
      if (idx < 0)
        throw std::invalid_argument(
            "decode_mask: color (" + std::to_string(mask_img.at(y, x, 0)) +
            "," + std::to_string(mask_img.at(y, x, 1)) + "," +
            std::to_string(mask_img.at(y, x, 2)) + ") at pixel (" +
            std::to_string(y) + "," + std::to_string(x) +
            ") is not in the class table");
      out.at(y, x) = idx;
    }
  return out;
}

namespace {

const std::vector<std::string> kImageExts{".png", ".ppm", ".pgm"};

std::string find_with_ext(const fs::path& dir, const std::string& stem) {
  for (const std::string& e : kImageExts) {
    fs::path p = dir / (stem + e);
    if (fs::exists(p)) return p.string();
  }
  return {};
}

ImageU8 ensure_rgb(ImageU8 im) {
  if (im.channels == 3) return im;
  ImageU8 out(im.h, im.w, 3);
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = im.at(y, x, 0);
  return out;
}

}  // namespace

std::vector<Sample> load_dataset(const std::string& root,
                                 const ClassTable& table) {
  const fs::path images = fs::path(root) / "images";
  const fs::path masks = fs::path(root) / "masks";
  if (!fs::is_directory(images) || !fs::is_directory(masks))
    throw std::runtime_error("load_dataset: " + root +
                             " must contain images/ and masks/");
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(images)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (std::find(kImageExts.begin(), kImageExts.end(), ext) ==
        kImageExts.end())
      continue;
    stems.push_back(entry.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());

  std::vector<Sample> out;
  for (const std::string& stem : stems) {
    const std::string img_path = find_with_ext(images, stem);
    const std::string mask_path = find_with_ext(masks, stem);
    if (mask_path.empty())
      throw std::runtime_error("load_dataset: no mask for image '" + stem +
                               "'");
    Sample s;
    s.id = stem;
    s.image = ensure_rgb(img::read_image(img_path));
    ImageU8 m = img::read_image(mask_path);
    if (m.h != s.image.h || m.w != s.image.w)
      throw std::runtime_error("load_dataset: size mismatch for '" + stem +
                               "'");
    s.mask = decode_mask(m, table);
    s.validate(table.num_classes());
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const std::string& root, const std::vector<Sample>& samples,
                  const ClassTable& table, const std::string& ext) {
  const fs::path images = fs::path(root) / "images";
  const fs::path masks = fs::path(root) / "masks";
  fs::create_directories(images);
  fs::create_directories(masks);
  for (const Sample& s : samples) {
    img::write_image((images / (s.id + "." + ext)).string(), s.image);
    img::write_image((masks / (s.id + "." + ext)).string(),
                     encode_mask(s.mask, table));
  }
  table.save((fs::path(root) / "classes.csv").string());
}

DatasetSplit split_dataset(const std::vector<Sample>& samples,
                           std::array<double, 3> fractions,
                           std::uint64_t seed) {
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::fabs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split_dataset: fractions must sum to 1");
  std::vector<std::string> ids;
  for (const Sample& s : samples) ids.push_back(s.id);
  // Fisher-Yates with the project RNG keeps the shuffle reproducible.
  nn::Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[rng.uniform_int(i)]);

  const std::size_t n = ids.size();
  const std::size_t n_train = static_cast<std::size_t>(
      std::floor(fractions[0] * static_cast<double>(n)));
  const std::size_t n_val = static_cast<std::size_t>(
      std::floor(fractions[1] * static_cast<double>(n)));
  DatasetSplit split;
  split.seed = seed;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  split.test.assign(ids.begin() + n_train + n_val, ids.end());
  return split;
}

std::vector<Sample> import_nuclei_benchmark(const std::string& root) {
  if (!fs::is_directory(root))
    throw std::runtime_error("import_nuclei_benchmark: no directory " + root);
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) ids.push_back(entry.path().filename().string());
  std::sort(ids.begin(), ids.end());

  std::vector<Sample> out;
  for (const std::string& id : ids) {
    const fs::path dir = fs::path(root) / id;
    const fs::path images = dir / "images";
    const fs::path masks = dir / "masks";
    try {
      if (!fs::is_directory(images) || !fs::is_directory(masks))
        throw std::runtime_error("missing images/ or masks/");
      std::vector<std::string> image_files;
      for (const auto& e : fs::directory_iterator(images))
        if (e.is_regular_file()) image_files.push_back(e.path().string());
      if (image_files.size() != 1)
        throw std::runtime_error("expected exactly one image file");
      Sample s;
      s.id = id;
      s.image = ensure_rgb(img::read_image(image_files[0]));
      s.mask = IndexMask(s.image.h, s.image.w, 0);
      std::vector<std::string> mask_files;
      for (const auto& e : fs::directory_iterator(masks))
        if (e.is_regular_file()) mask_files.push_back(e.path().string());
      std::sort(mask_files.begin(), mask_files.end());
      for (const std::string& mf : mask_files) {
        ImageU8 inst = img::read_image(mf);
        if (inst.h != s.image.h || inst.w != s.image.w)
          throw std::runtime_error("instance mask size mismatch in " + mf);
        for (int y = 0; y < inst.h; ++y)
          for (int x = 0; x < inst.w; ++x)
            if (inst.at(y, x, 0) > 127) s.mask.at(y, x) = 1;
      }
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      std::cerr << "import_nuclei_benchmark: skipping '" << id
                << "': " << e.what() << "\n";
    }
  }
  return out;
}

}  // namespace daufi::data
