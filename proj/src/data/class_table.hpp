#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace daufi::data {

struct ClassEntry {
  int index = 0;
  std::string name;
  std::array<std::uint8_t, 3> color{0, 0, 0};
  double ciw = 0.0;
};

// Ordered class definitions. Index 0 is the background (black, CIW 0);
// defect CIWs are normalized so the largest equals 1.
class ClassTable {
 public:
  explicit ClassTable(std::vector<ClassEntry> entries);

  static ClassTable load(const std::string& path);
  void save(const std::string& path) const;

  // The nine sewer-culvert deficiency classes plus background.
  static ClassTable sewer_default();
  // Background + single foreground class (nuclei-style binary masks).
  static ClassTable binary_default();

  int num_classes() const { return static_cast<int>(entries_.size()); }
  const ClassEntry& entry(int index) const { return entries_.at(index); }
  const std::vector<ClassEntry>& entries() const { return entries_; }

  // -1 when the color is not in the palette.
  int index_of_color(std::uint8_t r, std::uint8_t g, std::uint8_t b) const;
  int index_of_name(const std::string& name) const;

  // Per-class loss weights: CIW for defects, `background_weight` for class 0.
  std::vector<double> loss_weights(double background_weight) const;
  std::vector<double> ciw_values() const;

 private:
  void validate_and_normalize();

  std::vector<ClassEntry> entries_;
};

}  // namespace daufi::data
