#include "data/class_table.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace daufi::data {

ClassTable::ClassTable(std::vector<ClassEntry> entries)
    : entries_(std::move(entries)) {
  validate_and_normalize();
}

void ClassTable::validate_and_normalize() {
  if (entries_.empty())
    throw std::invalid_argument("ClassTable: no entries");
  std::set<std::array<std::uint8_t, 3>> colors;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].index != static_cast<int>(i))
      throw std::invalid_argument("ClassTable: indices must be contiguous "
                                  "from 0, got " +
                                  std::to_string(entries_[i].index) +
                                  " at position " + std::to_string(i));
    if (!colors.insert(entries_[i].color).second)
      throw std::invalid_argument("ClassTable: duplicate color for class '" +
                                  entries_[i].name + "'");
    if (entries_[i].ciw < 0.0)
      throw std::invalid_argument("ClassTable: negative CIW");
  }
  if (entries_[0].color != std::array<std::uint8_t, 3>{0, 0, 0})
    throw std::invalid_argument("ClassTable: background color must be black");
  if (entries_[0].ciw != 0.0)
    throw std::invalid_argument("ClassTable: background CIW must be 0");
  // Normalize defect weights by the highest value.
  double mx = 0.0;
  for (std::size_t i = 1; i < entries_.size(); ++i)
    mx = std::max(mx, entries_[i].ciw);
  if (mx > 0.0)
    for (std::size_t i = 1; i < entries_.size(); ++i) entries_[i].ciw /= mx;
}

ClassTable ClassTable::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open class table " + path);
  std::vector<ClassEntry> entries;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    ClassEntry e;
    std::string tok;
    auto next = [&](const char* what) {
      if (!std::getline(is, tok, ','))
        throw std::runtime_error("class table " + path + ": missing " + what +
                                 " in line: " + line);
      return tok;
    };
    e.index = std::stoi(next("index"));
    e.name = next("name");
    e.color[0] = static_cast<std::uint8_t>(std::stoi(next("r")));
    e.color[1] = static_cast<std::uint8_t>(std::stoi(next("g")));
    e.color[2] = static_cast<std::uint8_t>(std::stoi(next("b")));
    e.ciw = std::stod(next("ciw"));
    entries.push_back(std::move(e));
  }
  return ClassTable(std::move(entries));
}

void ClassTable::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write class table " + path);
  f << "# index,name,r,g,b,ciw\n";
  for (const ClassEntry& e : entries_) {
    f << e.index << "," << e.name << "," << int(e.color[0]) << ","
      << int(e.color[1]) << "," << int(e.color[2]) << ",";
    std::ostringstream ciw;
    ciw.precision(10);
    ciw << e.ciw;
    f << ciw.str() << "\n";
  }
}

ClassTable ClassTable::sewer_default() {
  // CIW values from the sewer-culvert inspection class list; the palette is
  // an arbitrary distinct-color coding (documented in the README).
  return ClassTable({
      {0, "Background", {0, 0, 0}, 0.0},
      {1, "Water Level", {0, 64, 255}, 0.0310},
      {2, "Cracks", {255, 0, 0}, 1.0000},
      {3, "Roots", {0, 200, 0}, 1.0000},
      {4, "Holes", {255, 255, 0}, 1.0000},
      {5, "Joint Problems", {255, 0, 255}, 0.6419},
      {6, "Deformation", {0, 255, 255}, 0.1622},
      {7, "Fracture", {255, 128, 0}, 0.5100},
      {8, "Encrustation/Deposits", {128, 0, 255}, 0.3518},
      {9, "Loose Gasket", {0, 128, 128}, 0.5419},
  });
}

ClassTable ClassTable::binary_default() {
  return ClassTable({
      {0, "Background", {0, 0, 0}, 0.0},
      {1, "Foreground", {255, 255, 255}, 1.0},
  });
}

int ClassTable::index_of_color(std::uint8_t r, std::uint8_t g,
                               std::uint8_t b) const {
  for (const ClassEntry& e : entries_)
    if (e.color[0] == r && e.color[1] == g && e.color[2] == b) return e.index;
  return -1;
}

int ClassTable::index_of_name(const std::string& name) const {
  for (const ClassEntry& e : entries_)
    if (e.name == name) return e.index;
  return -1;
}

std::vector<double> ClassTable::loss_weights(double background_weight) const {
  std::vector<double> w;
  w.reserve(entries_.size());
  for (const ClassEntry& e : entries_)
    w.push_back(e.index == 0 ? background_weight : e.ciw);
  return w;
}

std::vector<double> ClassTable::ciw_values() const {
  std::vector<double> w;
  for (const ClassEntry& e : entries_) w.push_back(e.ciw);
  return w;
}

}  // namespace daufi::data
