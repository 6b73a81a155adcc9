#pragma once

#include "data/dataset.hpp"

namespace daufi::data {

// Desk-scale synthetic sewer-style dataset: value-noise background plus
// class-distinct primitives (polylines, branching strokes, ellipses,
// texture patches, ...) with matching mask regions. Pure function of
// (num, size, seed, table).
std::vector<Sample> generate_synthetic(int num, int height, int width,
                                       std::uint64_t seed,
                                       const ClassTable& table);

}  // namespace daufi::data
