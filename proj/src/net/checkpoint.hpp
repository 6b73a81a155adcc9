#pragma once

#include <memory>
#include <string>
#include <vector>

#include "net/network.hpp"

namespace daufi::net {

// Optimizer and loop state carried alongside the weights so a run can resume
// bit-for-bit. `train_json` is owned by the training loop; the checkpoint
// treats it as opaque.
struct CheckpointExtra {
  std::string train_json;
  bool has_adam = false;
  std::int64_t adam_t = 0;
  std::vector<Tensor> adam_m, adam_v;  // aligned with parameter order
};

// Named-weight container with a JSON config header (format documented in the
// README). Writes are atomic (temp file + rename).
void save_checkpoint(const std::string& path, const SegmentationModel& model,
                     const CheckpointExtra* extra = nullptr);

std::unique_ptr<SegmentationModel> load_checkpoint(
    const std::string& path, CheckpointExtra* extra_out = nullptr);

}  // namespace daufi::net
