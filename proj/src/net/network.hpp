#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "blocks/blocks.hpp"
#include "infusion/infusion.hpp"

namespace daufi::net {

using nn::Context;
using nn::Tensor;
using nn::Var;

enum class Variant { kP1, kP2, kP3, kP4, kP5, kP6, kUnetBaseline };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& s);
const std::vector<Variant>& ablation_variants();  // P1..P6

// Block placement for one variant (Table of the P1-P6 study).
struct Placement {
  bool dab_encoder = false;
  bool dab_decoder = false;
  bool dab_skips = false;
  bool gates = false;
};
Placement placement(Variant v);

struct NetworkConfig {
  int num_classes = 2;
  int depth = 4;              // encoder levels; bottleneck sits below them
  int base_filters = 22;      // doubled per level; tuned for the param budget
  Variant variant = Variant::kP6;
  double dropout_rate = 0.2;
  int input_channels = 3;
  std::pair<int, int> se_ratio_pair{4, 16};
  bool se_fixed_single = false;  // original scSE: one fixed ratio, no blend
  std::optional<infusion::InjectionPlan> injection;

  void validate() const;
  int filters_at(int level) const { return base_filters << level; }
  int bottleneck_filters() const { return base_filters << depth; }

  std::string to_json() const;
  static NetworkConfig from_json(const std::string& json_text);
};

// The assembled encoder-decoder. Weights are created deterministically from
// the init seed; forward is pure given (weights, input, mode).
class SegmentationModel {
 public:
  explicit SegmentationModel(NetworkConfig cfg, std::uint64_t init_seed = 1);

  const NetworkConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  std::int64_t parameter_count() const { return params_.total_count(); }

  // site_stacks: one tensor per injection site, batch-aligned with x, at
  // full input resolution (the model downsamples per site). Must be null
  // iff the config carries no injection plan.
  Var forward(const Tensor& x, const std::vector<Tensor>* site_stacks,
              Context& ctx) const;

  // Eval-mode convenience returning the probability map.
  Tensor predict(const Tensor& x,
                 const std::vector<Tensor>* site_stacks = nullptr) const;

  // Per-module parameter counts (prefix -> count), for the params report.
  std::vector<std::pair<std::string, std::int64_t>> parameter_groups() const;

  // Modulation maps of the last forward, one per injection site; populated
  // only when the plan's trace flag is set.
  const std::vector<Tensor>& trace_maps() const { return trace_maps_; }

 private:
  struct LevelBlock {
    bool is_dab = false;
    blocks::DualAttentiveBlock dab;
    nn::Conv2dLayer c1, c2;
    nn::BatchNormLayer b1, b2;

    Var forward(const Var& x, const Context& ctx) const;
  };

  LevelBlock make_level(const std::string& prefix, int in_ch, int out_ch,
                        bool use_dab, nn::Rng& rng);

  NetworkConfig cfg_;
  nn::ParamStore params_;
  std::vector<LevelBlock> encoder_;
  LevelBlock bottleneck_;
  std::vector<LevelBlock> decoder_;           // index 0 = shallowest level
  std::vector<blocks::DualAttentiveBlock> skip_dabs_;
  std::vector<blocks::AttentionGate> gates_;  // index 0 = shallowest level
  std::vector<nn::ConvTranspose2Layer> ups_;
  nn::Conv2dLayer head_;
  infusion::InjectionAdapter adapter_;
  mutable std::vector<Tensor> trace_maps_;
};

std::unique_ptr<SegmentationModel> build_model(const NetworkConfig& cfg,
                                               std::uint64_t init_seed = 1);

// Six models P1..P6 sharing everything but the block placement.
std::vector<std::unique_ptr<SegmentationModel>> build_ablation_suite(
    const NetworkConfig& base, std::uint64_t init_seed = 1);

}  // namespace daufi::net
