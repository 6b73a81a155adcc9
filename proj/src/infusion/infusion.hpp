#pragma once

#include <string>
#include <vector>

#include "features/extractors.hpp"
#include "nn/layers.hpp"

namespace daufi::infusion {

using nn::ParamStore;
using nn::Rng;
using nn::Tensor;
using nn::Var;

// Where and what to inject. `stack_channels` declares the per-site feature
// channel count the adapter is built against; the adapter constructor
// rejects a mismatch against the actual counts it is bound to.
struct InjectionPlan {
  std::vector<int> sites;  // encoder layer indices
  std::vector<std::vector<std::string>> extractors;  // ids per site
  std::vector<int> stack_channels;                   // declared per site
  bool add_projected_input = true;  // stack + projected layer input vs stack only
  bool trace = false;               // persist modulation maps for debugging

  bool enabled() const { return !sites.empty(); }
  void validate(int network_depth) const;

  // Convenience: same extractor set on every site, channels resolved from
  // the extractor config.
  static InjectionPlan make(const std::vector<int>& sites,
                            const std::vector<std::string>& extractor_ids,
                            const features::ExtractorConfig& cfg);
};

// Per-site weights: alignment convolution on the feature stack, a 1x1
// projection of the site input onto the stack width, and the single-filter
// focus convolution that produces the modulation map.
class InjectionAdapter {
 public:
  InjectionAdapter() = default;  // identity: injection disabled
  InjectionAdapter(ParamStore& ps, const std::string& prefix,
                   const InjectionPlan& plan,
                   const std::vector<int>& actual_stack_channels,
                   const std::vector<int>& site_input_channels, Rng& rng);

  bool enabled() const { return !sites_.empty(); }
  int num_sites() const { return static_cast<int>(sites_.size()); }
  int site_index(int pos) const { return sites_.at(pos); }
  int stack_channels(int pos) const { return stack_channels_.at(pos); }

  // a = align(stack); b = a (+ proj(site_input)); m = sigmoid(focus(b));
  // returns site_input * m. Both tensors share spatial dims (the caller
  // downsamples the stack to the site resolution).
  Var inject(int pos, const Var& site_input, const Var& stack) const;

  // Modulation map alone, (B,H,W,1) in (0,1).
  Var modulation_map(int pos, const Var& site_input, const Var& stack) const;

 private:
  struct Site {
    nn::Conv2dLayer align;  // 3x3, F -> F
    nn::Conv2dLayer proj;   // 1x1, C_site -> F
    nn::Conv2dLayer focus;  // 1x1, F -> 1
  };
  std::vector<int> sites_;
  std::vector<int> stack_channels_;
  std::vector<Site> site_weights_;
  bool add_projected_input_ = true;
};

// FeatureStack -> (1,H,W,F) tensor in stack channel order.
Tensor stack_to_tensor(const features::FeatureStack& stack);

}  // namespace daufi::infusion
