#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nn/layers.hpp"

namespace daufi::blocks {

using nn::Context;
using nn::ParamStore;
using nn::Rng;
using nn::Var;

struct BlockConfig {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<int> kernel_sizes{3, 5};
  double pointwise_fraction = 0.5;            // share of out_channels on the 1x1 branch
  std::pair<int, int> se_ratio_pair{4, 16};   // (r_low, r_high)
  bool use_batchnorm = true;
  bool se_fixed_single = false;  // original-scSE mode: one fixed ratio (r_high), no blend

  // Throws std::invalid_argument on any violated invariant.
  void validate() const;
  // Channel count of the reduced 1x1 branch.
  int pointwise_channels() const;
};

// Parallel multiscale stage: one depthwise-separable branch per kernel size
// plus a reduced 1x1 branch, concatenated and projected back to out_channels.
class MultiscaleDwsBlock {
 public:
  MultiscaleDwsBlock() = default;
  MultiscaleDwsBlock(ParamStore& ps, const std::string& prefix,
                     const BlockConfig& cfg, Rng& rng);

  Var forward(const Var& x, const Context& ctx) const;

 private:
  struct DwsBranch {
    nn::DepthwiseConv2dLayer dw;
    nn::BatchNormLayer bn_dw;
    nn::Conv2dLayer pw;
    nn::BatchNormLayer bn_pw;
  };
  BlockConfig cfg_;
  std::vector<DwsBranch> dws_;
  nn::Conv2dLayer reduce1x1_;
  nn::BatchNormLayer bn_reduce_;
  nn::Conv2dLayer proj_;
  nn::BatchNormLayer bn_proj_;
};

// Channel squeeze-and-excitation with two excitation paths (ratios r_low and
// r_high) blended by a sigmoid-squashed learnable scalar.
class ChannelSE {
 public:
  ChannelSE() = default;
  ChannelSE(ParamStore& ps, const std::string& prefix, int channels,
            std::pair<int, int> ratio_pair, bool fixed_single, Rng& rng);

  Var forward(const Var& x) const;
  Var gate_map(const Var& x) const;  // (B,1,1,C) gates in (0,1)

 private:
  struct Path {
    nn::Conv2dLayer squeeze, excite;
  };
  int channels_ = 0;
  bool fixed_single_ = false;
  Path lo_, hi_;
  nn::NodeRef alpha_;
};

// Spatial squeeze-and-excitation producing a single-channel map, same
// two-path learnable blend as ChannelSE.
class SpatialSE {
 public:
  SpatialSE() = default;
  SpatialSE(ParamStore& ps, const std::string& prefix, int channels,
            std::pair<int, int> ratio_pair, bool fixed_single, Rng& rng);

  Var forward(const Var& x) const;
  Var gate_map(const Var& x) const;  // (B,H,W,1) map in (0,1)

 private:
  struct Path {
    nn::Conv2dLayer squeeze, excite;
  };
  int channels_ = 0;
  bool fixed_single_ = false;
  Path lo_, hi_;
  nn::NodeRef alpha_;
};

// cSE(x) + sSE(x), fused by addition.
class ConcurrentScse {
 public:
  ConcurrentScse() = default;
  ConcurrentScse(ParamStore& ps, const std::string& prefix, int channels,
                 std::pair<int, int> ratio_pair, bool fixed_single, Rng& rng);

  Var forward(const Var& x) const;

  const ChannelSE& cse() const { return cse_; }
  const SpatialSE& sse() const { return sse_; }

 private:
  ChannelSE cse_;
  SpatialSE sse_;
};

// Dual Attentive Block: m = multiscale(x); out = m + scSE(m).
class DualAttentiveBlock {
 public:
  DualAttentiveBlock() = default;
  DualAttentiveBlock(ParamStore& ps, const std::string& prefix,
                     const BlockConfig& cfg, Rng& rng);

  Var forward(const Var& x, const Context& ctx) const;

  const MultiscaleDwsBlock& multiscale() const { return ms_; }
  const ConcurrentScse& scse() const { return scse_; }

 private:
  MultiscaleDwsBlock ms_;
  ConcurrentScse scse_;
};

// Additive attention gate. The gating signal has half the spatial resolution
// of the skip tensor; the produced coefficient map multiplies the skip.
class AttentionGate {
 public:
  AttentionGate() = default;
  AttentionGate(ParamStore& ps, const std::string& prefix, int skip_channels,
                int gating_channels, Rng& rng);

  Var forward(const Var& skip, const Var& gating) const;
  Var coefficient_map(const Var& skip, const Var& gating) const;

 private:
  int skip_channels_ = 0;
  int gating_channels_ = 0;
  nn::Conv2dLayer theta_, phi_, psi_;
};

}  // namespace daufi::blocks
