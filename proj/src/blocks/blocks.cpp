#include "blocks/blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace daufi::blocks {

void BlockConfig::validate() const {
  if (in_channels <= 0 || out_channels <= 0)
    throw std::invalid_argument("BlockConfig: channel counts must be positive");
  if (kernel_sizes.empty())
    throw std::invalid_argument("BlockConfig: need at least one kernel size");
  for (int k : kernel_sizes)
    if (k <= 0 || k % 2 == 0)
      throw std::invalid_argument("BlockConfig: kernel sizes must be odd and "
                                  "positive, got " + std::to_string(k));
  if (pointwise_fraction <= 0.0 || pointwise_fraction > 1.0)
    throw std::invalid_argument("BlockConfig: pointwise_fraction must be in (0,1]");
  const double pw = pointwise_fraction * out_channels;
  if (std::abs(pw - std::round(pw)) > 1e-9 || std::round(pw) < 1.0)
    throw std::invalid_argument(
        "BlockConfig: out_channels * pointwise_fraction must be a positive "
        "integer (out=" + std::to_string(out_channels) + ")");
  if (se_ratio_pair.first >= se_ratio_pair.second)
    throw std::invalid_argument("BlockConfig: require r_low < r_high");
  if (se_ratio_pair.first <= 0)
    throw std::invalid_argument("BlockConfig: ratios must be positive");
  if (out_channels / se_ratio_pair.second < 1)
    throw std::invalid_argument("BlockConfig: out_channels / r_high must be >= 1");
}

int BlockConfig::pointwise_channels() const {
  return static_cast<int>(std::round(pointwise_fraction * out_channels));
}

// ---------------------------------------------------------------------------

MultiscaleDwsBlock::MultiscaleDwsBlock(ParamStore& ps,
                                       const std::string& prefix,
                                       const BlockConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int ci = cfg.in_channels, co = cfg.out_channels;
  const bool bias = !cfg.use_batchnorm;
  for (int k : cfg.kernel_sizes) {
    DwsBranch br;
    const std::string bp = prefix + ".ms.dws" + std::to_string(k);
    br.dw = nn::DepthwiseConv2dLayer(ps, bp + ".dw", k, ci, rng);
    if (cfg.use_batchnorm) br.bn_dw = nn::BatchNormLayer(ps, bp + ".bn_dw", ci);
    br.pw = nn::Conv2dLayer(ps, bp + ".pw", 1, 1, ci, co, bias, rng);
    if (cfg.use_batchnorm) br.bn_pw = nn::BatchNormLayer(ps, bp + ".bn_pw", co);
    dws_.push_back(std::move(br));
  }
  const int pw_ch = cfg_.pointwise_channels();
  reduce1x1_ = nn::Conv2dLayer(ps, prefix + ".ms.red1x1", 1, 1, ci, pw_ch,
                               bias, rng);
  if (cfg.use_batchnorm)
    bn_reduce_ = nn::BatchNormLayer(ps, prefix + ".ms.bn_red", pw_ch);
  const int concat_ch = static_cast<int>(cfg.kernel_sizes.size()) * co + pw_ch;
  proj_ = nn::Conv2dLayer(ps, prefix + ".ms.proj", 1, 1, concat_ch, co, bias,
                          rng);
  if (cfg.use_batchnorm)
    bn_proj_ = nn::BatchNormLayer(ps, prefix + ".ms.bn_proj", co);
}

Var MultiscaleDwsBlock::forward(const Var& x, const Context& ctx) const {
  if (x.shape().c != cfg_.in_channels)
    throw std::invalid_argument("multiscale_dws_block: expected " +
                                std::to_string(cfg_.in_channels) +
                                " input channels, got " +
                                std::to_string(x.shape().c));
  std::vector<Var> branches;
  for (const DwsBranch& br : dws_) {
    Var v = br.dw(x);
    if (cfg_.use_batchnorm) v = br.bn_dw(v, ctx);
    v = br.pw(v);
    if (cfg_.use_batchnorm) v = br.bn_pw(v, ctx);
    branches.push_back(nn::relu(v));
  }
  Var r = reduce1x1_(x);
  if (cfg_.use_batchnorm) r = bn_reduce_(r, ctx);
  branches.push_back(nn::relu(r));

  Var cat = nn::concat_channels(branches);
  Var p = proj_(cat);
  if (cfg_.use_batchnorm) p = bn_proj_(p, ctx);
  return nn::relu(p);
}

// ---------------------------------------------------------------------------

namespace {

int bottleneck_width(int channels, int ratio) {
  const int w = channels / ratio;
  if (w < 1)
    throw std::invalid_argument("squeeze-excitation: channels / ratio < 1 (C=" +
                                std::to_string(channels) + ", r=" +
                                std::to_string(ratio) + ")");
  return w;
}

void check_ratio_pair(int channels, std::pair<int, int> rp) {
  if (rp.first >= rp.second)
    throw std::invalid_argument("squeeze-excitation: require r_low < r_high");
  if (channels < rp.second)
    throw std::invalid_argument("squeeze-excitation: channels must be >= r_high");
}

}  // namespace

ChannelSE::ChannelSE(ParamStore& ps, const std::string& prefix, int channels,
                     std::pair<int, int> ratio_pair, bool fixed_single,
                     Rng& rng)
    : channels_(channels), fixed_single_(fixed_single) {
  check_ratio_pair(channels, ratio_pair);
  auto make_path = [&](const std::string& name, int ratio) {
    Path p;
    const int w = bottleneck_width(channels, ratio);
    p.squeeze = nn::Conv2dLayer(ps, prefix + name + ".squeeze", 1, 1, channels,
                                w, true, rng);
    p.excite = nn::Conv2dLayer(ps, prefix + name + ".excite", 1, 1, w,
                               channels, true, rng);
    return p;
  };
  if (fixed_single_) {
    hi_ = make_path(".r" + std::to_string(ratio_pair.second),
                    ratio_pair.second);
  } else {
    lo_ = make_path(".lo", ratio_pair.first);
    hi_ = make_path(".hi", ratio_pair.second);
    alpha_ = ps.create(prefix + ".alpha", nn::Shape{1, 1, 1, 1});
  }
}

Var ChannelSE::gate_map(const Var& x) const {
  if (x.shape().c != channels_)
    throw std::invalid_argument("channel_se: channel mismatch");
  Var s = nn::global_avg_pool(x);
  auto run_path = [&](const Path& p) {
    return nn::sigmoid(p.excite(nn::relu(p.squeeze(s))));
  };
  if (fixed_single_) return run_path(hi_);
  Var t = nn::sigmoid(Var(alpha_));
  return nn::blend(t, run_path(lo_), run_path(hi_));
}

Var ChannelSE::forward(const Var& x) const {
  return nn::scale_channels(x, gate_map(x));
}

SpatialSE::SpatialSE(ParamStore& ps, const std::string& prefix, int channels,
                     std::pair<int, int> ratio_pair, bool fixed_single,
                     Rng& rng)
    : channels_(channels), fixed_single_(fixed_single) {
  check_ratio_pair(channels, ratio_pair);
  auto make_path = [&](const std::string& name, int ratio) {
    Path p;
    const int w = bottleneck_width(channels, ratio);
    p.squeeze = nn::Conv2dLayer(ps, prefix + name + ".squeeze", 1, 1, channels,
                                w, true, rng);
    p.excite = nn::Conv2dLayer(ps, prefix + name + ".excite", 1, 1, w, 1, true,
                               rng);
    return p;
  };
  if (fixed_single_) {
    hi_ = make_path(".r" + std::to_string(ratio_pair.second),
                    ratio_pair.second);
  } else {
    lo_ = make_path(".lo", ratio_pair.first);
    hi_ = make_path(".hi", ratio_pair.second);
    alpha_ = ps.create(prefix + ".alpha", nn::Shape{1, 1, 1, 1});
  }
}

Var SpatialSE::gate_map(const Var& x) const {
  if (x.shape().c != channels_)
    throw std::invalid_argument("spatial_se: channel mismatch");
  auto run_path = [&](const Path& p) {
    return nn::sigmoid(p.excite(nn::relu(p.squeeze(x))));
  };
  if (fixed_single_) return run_path(hi_);
  Var t = nn::sigmoid(Var(alpha_));
  return nn::blend(t, run_path(lo_), run_path(hi_));
}

Var SpatialSE::forward(const Var& x) const {
  return nn::scale_spatial(x, gate_map(x));
}

ConcurrentScse::ConcurrentScse(ParamStore& ps, const std::string& prefix,
                               int channels, std::pair<int, int> ratio_pair,
                               bool fixed_single, Rng& rng)
    : cse_(ps, prefix + ".scse.cse", channels, ratio_pair, fixed_single, rng),
      sse_(ps, prefix + ".scse.sse", channels, ratio_pair, fixed_single, rng) {}

Var ConcurrentScse::forward(const Var& x) const {
  return nn::add(cse_.forward(x), sse_.forward(x));
}

DualAttentiveBlock::DualAttentiveBlock(ParamStore& ps,
                                       const std::string& prefix,
                                       const BlockConfig& cfg, Rng& rng)
    : ms_(ps, prefix, cfg, rng),
      scse_(ps, prefix, cfg.out_channels, cfg.se_ratio_pair,
            cfg.se_fixed_single, rng) {}

Var DualAttentiveBlock::forward(const Var& x, const Context& ctx) const {
  Var m = ms_.forward(x, ctx);
  return nn::add(m, scse_.forward(m));
}

// ---------------------------------------------------------------------------

AttentionGate::AttentionGate(ParamStore& ps, const std::string& prefix,
                             int skip_channels, int gating_channels, Rng& rng)
    : skip_channels_(skip_channels), gating_channels_(gating_channels) {
  const int inter = std::max(1, skip_channels / 2);
  theta_ = nn::Conv2dLayer(ps, prefix + ".theta", 1, 1, skip_channels, inter,
                           true, rng);
  phi_ = nn::Conv2dLayer(ps, prefix + ".phi", 1, 1, gating_channels, inter,
                         true, rng);
  psi_ = nn::Conv2dLayer(ps, prefix + ".psi", 1, 1, inter, 1, true, rng);
}

Var AttentionGate::coefficient_map(const Var& skip, const Var& gating) const {
  const nn::Shape ss = skip.shape(), gs = gating.shape();
  if (ss.c != skip_channels_ || gs.c != gating_channels_)
    throw std::invalid_argument("attention_gate: channel mismatch");
  if (gs.h * 2 != ss.h || gs.w * 2 != ss.w)
    throw std::invalid_argument(
        "attention_gate: gating must have half the skip resolution (skip " +
        ss.str() + ", gating " + gs.str() + ")");
  Var g_up = nn::upsample_nearest2(gating);
  Var a = nn::relu(nn::add(theta_(skip), phi_(g_up)));
  return nn::sigmoid(psi_(a));
}

Var AttentionGate::forward(const Var& skip, const Var& gating) const {
  return nn::scale_spatial(skip, coefficient_map(skip, gating));
}

}  // namespace daufi::blocks
