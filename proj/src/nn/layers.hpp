#pragma once

#include <string>

#include "nn/ops.hpp"
#include "nn/params.hpp"

namespace daufi::nn {

// Per-forward context threaded through every block.
struct Context {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout
};

struct Conv2dLayer {
  NodeRef w, b;  // b may be null

  Conv2dLayer() = default;
  Conv2dLayer(ParamStore& ps, const std::string& prefix, int kh, int kw,
              int ci, int co, bool bias, Rng& rng) {
    w = ps.create(prefix + ".w", Shape{kh, kw, ci, co});
    he_uniform_init(w->value, kh * kw * ci, rng);
    if (bias) b = ps.create(prefix + ".b", Shape{1, 1, 1, co});
  }

  Var operator()(const Var& x) const {
    return conv2d(x, Var(w), b ? Var(b) : Var());
  }
};

struct DepthwiseConv2dLayer {
  NodeRef w;

  DepthwiseConv2dLayer() = default;
  DepthwiseConv2dLayer(ParamStore& ps, const std::string& prefix, int k, int c,
                       Rng& rng) {
    w = ps.create(prefix + ".w", Shape{k, k, 1, c});
    he_uniform_init(w->value, k * k, rng);
  }

  Var operator()(const Var& x) const { return depthwise_conv2d(x, Var(w)); }
};

struct ConvTranspose2Layer {
  NodeRef w, b;

  ConvTranspose2Layer() = default;
  ConvTranspose2Layer(ParamStore& ps, const std::string& prefix, int ci,
                      int co, bool bias, Rng& rng) {
    w = ps.create(prefix + ".w", Shape{2, 2, ci, co});
    he_uniform_init(w->value, 4 * ci, rng);
    if (bias) b = ps.create(prefix + ".b", Shape{1, 1, 1, co});
  }

  Var operator()(const Var& x) const {
    return conv2d_transpose2(x, Var(w), b ? Var(b) : Var());
  }
};

struct BatchNormLayer {
  NodeRef gamma, beta;
  std::shared_ptr<BnStats> stats;

  BatchNormLayer() = default;
  BatchNormLayer(ParamStore& ps, const std::string& prefix, int c) {
    gamma = ps.create(prefix + ".gamma", Shape{1, 1, 1, c});
    gamma->value.fill(1.0);
    beta = ps.create(prefix + ".beta", Shape{1, 1, 1, c});
    stats = ps.create_stats(prefix + ".stats");
  }

  Var operator()(const Var& x, const Context& ctx) const {
    return batch_norm(x, Var(gamma), Var(beta), stats.get(), ctx.training);
  }
};

}  // namespace daufi::nn
