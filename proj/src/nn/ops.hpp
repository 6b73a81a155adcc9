#pragma once

#include <vector>

#include "nn/graph.hpp"
#include "nn/rng.hpp"

namespace daufi::nn {

// Elementwise
Var add(const Var& a, const Var& b);          // same shape
Var mul(const Var& a, const Var& b);          // same shape
Var scale(const Var& a, double k);
Var relu(const Var& x);
Var sigmoid(const Var& x);

// Broadcast multiplies used by the attention units.
Var scale_channels(const Var& x, const Var& gates);  // gates: (B,1,1,C)
Var scale_spatial(const Var& x, const Var& map);     // map:   (B,H,W,1)

// out = t*a + (1-t)*b with a learnable scalar t of shape (1,1,1,1).
Var blend(const Var& t, const Var& a, const Var& b);

Var concat_channels(const std::vector<Var>& xs);

// Convolutions, stride 1, "same" padding (odd kernels only).
// weight: (kh,kw,Ci,Co) stored in Shape{n=kh,h=kw,w=Ci,c=Co}; bias: (1,1,1,Co)
// or an empty Var for none.
Var conv2d(const Var& x, const Var& w, const Var& b);
// weight: Shape{kh,kw,1,C}
Var depthwise_conv2d(const Var& x, const Var& w);
// 2x2 stride-2 transpose convolution; weight Shape{2,2,Ci,Co}.
Var conv2d_transpose2(const Var& x, const Var& w, const Var& b);

Var maxpool2(const Var& x);            // 2x2 stride 2; H,W must be even
Var global_avg_pool(const Var& x);     // -> (B,1,1,C)
Var upsample_nearest2(const Var& x);   // -> (B,2H,2W,C)

Var softmax_channels(const Var& x);

// Batch-style normalization over (batch, height, width) per channel.
// Running statistics live outside the tape; training mode normalizes with
// batch statistics and updates the running ones, eval mode uses the stored
// statistics.
struct BnStats {
  Tensor mean, var;  // each (1,1,1,C)
  bool initialized = false;
};
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BnStats* stats,
               bool training, double momentum = 0.9, double eps = 1e-5);

Var dropout(const Var& x, double rate, Rng& rng, bool training);

// Mean over all pixels of -w[gt] * log(p[gt] + eps). gt is a flat class-index
// buffer of length B*H*W in row-major (b,y,x) order; weights has one entry
// per class (empty = all ones).
Var weighted_ce(const Var& probs, const std::vector<std::int32_t>& gt,
                const std::vector<double>& class_weights, double eps = 1e-12);

Var sum_all(const Var& x);  // scalar, mostly for gradient tests

// --- plain tensor utilities (outside the tape) ---

// Area-average downsampling by an integer factor (dims must divide).
Tensor avg_downsample(const Tensor& t, int factor);

// Per-pixel argmax over channels, row-major (b,y,x) order.
std::vector<std::int32_t> argmax_channels(const Tensor& t);

}  // namespace daufi::nn
