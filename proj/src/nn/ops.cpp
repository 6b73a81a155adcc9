#include "nn/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace daufi::nn {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

NodeRef new_node(Tensor value, std::vector<NodeRef> inputs) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs)
    if (in->requires_grad) n->requires_grad = true;
  return n;
}

bool wants(const NodeRef& n) { return n->requires_grad; }

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape().str() + " vs " + b.shape().str());
}

// im2col for stride-1 "same" convolution: (B*H*W, kh*kw*Ci), zero padded.
Tensor im2col(const Tensor& x, int kh, int kw) {
  const int B = x.n(), H = x.h(), W = x.w(), C = x.c();
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  Tensor col(Shape{1, 1, B * H * W, kh * kw * C});
  double* cd = col.data();
  const double* xd = x.data();
  const std::int64_t row_len = static_cast<std::int64_t>(kh) * kw * C;
  for (int b = 0; b < B; ++b)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) {
        double* row = cd + (((std::int64_t)b * H + y) * W + xx) * row_len;
        for (int i = 0; i < kh; ++i) {
          const int yy = y + i - ph;
          if (yy < 0 || yy >= H) continue;
          for (int j = 0; j < kw; ++j) {
            const int xj = xx + j - pw;
            if (xj < 0 || xj >= W) continue;
            const double* src = xd + (((std::int64_t)b * H + yy) * W + xj) * C;
            std::copy(src, src + C, row + ((std::int64_t)i * kw + j) * C);
          }
        }
      }
  return col;
}

// Scatter-add of a column-gradient matrix back onto the input gradient.
void col2im_add(const Tensor& dcol, Tensor& dx, int kh, int kw) {
  const int B = dx.n(), H = dx.h(), W = dx.w(), C = dx.c();
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  const double* cd = dcol.data();
  double* xd = dx.data();
  const std::int64_t row_len = static_cast<std::int64_t>(kh) * kw * C;
  for (int b = 0; b < B; ++b)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) {
        const double* row = cd + (((std::int64_t)b * H + y) * W + xx) * row_len;
        for (int i = 0; i < kh; ++i) {
          const int yy = y + i - ph;
          if (yy < 0 || yy >= H) continue;
          for (int j = 0; j < kw; ++j) {
            const int xj = xx + j - pw;
            if (xj < 0 || xj >= W) continue;
            double* dst = xd + (((std::int64_t)b * H + yy) * W + xj) * C;
            const double* src = row + ((std::int64_t)i * kw + j) * C;
            for (int c = 0; c < C; ++c) dst[c] += src[c];
          }
        }
      }
}

void add_bias_rows(Tensor& out, const Tensor& bias) {
  const std::int64_t rows = out.size() / out.c();
  const int C = out.c();
  double* od = out.data();
  const double* bd = bias.data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (int c = 0; c < C; ++c) od[r * C + c] += bd[c];
}

void bias_grad_rows(const Tensor& dy, Tensor& db) {
  const std::int64_t rows = dy.size() / dy.c();
  const int C = dy.c();
  const double* dyd = dy.data();
  double* dbd = db.data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (int c = 0; c < C; ++c) dbd[c] += dyd[r * C + c];
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  const double* bd = b.value().data();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  auto n = new_node(std::move(out), {a.node, b.node});
  n->backward_fn = [](Node& nd) {
    for (int k = 0; k < 2; ++k) {
      NodeRef& in = nd.inputs[k];
      if (!wants(in)) continue;
      in->ensure_grad();
      for (std::int64_t i = 0; i < nd.grad.size(); ++i)
        in->grad[i] += nd.grad[i];
    }
  };
  return Var(n);
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  const double* bd = b.value().data();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  auto n = new_node(std::move(out), {a.node, b.node});
  n->backward_fn = [](Node& nd) {
    const Tensor& av = nd.inputs[0]->value;
    const Tensor& bv = nd.inputs[1]->value;
    if (wants(nd.inputs[0])) {
      nd.inputs[0]->ensure_grad();
      for (std::int64_t i = 0; i < nd.grad.size(); ++i)
        nd.inputs[0]->grad[i] += nd.grad[i] * bv[i];
    }
    if (wants(nd.inputs[1])) {
      nd.inputs[1]->ensure_grad();
      for (std::int64_t i = 0; i < nd.grad.size(); ++i)
        nd.inputs[1]->grad[i] += nd.grad[i] * av[i];
    }
  };
  return Var(n);
}

Var scale(const Var& a, double k) {
  Tensor out = a.value();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= k;
  auto n = new_node(std::move(out), {a.node});
  n->backward_fn = [k](Node& nd) {
    if (!wants(nd.inputs[0])) return;
    nd.inputs[0]->ensure_grad();
    for (std::int64_t i = 0; i < nd.grad.size(); ++i)
      nd.inputs[0]->grad[i] += k * nd.grad[i];
  };
  return Var(n);
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
  auto n = new_node(std::move(out), {x.node});
  n->backward_fn = [](Node& nd) {
    if (!wants(nd.inputs[0])) return;
    nd.inputs[0]->ensure_grad();
    const Tensor& xv = nd.inputs[0]->value;
    for (std::int64_t i = 0; i < nd.grad.size(); ++i)
      if (xv[i] > 0.0) nd.inputs[0]->grad[i] += nd.grad[i];
  };
  return Var(n);
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (std::int64_t i = 0; i < out.size(); ++i) {
    const double v = out[i];
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
  }
  auto n = new_node(std::move(out), {x.node});
  n->backward_fn = [](Node& nd) {
    if (!wants(nd.inputs[0])) return;
    nd.inputs[0]->ensure_grad();
    for (std::int64_t i = 0; i < nd.grad.size(); ++i) {
      const double s = nd.value[i];
      nd.inputs[0]->grad[i] += nd.grad[i] * s * (1.0 - s);
    }
  };
  return Var(n);
}

Var scale_channels(const Var& x, const Var& gates) {
  const Shape xs = x.shape(), gs = gates.shape();
  if (gs.n != xs.n || gs.h != 1 || gs.w != 1 || gs.c != xs.c)
    throw std::invalid_argument("scale_channels: gates must be (B,1,1,C), got " +
                                gs.str() + " for x " + xs.str());
  Tensor out = x.value();
  const double* gd = gates.value().data();
  const int C = xs.c;
  const std::int64_t hw = static_cast<std::int64_t>(xs.h) * xs.w;
  for (int b = 0; b < xs.n; ++b) {
    double* od = out.data() + b * hw * C;
    const double* g = gd + (std::int64_t)b * C;
    for (std::int64_t p = 0; p < hw; ++p)
      for (int c = 0; c < C; ++c) od[p * C + c] *= g[c];
  }
  auto n = new_node(std::move(out), {x.node, gates.node});
  n->backward_fn = [xs](Node& nd) {
    const int C = xs.c;
    const std::int64_t hw = static_cast<std::int64_t>(xs.h) * xs.w;
    const Tensor& xv = nd.inputs[0]->value;
    const Tensor& gv = nd.inputs[1]->value;
    if (wants(nd.inputs[0])) {
      nd.inputs[0]->ensure_grad();
      Tensor& dx = nd.inputs[0]->grad;
      for (int b = 0; b < xs.n; ++b)
        for (std::int64_t p = 0; p < hw; ++p)
          for (int c = 0; c < C; ++c) {
            const std::int64_t i = (b * hw + p) * C + c;
            dx[i] += nd.grad[i] * gv[(std::int64_t)b * C + c];
          }
    }
    if (wants(nd.inputs[1])) {
      nd.inputs[1]->ensure_grad();
      Tensor& dg = nd.inputs[1]->grad;
      for (int b = 0; b < xs.n; ++b)
        for (std::int64_t p = 0; p < hw; ++p)
          for (int c = 0; c < C; ++c) {
            const std::int64_t i = (b * hw + p) * C + c;
            dg[(std::int64_t)b * C + c] += nd.grad[i] * xv[i];
          }
    }
  };
  return Var(n);
}

Var scale_spatial(const Var& x, const Var& map) {
  const Shape xs = x.shape(), ms = map.shape();
  if (ms.n != xs.n || ms.h != xs.h || ms.w != xs.w || ms.c != 1)
    throw std::invalid_argument("scale_spatial: map must be (B,H,W,1), got " +
                                ms.str() + " for x " + xs.str());
  Tensor out = x.value();
  const double* md = map.value().data();
  const int C = xs.c;
  const std::int64_t npix = out.size() / C;
  for (std::int64_t p = 0; p < npix; ++p)
    for (int c = 0; c < C; ++c) out[p * C + c] *= md[p];
  auto n = new_node(std::move(out), {x.node, map.node});
  n->backward_fn = [C, npix](Node& nd) {
    const Tensor& xv = nd.inputs[0]->value;
    const Tensor& mv = nd.inputs[1]->value;
    if (wants(nd.inputs[0])) {
      nd.inputs[0]->ensure_grad();
      Tensor& dx = nd.inputs[0]->grad;
      for (std::int64_t p = 0; p < npix; ++p)
        for (int c = 0; c < C; ++c)
          dx[p * C + c] += nd.grad[p * C + c] * mv[p];
    }
    if (wants(nd.inputs[1])) {
      nd.inputs[1]->ensure_grad();
      Tensor& dm = nd.inputs[1]->grad;
      for (std::int64_t p = 0; p < npix; ++p) {
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += nd.grad[p * C + c] * xv[p * C + c];
        dm[p] += s;
      }
    }
  };
  return Var(n);
}

Var blend(const Var& t, const Var& a, const Var& b) {
  if (t.value().size() != 1)
    throw std::invalid_argument("blend: t must be a scalar");
  check_same_shape(a, b, "blend");
  const double tv = t.value()[0];
  Tensor out = a.value();
  const double* bd = b.value().data();
  for (std::int64_t i = 0; i < out.size(); ++i)
    out[i] = tv * out[i] + (1.0 - tv) * bd[i];
  auto n = new_node(std::move(out), {t.node, a.node, b.node});
  n->backward_fn = [tv](Node& nd) {
    const Tensor& av = nd.inputs[1]->value;
    const Tensor& bv = nd.inputs[2]->value;
    if (wants(nd.inputs[0])) {
      nd.inputs[0]->ensure_grad();
      double s = 0.0;
      for (std::int64_t i = 0; i < nd.grad.size(); ++i)
        s += nd.grad[i] * (av[i] - bv[i]);
      nd.inputs[0]->grad[0] += s;
    }
    if (wants(nd.inputs[1])) {
      nd.inputs[1]->ensure_grad();
      for (std::int64_t i = 0; i < nd.grad.size(); ++i)
        nd.inputs[1]->grad[i] += tv * nd.grad[i];
    }
    if (wants(nd.inputs[2])) {
      nd.inputs[2]->ensure_grad();
      for (std::int64_t i = 0; i < nd.grad.size(); ++i)
        nd.inputs[2]->grad[i] += (1.0 - tv) * nd.grad[i];
    }
  };
  return Var(n);
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: empty list");
  const Shape s0 = xs[0].shape();
  int ctot = 0;
  std::vector<int> offs;
  for (const Var& v : xs) {
    const Shape s = v.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw std::invalid_argument("concat_channels: spatial/batch mismatch");
    offs.push_back(ctot);
    ctot += s.c;
  }
  Tensor out(Shape{s0.n, s0.h, s0.w, ctot});
  const std::int64_t npix = static_cast<std::int64_t>(s0.n) * s0.h * s0.w;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& v = xs[k].value();
    const int c = v.c(), off = offs[k];
    for (std::int64_t p = 0; p < npix; ++p)
      std::copy(v.data() + p * c, v.data() + (p + 1) * c,
                out.data() + p * ctot + off);
  }
  std::vector<NodeRef> ins;
  for (const Var& v : xs) ins.push_back(v.node);
  auto n = new_node(std::move(out), std::move(ins));
  n->backward_fn = [offs, npix, ctot](Node& nd) {
    for (std::size_t k = 0; k < nd.inputs.size(); ++k) {
      NodeRef& in = nd.inputs[k];
      if (!wants(in)) continue;
      in->ensure_grad();
      const int c = in->value.c(), off = offs[k];
      for (std::int64_t p = 0; p < npix; ++p)
        for (int j = 0; j < c; ++j)
          in->grad[p * c + j] += nd.grad[p * ctot + off + j];
    }
  };
  return Var(n);
}

Var conv2d(const Var& x, const Var& w, const Var& b) {
  const Shape xs = x.shape(), ws = w.shape();
  const int kh = ws.n, kw = ws.h, ci = ws.w, co = ws.c;
  if (xs.c != ci)
    throw std::invalid_argument("conv2d: input channels " +
                                std::to_string(xs.c) + " != weight Ci " +
                                std::to_string(ci));
  if (kh % 2 == 0 || kw % 2 == 0)
    throw std::invalid_argument("conv2d: even kernel size " +
                                std::to_string(kh) + "x" + std::to_string(kw));
  if (b.defined() && (b.shape().c != co || b.value().size() != co))
    throw std::invalid_argument("conv2d: bias shape mismatch");

  const std::int64_t rows = static_cast<std::int64_t>(xs.n) * xs.h * xs.w;
  Tensor out(Shape{xs.n, xs.h, xs.w, co});
  const bool is1x1 = (kh == 1 && kw == 1);

  // 1x1 convolutions are plain GEMMs on the pixel rows; larger kernels go
  // through an im2col buffer that the backward pass reuses.
  auto col = std::make_shared<Tensor>();
  if (!is1x1) *col = im2col(x.value(), kh, kw);
  {
    CMapRM cm(is1x1 ? x.value().data() : col->data(), rows,
              (std::int64_t)kh * kw * ci);
    CMapRM wm(w.value().data(), (std::int64_t)kh * kw * ci, co);
    MapRM om(out.data(), rows, co);
    om.noalias() = cm * wm;
  }
  if (b.defined()) add_bias_rows(out, b.value());

  std::vector<NodeRef> ins{x.node, w.node};
  if (b.defined()) ins.push_back(b.node);
  auto n = new_node(std::move(out), std::move(ins));
  n->backward_fn = [kh, kw, ci, co, rows, col, is1x1, xs](Node& nd) {
    const std::int64_t K = (std::int64_t)kh * kw * ci;
    NodeRef& xin = nd.inputs[0];
    NodeRef& win = nd.inputs[1];
    CMapRM dym(nd.grad.data(), rows, co);
    if (wants(win)) {
      win->ensure_grad();
      CMapRM cm(is1x1 ? xin->value.data() : col->data(), rows, K);
      MapRM dwm(win->grad.data(), K, co);
      dwm.noalias() += cm.transpose() * dym;
    }
    if (nd.inputs.size() > 2 && wants(nd.inputs[2])) {
      nd.inputs[2]->ensure_grad();
      bias_grad_rows(nd.grad, nd.inputs[2]->grad);
    }
    if (wants(xin)) {
      xin->ensure_grad();
      CMapRM wm(win->value.data(), K, co);
      if (is1x1) {
        MapRM dxm(xin->grad.data(), rows, K);
        dxm.noalias() += dym * wm.transpose();
      } else {
        Tensor dcol(Shape{1, 1, (int)rows, (int)K});
        MapRM dcm(dcol.data(), rows, K);
        dcm.noalias() = dym * wm.transpose();
        col2im_add(dcol, xin->grad, kh, kw);
      }
    }
  };
  return Var(n);
}

Var depthwise_conv2d(const Var& x, const Var& w) {
  const Shape xs = x.shape(), ws = w.shape();
  const int kh = ws.n, kw = ws.h, C = ws.c;
  if (ws.w != 1 || xs.c != C)
    throw std::invalid_argument("depthwise_conv2d: weight must be (kh,kw,1,C) "
                                "with C matching input channels");
  if (kh % 2 == 0 || kw % 2 == 0)
    throw std::invalid_argument("depthwise_conv2d: even kernel size");
  const int B = xs.n, H = xs.h, W = xs.w;
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  Tensor out(Shape{B, H, W, C});
  const double* xd = x.value().data();
  const double* wd = w.value().data();
  for (int b = 0; b < B; ++b)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) {
        double* o = out.data() + (((std::int64_t)b * H + y) * W + xx) * C;
        for (int i = 0; i < kh; ++i) {
          const int yy = y + i - ph;
          if (yy < 0 || yy >= H) continue;
          for (int j = 0; j < kw; ++j) {
            const int xj = xx + j - pw;
            if (xj < 0 || xj >= W) continue;
            const double* xi =
                xd + (((std::int64_t)b * H + yy) * W + xj) * C;
            const double* wi = wd + ((std::int64_t)i * kw + j) * C;
            for (int c = 0; c < C; ++c) o[c] += xi[c] * wi[c];
          }
        }
      }
  auto n = new_node(std::move(out), {x.node, w.node});
  n->backward_fn = [B, H, W, C, kh, kw, ph, pw](Node& nd) {
    const Tensor& xv = nd.inputs[0]->value;
    const Tensor& wv = nd.inputs[1]->value;
    const bool wx = wants(nd.inputs[0]), ww = wants(nd.inputs[1]);
    if (wx) nd.inputs[0]->ensure_grad();
    if (ww) nd.inputs[1]->ensure_grad();
    for (int b = 0; b < B; ++b)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          const double* dy =
              nd.grad.data() + (((std::int64_t)b * H + y) * W + xx) * C;
          for (int i = 0; i < kh; ++i) {
            const int yy = y + i - ph;
            if (yy < 0 || yy >= H) continue;
            for (int j = 0; j < kw; ++j) {
              const int xj = xx + j - pw;
              if (xj < 0 || xj >= W) continue;
              const std::int64_t xo = (((std::int64_t)b * H + yy) * W + xj) * C;
              const std::int64_t wo = ((std::int64_t)i * kw + j) * C;
              if (wx)
                for (int c = 0; c < C; ++c)
                  nd.inputs[0]->grad[xo + c] += wv[wo + c] * dy[c];
              if (ww)
                for (int c = 0; c < C; ++c)
                  nd.inputs[1]->grad[wo + c] += xv[xo + c] * dy[c];
            }
          }
        }
  };
  return Var(n);
}

Var conv2d_transpose2(const Var& x, const Var& w, const Var& b) {
  const Shape xs = x.shape(), ws = w.shape();
  if (ws.n != 2 || ws.h != 2)
    throw std::invalid_argument("conv2d_transpose2: kernel must be 2x2");
  const int ci = ws.w, co = ws.c;
  if (xs.c != ci)
    throw std::invalid_argument("conv2d_transpose2: channel mismatch");
  const int B = xs.n, H = xs.h, W = xs.w;
  const std::int64_t rows = static_cast<std::int64_t>(B) * H * W;
  Tensor out(Shape{B, 2 * H, 2 * W, co});
  // Stride equals kernel size, so the four taps write disjoint pixels.
  Tensor slice(Shape{1, 1, (int)rows, co});
  for (int dy = 0; dy < 2; ++dy)
    for (int dx = 0; dx < 2; ++dx) {
      CMapRM xm(x.value().data(), rows, ci);
      CMapRM wm(w.value().data() + ((std::int64_t)dy * 2 + dx) * ci * co, ci,
                co);
      MapRM sm(slice.data(), rows, co);
      sm.noalias() = xm * wm;
      for (int bb = 0; bb < B; ++bb)
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx) {
            const double* src =
                slice.data() + (((std::int64_t)bb * H + y) * W + xx) * co;
            double* dst = out.data() + out.idx(bb, 2 * y + dy, 2 * xx + dx, 0);
            std::copy(src, src + co, dst);
          }
    }
  if (b.defined()) {
    if (b.value().size() != co)
      throw std::invalid_argument("conv2d_transpose2: bias shape mismatch");
    add_bias_rows(out, b.value());
  }
  std::vector<NodeRef> ins{x.node, w.node};
  if (b.defined()) ins.push_back(b.node);
  auto n = new_node(std::move(out), std::move(ins));
  n->backward_fn = [B, H, W, ci, co, rows](Node& nd) {
    NodeRef& xin = nd.inputs[0];
    NodeRef& win = nd.inputs[1];
    const bool wx = wants(xin), ww = wants(win);
    if (wx) xin->ensure_grad();
    if (ww) win->ensure_grad();
    if (nd.inputs.size() > 2 && wants(nd.inputs[2])) {
      nd.inputs[2]->ensure_grad();
      bias_grad_rows(nd.grad, nd.inputs[2]->grad);
    }
    if (!wx && !ww) return;
    Tensor dslice(Shape{1, 1, (int)rows, co});
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        for (int bb = 0; bb < B; ++bb)
          for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
              const double* src =
                  nd.grad.data() + nd.grad.idx(bb, 2 * y + dy, 2 * xx + dx, 0);
              double* dst =
                  dslice.data() + (((std::int64_t)bb * H + y) * W + xx) * co;
              std::copy(src, src + co, dst);
            }
        CMapRM dsm(dslice.data(), rows, co);
        if (ww) {
          CMapRM xm(xin->value.data(), rows, ci);
          MapRM dwm(win->grad.data() + ((std::int64_t)dy * 2 + dx) * ci * co,
                    ci, co);
          dwm.noalias() += xm.transpose() * dsm;
        }
        if (wx) {
          CMapRM wm(win->value.data() + ((std::int64_t)dy * 2 + dx) * ci * co,
                    ci, co);
          MapRM dxm(xin->grad.data(), rows, ci);
          dxm.noalias() += dsm * wm.transpose();
        }
      }
  };
  return Var(n);
}

Var maxpool2(const Var& x) {
  const Shape xs = x.shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0)
    throw std::invalid_argument("maxpool2: spatial dims must be even, got " +
                                xs.str());
  const int B = xs.n, H = xs.h, W = xs.w, C = xs.c;
  const int OH = H / 2, OW = W / 2;
  Tensor out(Shape{B, OH, OW, C});
  auto arg = std::make_shared<std::vector<std::int64_t>>(out.size());
  const Tensor& xv = x.value();
  for (int b = 0; b < B; ++b)
    for (int y = 0; y < OH; ++y)
      for (int xx = 0; xx < OW; ++xx)
        for (int c = 0; c < C; ++c) {
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t bi = -1;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::int64_t i = xv.idx(b, 2 * y + dy, 2 * xx + dx, c);
              if (xv[i] > best) {
                best = xv[i];
                bi = i;
              }
            }
          const std::int64_t o = out.idx(b, y, xx, c);
          out[o] = best;
          (*arg)[o] = bi;
        }
  auto n = new_node(std::move(out), {x.node});
  n->backward_fn = [arg](Node& nd) {
    if (!wants(nd.inputs[0])) return;
    nd.inputs[0]->ensure_grad();
    for (std::int64_t i = 0; i < nd.grad.size(); ++i)
      nd.inputs[0]->grad[(*arg)[i]] += nd.grad[i];
  };
  return Var(n);
}

Var global_avg_pool(const Var& x) {
  const Shape xs = x.shape();
  const int B = xs.n, C = xs.c;
  const std::int64_t hw = static_cast<std::int64_t>(xs.h) * xs.w;
  Tensor out(Shape{B, 1, 1, C});
  const double* xd = x.value().data();
  for (int b = 0; b < B; ++b) {
    double* o = out.data() + (std::int64_t)b * C;
    const double* xb = xd + b * hw * C;
    for (std::int64_t p = 0; p < hw; ++p)
      for (int c = 0; c < C; ++c) o[c] += xb[p * C + c];
    for (int c = 0; c < C; ++c) o[c] /= static_cast<double>(hw);
  }
  auto n = new_node(std::move(out), {x.node});
  n->backward_fn = [B, C, hw](Node& nd) {
    if (!wants(nd.inputs[0])) return;
    nd.inputs[0]->ensure_grad();
    Tensor& dx = nd.inputs[0]->grad;
    for (int b = 0; b < B; ++b) {
      const double* g = nd.grad.data() + (std::int64_t)b * C;
      double* dxb = dx.data() + b * hw * C;
      for (std::int64_t p = 0; p < hw; ++p)
        for (int c = 0; c < C; ++c)
          dxb[p * C + c] += g[c] / static_cast<double>(hw);
    }
  };
  return Var(n);
}

Var upsample_nearest2(const Var& x) {
  const Shape xs = x.shape();
  const int B = xs.n, H = xs.h, W = xs.w, C = xs.c;
  Tensor out(Shape{B, 2 * H, 2 * W, C});
  const Tensor& xv = x.value();
  for (int b = 0; b < B; ++b)
    for (int y = 0; y < 2 * H; ++y)
      for (int xx = 0; xx < 2 * W; ++xx)
        std::copy(xv.data() + xv.idx(b, y / 2, xx / 2, 0),
                  xv.data() + xv.idx(b, y / 2, xx / 2, 0) + C,
                  out.data() + out.idx(b, y, xx, 0));
  auto n = new_node(std::move(out), {x.node});
  n->backward_fn = [B, H, W, C](Node& nd) {
    if (!wants(nd.inputs[0])) return;
    nd.inputs[0]->ensure_grad();
    Tensor& dx = nd.inputs[0]->grad;
    for (int b = 0; b < B; ++b)
      for (int y = 0; y < 2 * H; ++y)
        for (int xx = 0; xx < 2 * W; ++xx) {
          const double* g = nd.grad.data() + nd.grad.idx(b, y, xx, 0);
          double* d = dx.data() + dx.idx(b, y / 2, xx / 2, 0);
          for (int c = 0; c < C; ++c) d[c] += g[c];
        }
  };
  return Var(n);
}

Var softmax_channels(const Var& x) {
  const Shape xs = x.shape();
  const int C = xs.c;
  const std::int64_t npix = x.value().size() / C;
  Tensor out = x.value();
  for (std::int64_t p = 0; p < npix; ++p) {
    double* row = out.data() + p * C;
    double m = row[0];
    for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
    double s = 0.0;
    for (int c = 0; c < C; ++c) {
      row[c] = std::exp(row[c] - m);
      s += row[c];
    }
    for (int c = 0; c < C; ++c) row[c] /= s;
  }
  auto n = new_node(std::move(out), {x.node});
  n->backward_fn = [C, npix](Node& nd) {
    if (!wants(nd.inputs[0])) return;
    nd.inputs[0]->ensure_grad();
    Tensor& dx = nd.inputs[0]->grad;
    for (std::int64_t p = 0; p < npix; ++p) {
      const double* s = nd.value.data() + p * C;
      const double* g = nd.grad.data() + p * C;
      double dot = 0.0;
      for (int c = 0; c < C; ++c) dot += g[c] * s[c];
      for (int c = 0; c < C; ++c) dx[p * C + c] += s[c] * (g[c] - dot);
    }
  };
  return Var(n);
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BnStats* stats,
               bool training, double momentum, double eps) {
  const Shape xs = x.shape();
  const int C = xs.c;
  if (gamma.value().size() != C || beta.value().size() != C)
    throw std::invalid_argument("batch_norm: gamma/beta must have C entries");
  const std::int64_t npix = x.value().size() / C;

  std::vector<double> mean(C, 0.0), var(C, 0.0), invstd(C, 0.0);
  const double* xd = x.value().data();
  if (training) {
    for (std::int64_t p = 0; p < npix; ++p)
      for (int c = 0; c < C; ++c) mean[c] += xd[p * C + c];
    for (int c = 0; c < C; ++c) mean[c] /= static_cast<double>(npix);
    for (std::int64_t p = 0; p < npix; ++p)
      for (int c = 0; c < C; ++c) {
        const double d = xd[p * C + c] - mean[c];
        var[c] += d * d;
      }
    for (int c = 0; c < C; ++c) var[c] /= static_cast<double>(npix);
    if (stats) {
      if (!stats->initialized) {
        stats->mean = Tensor(Shape{1, 1, 1, C});
        stats->var = Tensor(Shape{1, 1, 1, C}, 1.0);
        for (int c = 0; c < C; ++c) {
          stats->mean[c] = mean[c];
          stats->var[c] = var[c];
        }
        stats->initialized = true;
      } else {
        for (int c = 0; c < C; ++c) {
          stats->mean[c] = momentum * stats->mean[c] + (1.0 - momentum) * mean[c];
          stats->var[c] = momentum * stats->var[c] + (1.0 - momentum) * var[c];
        }
      }
    }
  } else {
    if (!stats || !stats->initialized) {
      // Identity statistics until something has been observed.
      for (int c = 0; c < C; ++c) var[c] = 1.0;
    } else {
      for (int c = 0; c < C; ++c) {
        mean[c] = stats->mean[c];
        var[c] = stats->var[c];
      }
    }
  }
  for (int c = 0; c < C; ++c) invstd[c] = 1.0 / std::sqrt(var[c] + eps);

  auto xhat = std::make_shared<Tensor>(xs);
  Tensor out(xs);
  const double* gm = gamma.value().data();
  const double* bt = beta.value().data();
  for (std::int64_t p = 0; p < npix; ++p)
    for (int c = 0; c < C; ++c) {
      const double h = (xd[p * C + c] - mean[c]) * invstd[c];
      (*xhat)[p * C + c] = h;
      out[p * C + c] = gm[c] * h + bt[c];
    }

  auto n = new_node(std::move(out), {x.node, gamma.node, beta.node});
  n->backward_fn = [C, npix, xhat, invstd, training](Node& nd) {
    const double* gm = nd.inputs[1]->value.data();
    if (wants(nd.inputs[2])) {
      nd.inputs[2]->ensure_grad();
      for (std::int64_t p = 0; p < npix; ++p)
        for (int c = 0; c < C; ++c)
          nd.inputs[2]->grad[c] += nd.grad[p * C + c];
    }
    if (wants(nd.inputs[1])) {
      nd.inputs[1]->ensure_grad();
      for (std::int64_t p = 0; p < npix; ++p)
        for (int c = 0; c < C; ++c)
          nd.inputs[1]->grad[c] += nd.grad[p * C + c] * (*xhat)[p * C + c];
    }
    if (!wants(nd.inputs[0])) return;
    nd.inputs[0]->ensure_grad();
    Tensor& dx = nd.inputs[0]->grad;
    if (!training) {
      for (std::int64_t p = 0; p < npix; ++p)
        for (int c = 0; c < C; ++c)
          dx[p * C + c] += nd.grad[p * C + c] * gm[c] * invstd[c];
      return;
    }
    // Batch statistics participate in the gradient.
    std::vector<double> mg(C, 0.0), mgh(C, 0.0);
    for (std::int64_t p = 0; p < npix; ++p)
      for (int c = 0; c < C; ++c) {
        mg[c] += nd.grad[p * C + c];
        mgh[c] += nd.grad[p * C + c] * (*xhat)[p * C + c];
      }
    for (int c = 0; c < C; ++c) {
      mg[c] /= static_cast<double>(npix);
      mgh[c] /= static_cast<double>(npix);
    }
    for (std::int64_t p = 0; p < npix; ++p)
      for (int c = 0; c < C; ++c)
        dx[p * C + c] += gm[c] * invstd[c] *
                         (nd.grad[p * C + c] - mg[c] -
                          (*xhat)[p * C + c] * mgh[c]);
  };
  return Var(n);
}

Var dropout(const Var& x, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  Tensor out = x.value();
  for (std::int64_t i = 0; i < out.size(); ++i) {
    const double m = rng.uniform() >= rate ? keep_scale : 0.0;
    (*mask)[i] = m;
    out[i] *= m;
  }
  auto n = new_node(std::move(out), {x.node});
  n->backward_fn = [mask](Node& nd) {
    if (!wants(nd.inputs[0])) return;
    nd.inputs[0]->ensure_grad();
    for (std::int64_t i = 0; i < nd.grad.size(); ++i)
      nd.inputs[0]->grad[i] += nd.grad[i] * (*mask)[i];
  };
  return Var(n);
}

Var weighted_ce(const Var& probs, const std::vector<std::int32_t>& gt,
                const std::vector<double>& class_weights, double eps) {
  const Shape ps = probs.shape();
  const int C = ps.c;
  const std::int64_t npix = probs.value().size() / C;
  if (static_cast<std::int64_t>(gt.size()) != npix)
    throw std::invalid_argument("weighted_ce: gt size mismatch");
  if (!class_weights.empty() && static_cast<int>(class_weights.size()) != C)
    throw std::invalid_argument("weighted_ce: weights size mismatch");
  const double* pd = probs.value().data();
  double loss = 0.0;
  for (std::int64_t p = 0; p < npix; ++p) {
    const std::int32_t g = gt[p];
    if (g < 0 || g >= C)
      throw std::invalid_argument("weighted_ce: class index out of range");
    const double w = class_weights.empty() ? 1.0 : class_weights[g];
    loss += -w * std::log(pd[p * C + g] + eps);
  }
  loss /= static_cast<double>(npix);
  auto n = new_node(Tensor::scalar(loss), {probs.node});
  auto gtc = std::make_shared<std::vector<std::int32_t>>(gt);
  auto wc = std::make_shared<std::vector<double>>(class_weights);
  n->backward_fn = [C, npix, gtc, wc, eps](Node& nd) {
    if (!wants(nd.inputs[0])) return;
    nd.inputs[0]->ensure_grad();
    const double g0 = nd.grad[0];
    const double* pd = nd.inputs[0]->value.data();
    Tensor& dp = nd.inputs[0]->grad;
    for (std::int64_t p = 0; p < npix; ++p) {
      const std::int32_t g = (*gtc)[p];
      const double w = wc->empty() ? 1.0 : (*wc)[g];
      dp[p * C + g] += g0 * (-w / ((pd[p * C + g] + eps) *
                                   static_cast<double>(npix)));
    }
  };
  return Var(n);
}

Var sum_all(const Var& x) {
  auto n = new_node(Tensor::scalar(x.value().sum()), {x.node});
  n->backward_fn = [](Node& nd) {
    if (!wants(nd.inputs[0])) return;
    nd.inputs[0]->ensure_grad();
    const double g = nd.grad[0];
    for (std::int64_t i = 0; i < nd.inputs[0]->grad.size(); ++i)
      nd.inputs[0]->grad[i] += g;
  };
  return Var(n);
}

Tensor avg_downsample(const Tensor& t, int factor) {
  if (factor <= 0) throw std::invalid_argument("avg_downsample: bad factor");
  if (factor == 1) return t;
  const Shape s = t.shape();
  if (s.h % factor != 0 || s.w % factor != 0)
    throw std::invalid_argument("avg_downsample: dims not divisible");
  Tensor out(Shape{s.n, s.h / factor, s.w / factor, s.c});
  const double norm = 1.0 / (static_cast<double>(factor) * factor);
  for (int b = 0; b < s.n; ++b)
    for (int y = 0; y < out.h(); ++y)
      for (int x = 0; x < out.w(); ++x)
        for (int c = 0; c < s.c; ++c) {
          double acc = 0.0;
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx)
              acc += t.at(b, y * factor + dy, x * factor + dx, c);
          out.at(b, y, x, c) = acc * norm;
        }
  return out;
}

std::vector<std::int32_t> argmax_channels(const Tensor& t) {
  const int C = t.c();
  const std::int64_t npix = t.size() / C;
  std::vector<std::int32_t> out(npix);
  const double* d = t.data();
  for (std::int64_t p = 0; p < npix; ++p) {
    int best = 0;
    double bv = d[p * C];
    for (int c = 1; c < C; ++c)
      if (d[p * C + c] > bv) {
        bv = d[p * C + c];
        best = c;
      }
    out[p] = best;
  }
  return out;
}

}  // namespace daufi::nn
