#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "blocks/blocks.hpp"
#include "testing_util.hpp"

using namespace daufi;
using blocks::AttentionGate;
using blocks::BlockConfig;
using blocks::ChannelSE;
using blocks::ConcurrentScse;
using blocks::DualAttentiveBlock;
using blocks::MultiscaleDwsBlock;
using blocks::SpatialSE;
using nn::Shape;
using nn::Tensor;
using nn::Var;
using testing::grad_check;
using testing::project_with;
using testing::random_tensor;

namespace {

// Saturates every SE excitation logit so gates become exactly 0 or 1.
void force_se_gates(nn::ParamStore& ps, const std::string& unit_prefix,
                    double logit) {
  for (const char* path : {".lo.excite.b", ".hi.excite.b"}) {
    ps.get(unit_prefix + path)->value.fill(logit);
    ps.get(unit_prefix + std::string(path).substr(0, std::string(path).size() - 2) + ".w")
        ->value.fill(0.0);
  }
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::int64_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("BlockConfig invariants") {
  BlockConfig cfg;
  cfg.in_channels = 8;
  cfg.out_channels = 16;
  CHECK_NOTHROW(cfg.validate());

  BlockConfig even = cfg;
  even.kernel_sizes = {3, 4};
  CHECK_THROWS_AS(even.validate(), std::invalid_argument);

  BlockConfig frac = cfg;
  frac.out_channels = 15;  // 15/2 is not an integer
  CHECK_THROWS_AS(frac.validate(), std::invalid_argument);

  BlockConfig ratio = cfg;
  ratio.se_ratio_pair = {16, 4};
  CHECK_THROWS_AS(ratio.validate(), std::invalid_argument);

  BlockConfig narrow = cfg;
  narrow.out_channels = 8;  // 8/16 < 1
  CHECK_THROWS_AS(narrow.validate(), std::invalid_argument);
}

TEST_CASE("multiscale_dws_block shape and zero propagation") {
  nn::Rng rng(5);
  nn::ParamStore ps;
  BlockConfig cfg;
  cfg.in_channels = 8;
  cfg.out_channels = 16;
  MultiscaleDwsBlock blk(ps, "b", cfg, rng);
  nn::Context ctx;
  ctx.training = true;

  Var x = nn::constant(random_tensor(Shape{1, 16, 16, 8}, rng));
  Var y = blk.forward(x, ctx);
  CHECK(y.shape() == Shape{1, 16, 16, 16});

  Var zeros = nn::constant(Tensor(Shape{1, 16, 16, 8}));
  Var yz = blk.forward(zeros, ctx);
  CHECK(yz.value().max_abs() == 0.0);

  // Same without normalization: conv biases are zero-initialized.
  nn::ParamStore ps2;
  BlockConfig nb = cfg;
  nb.use_batchnorm = false;
  MultiscaleDwsBlock blk2(ps2, "b", nb, rng);
  CHECK(blk2.forward(zeros, ctx).value().max_abs() == 0.0);

  Var wrong = nn::constant(random_tensor(Shape{1, 16, 16, 4}, rng));
  CHECK_THROWS_AS(blk.forward(wrong, ctx), std::invalid_argument);
}

TEST_CASE("multiscale_dws_block single-pixel arithmetic oracle") {
  // With 1x1 spatial input only the center kernel tap contributes, so the
  // whole block reduces to chained matrix arithmetic we can do by hand.
  nn::Rng rng(9);
  nn::ParamStore ps;
  BlockConfig cfg;
  cfg.in_channels = 3;
  cfg.out_channels = 4;
  cfg.se_ratio_pair = {2, 4};
  cfg.use_batchnorm = false;
  MultiscaleDwsBlock blk(ps, "b", cfg, rng);

  // Deterministic hand-set weights.
  auto setw = [&](const std::string& name, double base) {
    Tensor& t = ps.get(name)->value;
    for (std::int64_t i = 0; i < t.size(); ++i)
      t[i] = base + 0.01 * static_cast<double>(i % 11) - 0.05;
  };
  for (const std::string n :
       {"b.ms.dws3.dw.w", "b.ms.dws3.pw.w", "b.ms.dws5.dw.w", "b.ms.dws5.pw.w",
        "b.ms.red1x1.w", "b.ms.proj.w"})
    setw(n, 0.2);
  for (const std::string n :
       {"b.ms.dws3.pw.b", "b.ms.dws5.pw.b", "b.ms.red1x1.b", "b.ms.proj.b"})
    setw(n, -0.1);

  Tensor x(Shape{1, 1, 1, 3});
  x[0] = 0.3; x[1] = -0.8; x[2] = 1.1;

  nn::Context ctx;
  Var y = blk.forward(nn::constant(x), ctx);

  // Oracle: straight-line arithmetic of the three branches.
  auto relu = [](double v) { return v > 0.0 ? v : 0.0; };
  std::vector<double> concat;
  for (int k : {3, 5}) {
    const Tensor& dw = ps.get("b.ms.dws" + std::to_string(k) + ".dw.w")->value;
    const Tensor& pw = ps.get("b.ms.dws" + std::to_string(k) + ".pw.w")->value;
    const Tensor& pb = ps.get("b.ms.dws" + std::to_string(k) + ".pw.b")->value;
    const int center = ((k / 2) * k + k / 2) * 3;
    std::vector<double> mid(3);
    for (int c = 0; c < 3; ++c) mid[c] = x[c] * dw[center + c];
    for (int o = 0; o < 4; ++o) {
      double acc = pb[o];
      for (int c = 0; c < 3; ++c) acc += mid[c] * pw[c * 4 + o];
      concat.push_back(relu(acc));
    }
  }
  const Tensor& rw = ps.get("b.ms.red1x1.w")->value;
  const Tensor& rb = ps.get("b.ms.red1x1.b")->value;
  for (int o = 0; o < 2; ++o) {  // pointwise_fraction 1/2 of 4 channels
    double acc = rb[o];
    for (int c = 0; c < 3; ++c) acc += x[c] * rw[c * 2 + o];
    concat.push_back(relu(acc));
  }
  REQUIRE(concat.size() == 10);
  const Tensor& pjw = ps.get("b.ms.proj.w")->value;
  const Tensor& pjb = ps.get("b.ms.proj.b")->value;
  for (int o = 0; o < 4; ++o) {
    double acc = pjb[o];
    for (int c = 0; c < 10; ++c) acc += concat[c] * pjw[c * 4 + o];
    CHECK(y.value()[o] == doctest::Approx(relu(acc)).epsilon(1e-12));
  }
}

TEST_CASE("channel_se behavior") {
  nn::Rng rng(21);
  nn::ParamStore ps;
  ChannelSE cse(ps, "c", 16, {4, 16}, false, rng);

  SUBCASE("saturated gates give identity") {
    force_se_gates(ps, "c", 1e9);
    Tensor x = random_tensor(Shape{2, 4, 4, 16}, rng);
    Var y = cse.forward(nn::constant(x));
    CHECK(bitwise_equal(y.value(), x));
  }

  SUBCASE("constant channel scales uniformly by its gate") {
    Tensor x = random_tensor(Shape{1, 4, 4, 16}, rng);
    const int k = 5;
    for (int y = 0; y < 4; ++y)
      for (int xx = 0; xx < 4; ++xx) x.at(0, y, xx, k) = 3.0;
    Var out = cse.forward(nn::constant(x));
    const double v0 = out.value().at(0, 0, 0, k);
    const double g = v0 / 3.0;
    CHECK(g > 0.0);
    CHECK(g < 1.0);
    for (int y = 0; y < 4; ++y)
      for (int xx = 0; xx < 4; ++xx)
        CHECK(out.value().at(0, y, xx, k) == doctest::Approx(v0).epsilon(1e-14));
  }

  SUBCASE("gates lie strictly in (0,1)") {
    Tensor x = random_tensor(Shape{2, 4, 4, 16}, rng, -5.0, 5.0);
    Var g = cse.gate_map(nn::constant(x));
    for (std::int64_t i = 0; i < g.value().size(); ++i) {
      CHECK(g.value()[i] > 0.0);
      CHECK(g.value()[i] < 1.0);
    }
  }

  SUBCASE("spatial permutation equivariance") {
    Tensor x = random_tensor(Shape{1, 4, 4, 16}, rng);
    Var y = cse.forward(nn::constant(x));
    // A fixed permutation of the 16 pixel positions, same for all channels.
    std::vector<int> perm{5, 2, 9, 0, 13, 7, 1, 15, 4, 11, 6, 3, 10, 14, 8, 12};
    Tensor xp(Shape{1, 4, 4, 16});
    for (int p = 0; p < 16; ++p)
      for (int c = 0; c < 16; ++c)
        xp.data()[p * 16 + c] = x.data()[perm[p] * 16 + c];
    Var yp = cse.forward(nn::constant(xp));
    for (int p = 0; p < 16; ++p)
      for (int c = 0; c < 16; ++c)
        CHECK(yp.value().data()[p * 16 + c] ==
              doctest::Approx(y.value().data()[perm[p] * 16 + c])
                  .epsilon(1e-12));
  }

  SUBCASE("gradient check vs finite differences") {
    nn::ParamStore ps2;
    ChannelSE unit(ps2, "c", 16, {4, 16}, false, rng);
    Var x = nn::make_leaf(random_tensor(Shape{2, 4, 4, 16}, rng), true, "x");
    auto fwd = [&] { return nn::sum_all(unit.forward(x)); };
    std::vector<nn::NodeRef> leaves = ps2.items();
    leaves.push_back(x.node);
    auto res = grad_check(fwd, leaves);
    CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst);
  }

  SUBCASE("too few channels rejected") {
    nn::ParamStore ps3;
    CHECK_THROWS_AS(ChannelSE(ps3, "c", 8, {4, 16}, false, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("spatial_se behavior") {
  nn::Rng rng(22);
  nn::ParamStore ps;
  SpatialSE sse(ps, "s", 16, {4, 16}, false, rng);

  SUBCASE("map forced to one is identity, zero annihilates") {
    Tensor x = random_tensor(Shape{2, 3, 3, 16}, rng);
    force_se_gates(ps, "s", 1e9);
    CHECK(bitwise_equal(sse.forward(nn::constant(x)).value(), x));
    force_se_gates(ps, "s", -1e9);
    CHECK(sse.forward(nn::constant(x)).value().max_abs() == 0.0);
  }

  SUBCASE("single-pixel arithmetic oracle") {
    Tensor x(Shape{1, 1, 1, 16});
    for (int c = 0; c < 16; ++c) x[c] = 0.1 * c - 0.7;
    // Oracle: per path r, m_r = sigmoid(w2 . relu(W1 x + b1) + b2); blended.
    auto path_map = [&](const std::string& p) {
      const Tensor& w1 = ps.get("s" + p + ".squeeze.w")->value;
      const Tensor& b1 = ps.get("s" + p + ".squeeze.b")->value;
      const Tensor& w2 = ps.get("s" + p + ".excite.w")->value;
      const Tensor& b2 = ps.get("s" + p + ".excite.b")->value;
      const int wmid = static_cast<int>(b1.size());
      double acc2 = b2[0];
      for (int j = 0; j < wmid; ++j) {
        double acc = b1[j];
        for (int c = 0; c < 16; ++c) acc += x[c] * w1[c * wmid + j];
        acc2 += std::max(0.0, acc) * w2[j];
      }
      return 1.0 / (1.0 + std::exp(-acc2));
    };
    const double t = 0.5;  // sigmoid(alpha=0)
    const double m = t * path_map(".lo") + (1.0 - t) * path_map(".hi");
    Var y = sse.forward(nn::constant(x));
    for (int c = 0; c < 16; ++c)
      CHECK(y.value()[c] == doctest::Approx(x[c] * m).epsilon(1e-12));
  }

  SUBCASE("map is single-channel and uniform across channels") {
    Tensor x = random_tensor(Shape{1, 4, 4, 16}, rng, 0.5, 1.5);
    Var m = sse.gate_map(nn::constant(x));
    CHECK(m.shape() == Shape{1, 4, 4, 1});
    Var y = sse.forward(nn::constant(x));
    for (int p = 0; p < 16; ++p)
      for (int c = 0; c < 16; ++c)
        CHECK(y.value().data()[p * 16 + c] ==
              doctest::Approx(x.data()[p * 16 + c] * m.value()[p])
                  .epsilon(1e-12));
  }

  SUBCASE("gradient check vs finite differences") {
    Var x = nn::make_leaf(random_tensor(Shape{2, 4, 4, 16}, rng), true, "x");
    auto fwd = [&] { return nn::sum_all(sse.forward(x)); };
    std::vector<nn::NodeRef> leaves = ps.items();
    leaves.push_back(x.node);
    auto res = grad_check(fwd, leaves);
    CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst);
  }
}

TEST_CASE("concurrent_scse") {
  nn::Rng rng(23);
  nn::ParamStore ps;
  ConcurrentScse scse(ps, "u", 16, {4, 16}, false, rng);

  SUBCASE("both gates forced to one doubles the input") {
    force_se_gates(ps, "u.scse.cse", 1e9);
    force_se_gates(ps, "u.scse.sse", 1e9);
    Tensor x = random_tensor(Shape{1, 4, 4, 16}, rng);
    Var y = scse.forward(nn::constant(x));
    for (std::int64_t i = 0; i < x.size(); ++i)
      CHECK(y.value()[i] == 2.0 * x[i]);
  }

  SUBCASE("zero input gives zero output") {
    Var y = scse.forward(nn::constant(Tensor(Shape{2, 4, 4, 16})));
    CHECK(y.value().max_abs() == 0.0);
  }

  SUBCASE("equals independently composed cse + sse") {
    Tensor x = random_tensor(Shape{2, 4, 4, 16}, rng);
    Var whole = scse.forward(nn::constant(x));
    Var parts = nn::add(scse.cse().forward(nn::constant(x)),
                        scse.sse().forward(nn::constant(x)));
    CHECK(bitwise_equal(whole.value(), parts.value()));
  }
}

TEST_CASE("dual_attentive_block") {
  nn::Rng rng(31);
  nn::Context train_ctx;
  train_ctx.training = true;

  SUBCASE("shape contract") {
    nn::ParamStore ps;
    BlockConfig cfg;
    cfg.in_channels = 4;
    cfg.out_channels = 8;
    cfg.se_ratio_pair = {2, 4};
    DualAttentiveBlock dab(ps, "d", cfg, rng);
    Var y = dab.forward(nn::constant(random_tensor(Shape{1, 32, 32, 4}, rng)),
                        train_ctx);
    CHECK(y.shape() == Shape{1, 32, 32, 8});
  }

  SUBCASE("zero scSE gates reduce the block to its multiscale stage") {
    nn::ParamStore ps;
    BlockConfig cfg;
    cfg.in_channels = 4;
    cfg.out_channels = 16;
    DualAttentiveBlock dab(ps, "d", cfg, rng);
    force_se_gates(ps, "d.scse.cse", -1e9);
    force_se_gates(ps, "d.scse.sse", -1e9);
    Tensor x = random_tensor(Shape{1, 8, 8, 4}, rng);
    nn::Context ctx;  // eval mode so both forwards see identical statistics
    Var whole = dab.forward(nn::constant(x), ctx);
    Var ms_only = dab.multiscale().forward(nn::constant(x), ctx);
    CHECK(bitwise_equal(whole.value(), ms_only.value()));
  }

  SUBCASE("full-block gradient check") {
    nn::ParamStore ps;
    BlockConfig cfg;
    cfg.in_channels = 3;
    cfg.out_channels = 8;
    cfg.se_ratio_pair = {2, 4};
    DualAttentiveBlock dab(ps, "d", cfg, rng);
    Var x = nn::make_leaf(random_tensor(Shape{1, 4, 4, 3}, rng), true, "x");
    nn::Context ctx;
    ctx.training = true;
    Tensor proj = random_tensor(Shape{1, 4, 4, 8}, rng);
    auto fwd = [&] { return project_with(dab.forward(x, ctx), proj); };
    std::vector<nn::NodeRef> leaves = ps.items();
    leaves.push_back(x.node);
    auto res = grad_check(fwd, leaves);
    CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst);
  }
}

TEST_CASE("attention_gate") {
  nn::Rng rng(41);
  nn::ParamStore ps;
  AttentionGate gate(ps, "g", 4, 8, rng);

  Tensor skip = random_tensor(Shape{1, 4, 4, 4}, rng);
  Tensor gating = random_tensor(Shape{1, 2, 2, 8}, rng);

  SUBCASE("coefficients forced to one / zero") {
    ps.get("g.psi.w")->value.fill(0.0);
    ps.get("g.psi.b")->value.fill(1e9);
    Var y = gate.forward(nn::constant(skip), nn::constant(gating));
    CHECK(bitwise_equal(y.value(), skip));
    ps.get("g.psi.b")->value.fill(-1e9);
    Var y0 = gate.forward(nn::constant(skip), nn::constant(gating));
    CHECK(y0.value().max_abs() == 0.0);
  }

  SUBCASE("incompatible spatial ratio rejected") {
    Tensor bad = random_tensor(Shape{1, 3, 3, 8}, rng);
    CHECK_THROWS_AS(gate.forward(nn::constant(skip), nn::constant(bad)),
                    std::invalid_argument);
  }

  SUBCASE("coefficients lie strictly in (0,1)") {
    Var m = gate.coefficient_map(nn::constant(skip), nn::constant(gating));
    CHECK(m.shape() == Shape{1, 4, 4, 1});
    for (std::int64_t i = 0; i < m.value().size(); ++i) {
      CHECK(m.value()[i] > 0.0);
      CHECK(m.value()[i] < 1.0);
    }
  }

  SUBCASE("2x2 skip / 1x1 gating arithmetic oracle") {
    nn::ParamStore ps2;
    AttentionGate g2(ps2, "g", 2, 3, rng);
    auto setw = [&](const std::string& name, double base) {
      Tensor& t = ps2.get(name)->value;
      for (std::int64_t i = 0; i < t.size(); ++i)
        t[i] = base + 0.03 * static_cast<double>(i % 5) - 0.06;
    };
    for (const std::string n : {"g.theta.w", "g.phi.w", "g.psi.w"}) setw(n, 0.15);
    for (const std::string n : {"g.theta.b", "g.phi.b", "g.psi.b"}) setw(n, 0.02);

    Tensor sk(Shape{1, 2, 2, 2});
    for (int i = 0; i < 8; ++i) sk[i] = 0.25 * i - 0.9;
    Tensor gt(Shape{1, 1, 1, 3});
    gt[0] = 0.4; gt[1] = -0.2; gt[2] = 0.7;

    const Tensor& tw = ps2.get("g.theta.w")->value;  // (2 -> 1)
    const Tensor& tb = ps2.get("g.theta.b")->value;
    const Tensor& pw = ps2.get("g.phi.w")->value;    // (3 -> 1)
    const Tensor& pb = ps2.get("g.phi.b")->value;
    const Tensor& qw = ps2.get("g.psi.w")->value;    // (1 -> 1)
    const Tensor& qb = ps2.get("g.psi.b")->value;
    const int inter = 1;  // max(1, 2/2)
    Var y = g2.forward(nn::constant(sk), nn::constant(gt));
    for (int p = 0; p < 4; ++p) {
      double phi = pb[0];
      for (int c = 0; c < 3; ++c) phi += gt[c] * pw[c * inter];
      double theta = tb[0];
      for (int c = 0; c < 2; ++c) theta += sk[p * 2 + c] * tw[c * inter];
      const double a = std::max(0.0, theta + phi);
      const double coef = 1.0 / (1.0 + std::exp(-(qw[0] * a + qb[0])));
      for (int c = 0; c < 2; ++c)
        CHECK(y.value()[p * 2 + c] ==
              doctest::Approx(sk[p * 2 + c] * coef).epsilon(1e-12));
    }
  }

  SUBCASE("gradient check") {
    Var sk = nn::make_leaf(random_tensor(Shape{1, 4, 4, 4}, rng), true, "skip");
    Var gt = nn::make_leaf(random_tensor(Shape{1, 2, 2, 8}, rng), true, "gating");
    Tensor proj = random_tensor(Shape{1, 4, 4, 4}, rng);
    auto fwd = [&] { return project_with(gate.forward(sk, gt), proj); };
    std::vector<nn::NodeRef> leaves = ps.items();
    leaves.push_back(sk.node);
    leaves.push_back(gt.node);
    auto res = grad_check(fwd, leaves);
    CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst);
  }
}

TEST_CASE("fixed single-ratio mode builds one path without a blend scalar") {
  nn::Rng rng(77);
  nn::ParamStore ps;
  ChannelSE cse(ps, "c", 32, {4, 16}, /*fixed_single=*/true, rng);
  CHECK(ps.has("c.r16.squeeze.w"));
  CHECK_FALSE(ps.has("c.alpha"));
  CHECK_FALSE(ps.has("c.lo.squeeze.w"));
  Tensor x = random_tensor(Shape{1, 2, 2, 32}, rng);
  CHECK(cse.forward(nn::constant(x)).shape() == Shape{1, 2, 2, 32});
}
