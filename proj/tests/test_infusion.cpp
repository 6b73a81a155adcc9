#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "infusion/infusion.hpp"
#include "net/network.hpp"
#include "testing_util.hpp"

using namespace daufi;
using infusion::InjectionAdapter;
using infusion::InjectionPlan;
using nn::Shape;
using nn::Tensor;
using nn::Var;
using testing::grad_check;
using testing::random_tensor;

namespace {

InjectionPlan two_site_plan(int channels) {
  InjectionPlan plan;
  plan.sites = {0, 1};
  plan.extractors = {{"gabor", "sobel", "canny"}, {"gabor", "sobel", "canny"}};
  plan.stack_channels = {channels, channels};
  return plan;
}

}  // namespace

TEST_CASE("plan validation") {
  InjectionPlan plan = two_site_plan(12);
  CHECK_NOTHROW(plan.validate(4));
  plan.sites = {0, 0};
  CHECK_THROWS_AS(plan.validate(4), std::invalid_argument);
  plan = two_site_plan(12);
  plan.sites = {0, 5};
  CHECK_THROWS_AS(plan.validate(4), std::invalid_argument);

  features::ExtractorConfig ecfg;
  InjectionPlan made = InjectionPlan::make({0, 1}, {"gabor", "sobel"}, ecfg);
  CHECK(made.stack_channels == std::vector<int>{11, 11});
}

TEST_CASE("adapter construction") {
  nn::Rng rng(3);

  SUBCASE("two 12-channel sites create two alignment convolutions") {
    nn::ParamStore ps;
    InjectionAdapter a(ps, "inject", two_site_plan(12), {12, 12}, {3, 16}, rng);
    CHECK(a.num_sites() == 2);
    CHECK(ps.get("inject.site0.align.w")->value.shape() == Shape{3, 3, 12, 12});
    CHECK(ps.get("inject.site1.align.w")->value.shape() == Shape{3, 3, 12, 12});
    CHECK(ps.get("inject.site0.proj.w")->value.shape() == Shape{1, 1, 3, 12});
    CHECK(ps.get("inject.site1.proj.w")->value.shape() == Shape{1, 1, 16, 12});
    CHECK(ps.get("inject.site0.focus.w")->value.shape() == Shape{1, 1, 12, 1});
  }

  SUBCASE("empty plan is an identity adapter") {
    InjectionAdapter a;
    CHECK_FALSE(a.enabled());
  }

  SUBCASE("declared vs actual channel mismatch fails at build") {
    nn::ParamStore ps;
    CHECK_THROWS_AS(InjectionAdapter(ps, "inject", two_site_plan(12), {12, 8},
                                     {3, 16}, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("inject semantics") {
  nn::Rng rng(7);
  nn::ParamStore ps;
  InjectionPlan plan = two_site_plan(5);
  plan.sites = {0};
  plan.extractors = {{"sobel"}};
  plan.stack_channels = {5};
  InjectionAdapter a(ps, "inject", plan, {5}, {4}, rng);

  Tensor site = random_tensor(Shape{2, 6, 6, 4}, rng);
  Tensor stack = random_tensor(Shape{2, 6, 6, 5}, rng, 0.0, 1.0);

  SUBCASE("saturated modulation map is the identity / annihilator") {
    ps.get("inject.site0.focus.w")->value.fill(0.0);
    ps.get("inject.site0.focus.b")->value.fill(1e9);
    Var y = a.inject(0, nn::constant(site), nn::constant(stack));
    for (std::int64_t i = 0; i < site.size(); ++i)
      CHECK(y.value()[i] == site[i]);
    ps.get("inject.site0.focus.b")->value.fill(-1e9);
    Var y0 = a.inject(0, nn::constant(site), nn::constant(stack));
    CHECK(y0.value().max_abs() == 0.0);
  }

  SUBCASE("modulation map is single-channel in (0,1)") {
    Var m = a.modulation_map(0, nn::constant(site), nn::constant(stack));
    CHECK(m.shape() == Shape{2, 6, 6, 1});
    for (std::int64_t i = 0; i < m.value().size(); ++i) {
      CHECK(m.value()[i] > 0.0);
      CHECK(m.value()[i] < 1.0);
    }
  }

  SUBCASE("spatial mismatch rejected") {
    Tensor bad = random_tensor(Shape{2, 4, 4, 5}, rng);
    CHECK_THROWS_AS(a.inject(0, nn::constant(site), nn::constant(bad)),
                    std::invalid_argument);
  }

  SUBCASE("single-pixel arithmetic oracle") {
    nn::ParamStore ps2;
    InjectionPlan p1 = plan;
    p1.stack_channels = {2};
    InjectionAdapter a2(ps2, "inject", p1, {2}, {3}, rng);
    auto setw = [&](const std::string& name, double base) {
      Tensor& t = ps2.get(name)->value;
      for (std::int64_t i = 0; i < t.size(); ++i)
        t[i] = base + 0.02 * static_cast<double>(i % 7) - 0.05;
    };
    for (const std::string n :
         {"inject.site0.align.w", "inject.site0.proj.w", "inject.site0.focus.w"})
      setw(n, 0.1);
    for (const std::string n :
         {"inject.site0.align.b", "inject.site0.proj.b", "inject.site0.focus.b"})
      setw(n, 0.01);

    Tensor si(Shape{1, 1, 1, 3});
    si[0] = 0.5; si[1] = -0.4; si[2] = 1.2;
    Tensor st(Shape{1, 1, 1, 2});
    st[0] = 0.3; st[1] = 0.8;

    // Hand chain: align (3x3, center tap only on a 1x1 grid) -> add
    // projected input -> single-filter 1x1 -> sigmoid -> multiply.
    const Tensor& aw = ps2.get("inject.site0.align.w")->value;  // (3,3,2,2)
    const Tensor& ab = ps2.get("inject.site0.align.b")->value;
    const Tensor& pw = ps2.get("inject.site0.proj.w")->value;   // (1,1,3,2)
    const Tensor& pb = ps2.get("inject.site0.proj.b")->value;
    const Tensor& fw = ps2.get("inject.site0.focus.w")->value;  // (1,1,2,1)
    const Tensor& fb = ps2.get("inject.site0.focus.b")->value;
    const int center = (1 * 3 + 1) * 2;  // (i=1,j=1) taps, Ci=2
    double b_vec[2];
    for (int o = 0; o < 2; ++o) {
      double align = ab[o];
      for (int c = 0; c < 2; ++c) align += st[c] * aw[(center + c) * 2 + o];
      double proj = pb[o];
      for (int c = 0; c < 3; ++c) proj += si[c] * pw[c * 2 + o];
      b_vec[o] = align + proj;
    }
    double logit = fb[0];
    for (int o = 0; o < 2; ++o) logit += b_vec[o] * fw[o];
    const double m = 1.0 / (1.0 + std::exp(-logit));

    Var y = a2.inject(0, nn::constant(si), nn::constant(st));
    for (int c = 0; c < 3; ++c)
      CHECK(y.value()[c] == doctest::Approx(si[c] * m).epsilon(1e-12));
  }

  SUBCASE("stack-only mode ignores the projected site input") {
    nn::ParamStore ps3;
    InjectionPlan p = plan;
    p.add_projected_input = false;
    InjectionAdapter a3(ps3, "inject", p, {5}, {4}, rng);
    Var m1 = a3.modulation_map(0, nn::constant(site), nn::constant(stack));
    Tensor other = random_tensor(Shape{2, 6, 6, 4}, rng);
    Var m2 = a3.modulation_map(0, nn::constant(other), nn::constant(stack));
    for (std::int64_t i = 0; i < m1.value().size(); ++i)
      CHECK(m1.value()[i] == m2.value()[i]);
  }

  SUBCASE("gradients flow to adapter weights, site input and stack") {
    Var si = nn::make_leaf(random_tensor(Shape{1, 4, 4, 4}, rng), true, "site");
    Var st = nn::make_leaf(random_tensor(Shape{1, 4, 4, 5}, rng), true, "stack");
    Tensor proj = random_tensor(Shape{1, 4, 4, 4}, rng);
    auto fwd = [&] { return testing::project_with(a.inject(0, si, st), proj); };
    std::vector<nn::NodeRef> leaves = ps.items();
    leaves.push_back(si.node);
    leaves.push_back(st.node);
    auto res = grad_check(fwd, leaves);
    CHECK_MESSAGE(res.max_rel_err < 1e-4, res.worst);
    // Both pathways actually received gradient.
    CHECK(si.node->grad.max_abs() > 0.0);
    CHECK(st.node->grad.max_abs() > 0.0);
  }
}

TEST_CASE("model-level injection wiring") {
  nn::Rng rng(19);
  net::NetworkConfig cfg;
  cfg.num_classes = 3;
  cfg.depth = 2;
  cfg.base_filters = 8;
  cfg.se_ratio_pair = {2, 4};
  cfg.variant = net::Variant::kP6;

  features::ExtractorConfig ecfg;
  net::NetworkConfig with = cfg;
  with.injection = InjectionPlan::make({0, 1}, {"sobel", "canny"}, ecfg);

  net::SegmentationModel m_with(with, 5);
  net::SegmentationModel m_without(cfg, 5);

  Tensor x = random_tensor(Shape{1, 16, 16, 3}, rng, 0.0, 1.0);
  std::vector<Tensor> stacks{random_tensor(Shape{1, 16, 16, 4}, rng, 0.0, 1.0),
                             random_tensor(Shape{1, 16, 16, 4}, rng, 0.0, 1.0)};

  SUBCASE("plan demands stacks; no plan rejects stacks") {
    CHECK_THROWS_AS(m_with.predict(x, nullptr), std::invalid_argument);
    CHECK_THROWS_AS(m_without.predict(x, &stacks), std::invalid_argument);
    Tensor probs = m_with.predict(x, &stacks);
    CHECK(probs.shape() == Shape{1, 16, 16, 3});
  }

  SUBCASE("empty plan is bit-identical to no adapter") {
    net::NetworkConfig empty_plan = cfg;
    empty_plan.injection = InjectionPlan{};  // no sites
    net::SegmentationModel m_empty(empty_plan, 5);
    Tensor a = m_empty.predict(x);
    Tensor b = m_without.predict(x);
    REQUIRE(a.size() == b.size());
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }

  SUBCASE("trace flag captures per-site modulation maps") {
    net::NetworkConfig traced = with;
    traced.injection->trace = true;
    net::SegmentationModel m(traced, 5);
    CHECK(m.trace_maps().empty());
    m.predict(x, &stacks);
    REQUIRE(m.trace_maps().size() == 2);
    CHECK(m.trace_maps()[0].shape() == Shape{1, 16, 16, 1});
    CHECK(m.trace_maps()[1].shape() == Shape{1, 8, 8, 1});
    for (double v : {m.trace_maps()[0][0], m.trace_maps()[1][0]}) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    // Tracing must not change the numbers.
    net::SegmentationModel plain(with, 5);
    Tensor a = m.predict(x, &stacks);
    Tensor b = plain.predict(x, &stacks);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
}
