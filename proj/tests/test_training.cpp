#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "train/training.hpp"

using namespace daufi;
using data::ClassTable;
using net::NetworkConfig;
using net::SegmentationModel;
using net::Variant;
using nn::Shape;
using nn::Tensor;
using train::TrainConfig;
using train::TrainOptions;
namespace fs = std::filesystem;

namespace {

NetworkConfig tiny_cfg(int classes = 3) {
  NetworkConfig cfg;
  cfg.num_classes = classes;
  cfg.depth = 2;
  cfg.base_filters = 8;
  cfg.se_ratio_pair = {2, 4};
  cfg.variant = Variant::kP6;
  return cfg;
}

ClassTable three_class_table() {
  return ClassTable({{0, "Background", {0, 0, 0}, 0.0},
                     {1, "Cracks", {255, 0, 0}, 1.0},
                     {2, "Holes", {255, 255, 0}, 1.0}});
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("/tmp") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("lr_schedule") {
  TrainConfig cfg;
  CHECK(train::lr_schedule(0, cfg) == doctest::Approx(0.001));
  CHECK(train::lr_schedule(9, cfg) == doctest::Approx(0.001));
  CHECK(train::lr_schedule(10, cfg) == doctest::Approx(0.001));  // (1-r)^0
  CHECK(train::lr_schedule(110, cfg) ==
        doctest::Approx(0.001 * std::pow(0.9999, 100)).epsilon(1e-12));

  // Non-increasing, constant before the decay start.
  double prev = train::lr_schedule(0, cfg);
  for (int e = 1; e <= 200; ++e) {
    const double lr = train::lr_schedule(e, cfg);
    CHECK(lr <= prev);
    if (e < cfg.decay_start_epoch) CHECK(lr == cfg.lr0);
    prev = lr;
  }
}

TEST_CASE("ce_loss") {
  SUBCASE("one-hot correct is ~0, uniform is ln K") {
    Tensor probs(Shape{1, 2, 2, 3});
    std::vector<std::int32_t> gt{0, 1, 2, 1};
    for (int p = 0; p < 4; ++p)
      for (int c = 0; c < 3; ++c) probs[p * 3 + c] = (c == gt[p]) ? 1.0 : 0.0;
    CHECK(train::ce_loss(probs, gt, {}) <= 1e-10);

    probs.fill(1.0 / 3.0);
    CHECK(train::ce_loss(probs, gt, {}) ==
          doctest::Approx(std::log(3.0)).epsilon(1e-9));
  }

  SUBCASE("2x2 toy with hand probabilities and weights") {
    Tensor probs(Shape{1, 2, 2, 2});
    const double p0[4] = {0.9, 0.3, 0.6, 0.2};  // prob of class 0 per pixel
    for (int p = 0; p < 4; ++p) {
      probs[p * 2 + 0] = p0[p];
      probs[p * 2 + 1] = 1.0 - p0[p];
    }
    std::vector<std::int32_t> gt{0, 1, 0, 1};
    std::vector<double> w{0.5, 2.0};
    const double eps = 1e-12;
    const double want = -(0.5 * std::log(0.9 + eps) +
                          2.0 * std::log(0.7 + eps) +
                          0.5 * std::log(0.6 + eps) +
                          2.0 * std::log(0.8 + eps)) /
                        4.0;
    CHECK(train::ce_loss(probs, gt, w) == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("loss is non-negative") {
    nn::Rng rng(2);
    Tensor logits(Shape{1, 4, 4, 3});
    for (std::int64_t i = 0; i < logits.size(); ++i)
      logits[i] = rng.uniform(-3.0, 3.0);
    nn::Var probs = nn::softmax_channels(nn::constant(logits));
    std::vector<std::int32_t> gt(16);
    for (auto& g : gt) g = static_cast<std::int32_t>(rng.uniform_int(3));
    CHECK(train::ce_loss(probs.value(), gt, {}) >= 0.0);
  }
}

TEST_CASE("single Adam step matches hand-derived arithmetic") {
  nn::ParamStore ps;
  nn::NodeRef theta = ps.create("theta", Shape{1, 1, 1, 1});
  theta->value[0] = 5.0;
  train::Adam adam(ps);

  // loss = (theta - 3)^2, so grad = 2 * (theta - 3) = 4.
  nn::Var d = nn::add(nn::Var(theta), nn::constant(Tensor::scalar(-3.0)));
  nn::Var loss = nn::sum_all(nn::mul(d, d));
  ps.zero_grad();
  nn::backward(loss);
  CHECK(theta->grad[0] == doctest::Approx(4.0).epsilon(1e-15));

  const double lr = 0.1, g = 4.0;
  const double m = 0.1 * g;               // (1-beta1) * g
  const double v = 0.001 * g * g;         // (1-beta2) * g^2
  const double mhat = m / (1.0 - 0.9);    // bias correction, t=1
  const double vhat = v / (1.0 - 0.999);
  const double want = 5.0 - lr * mhat / (std::sqrt(vhat) + 1e-8);
  adam.step(lr);
  CHECK(theta->value[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("training loop") {
  ClassTable table = three_class_table();
  auto samples = data::generate_synthetic(4, 16, 16, 5, table);
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.id);

  SUBCASE("one-epoch smoke run") {
    SegmentationModel model(tiny_cfg(), 1);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 2;
    cfg.seed = 3;
    cfg.checkpoint_every = 0;
    TrainOptions opts;
    opts.table = &table;
    auto state = train::train(model, samples, ids, {}, cfg, opts);
    CHECK(state.epoch == 1);
    REQUIRE(state.history.size() == 1);
    CHECK(std::isfinite(state.history[0].train_loss));
  }

  SUBCASE("same seed twice gives identical loss curves") {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 2;
    cfg.seed = 11;
    cfg.checkpoint_every = 0;
    TrainOptions opts;
    opts.table = &table;
    SegmentationModel m1(tiny_cfg(), 4), m2(tiny_cfg(), 4);
    auto s1 = train::train(m1, samples, ids, {}, cfg, opts);
    auto s2 = train::train(m2, samples, ids, {}, cfg, opts);
    REQUIRE(s1.history.size() == s2.history.size());
    for (std::size_t i = 0; i < s1.history.size(); ++i)
      CHECK(s1.history[i].train_loss == s2.history[i].train_loss);
  }

  SUBCASE("checkpoint resume reproduces the uninterrupted run bit-for-bit") {
    TempDir dir("daufi_resume_test");
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 2;
    cfg.seed = 7;
    cfg.checkpoint_every = 2;  // writes epoch_2.ckpt
    TrainOptions opts;
    opts.table = &table;

    SegmentationModel whole(tiny_cfg(), 9);
    {
      TrainOptions o = opts;
      o.out_dir = (dir.path / "whole").string();
      train::train(whole, samples, ids, {}, cfg, o);
    }

    SegmentationModel part(tiny_cfg(), 9);
    {
      TrainConfig half = cfg;
      half.epochs = 2;
      TrainOptions o = opts;
      o.out_dir = (dir.path / "part").string();
      train::train(part, samples, ids, {}, half, o);
    }
    net::CheckpointExtra extra;
    auto resumed =
        net::load_checkpoint((dir.path / "part" / "last.ckpt").string(), &extra);
    {
      TrainOptions o = opts;
      o.out_dir = (dir.path / "resumed").string();
      o.resume = &extra;
      train::train(*resumed, samples, ids, {}, cfg, o);
    }

    const auto& a = whole.params().items();
    const auto& b = resumed->params().items();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i]->value.size() == b[i]->value.size());
      for (std::int64_t k = 0; k < a[i]->value.size(); ++k)
        CHECK(a[i]->value[k] == b[i]->value[k]);
    }
  }

  SUBCASE("non-finite loss aborts with a diagnostic checkpoint") {
    TempDir dir("daufi_nan_test");
    SegmentationModel model(tiny_cfg(), 1);
    // Poison a weight downstream of every ReLU so the NaN reaches the loss.
    model.params().get("head.conv.b")->value[0] =
        std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 1;
    TrainOptions opts;
    opts.table = &table;
    opts.out_dir = dir.path.string();
    CHECK_THROWS_AS(train::train(model, samples, ids, {}, cfg, opts),
                    std::runtime_error);
    CHECK(fs::exists(dir.path / "diagnostic.ckpt"));
  }
}

TEST_CASE("evaluate") {
  ClassTable table = three_class_table();

  SUBCASE("empty sample set rejected") {
    SegmentationModel model(tiny_cfg(), 1);
    CHECK_THROWS_AS(train::evaluate(model, {}, table), std::invalid_argument);
  }

  SUBCASE("untrained model scores near chance (median of 3 seeds)") {
    auto samples = data::generate_synthetic(6, 16, 16, 21, table);
    std::vector<double> mccs;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      SegmentationModel model(tiny_cfg(), seed);
      mccs.push_back(train::evaluate(model, samples, table).mcc);
    }
    std::sort(mccs.begin(), mccs.end());
    CHECK(mccs[1] >= -0.2);
    CHECK(mccs[1] <= 0.2);
  }

  SUBCASE("report carries finite values for an untrained model") {
    auto samples = data::generate_synthetic(2, 16, 16, 2, table);
    SegmentationModel model(tiny_cfg(), 2);
    auto r = train::evaluate(model, samples, table);
    for (double v : {r.iou_bg, r.iou_nobg, r.fwiou, r.ciw_iou, r.f1,
                     r.balanced_acc, r.mcc})
      CHECK(std::isfinite(v));
  }
}
