#include "net/network.hpp"

#include <json.hpp>
#include <stdexcept>

namespace daufi::net {

using blocks::BlockConfig;
using json = nlohmann::json;

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kP1: return "P1";
    case Variant::kP2: return "P2";
    case Variant::kP3: return "P3";
    case Variant::kP4: return "P4";
    case Variant::kP5: return "P5";
    case Variant::kP6: return "P6";
    case Variant::kUnetBaseline: return "UNET_BASELINE";
  }
  throw std::logic_error("variant_name: bad variant");
}

Variant variant_from_name(const std::string& s) {
  for (Variant v : {Variant::kP1, Variant::kP2, Variant::kP3, Variant::kP4,
                    Variant::kP5, Variant::kP6, Variant::kUnetBaseline})
    if (variant_name(v) == s) return v;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

const std::vector<Variant>& ablation_variants() {
  static const std::vector<Variant> v{Variant::kP1, Variant::kP2, Variant::kP3,
                                      Variant::kP4, Variant::kP5, Variant::kP6};
  return v;
}

Placement placement(Variant v) {
  switch (v) {
    case Variant::kP1: return {false, false, true, false};
    case Variant::kP2: return {false, true, false, false};
    case Variant::kP3: return {false, true, false, true};
    case Variant::kP4: return {true, false, false, true};
    case Variant::kP5: return {true, true, false, false};
    case Variant::kP6: return {true, true, false, true};
    case Variant::kUnetBaseline: return {false, false, false, false};
  }
  throw std::logic_error("placement: bad variant");
}

void NetworkConfig::validate() const {
  if (num_classes <= 0)
    throw std::invalid_argument("NetworkConfig: num_classes must be positive");
  if (depth <= 0 || depth > 8)
    throw std::invalid_argument("NetworkConfig: depth must be in [1,8]");
  if (base_filters <= 0)
    throw std::invalid_argument("NetworkConfig: base_filters must be positive");
  if (base_filters > (1 << 20) || depth > 30 ||
      static_cast<std::int64_t>(base_filters) << depth > (1 << 24))
    throw std::invalid_argument("NetworkConfig: width overflow");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("NetworkConfig: dropout_rate must be in [0,1)");
  if (input_channels <= 0)
    throw std::invalid_argument("NetworkConfig: input_channels must be positive");
  const Placement pl = placement(variant);
  if (pl.dab_encoder || pl.dab_decoder || pl.dab_skips) {
    if (base_filters < se_ratio_pair.second && !se_fixed_single)
      throw std::invalid_argument(
          "NetworkConfig: base_filters must be >= the high SE ratio");
    if (base_filters % 2 != 0)
      throw std::invalid_argument(
          "NetworkConfig: base_filters must be even (1x1 branch width)");
  }
  if (injection) injection->validate(depth);
}

std::string NetworkConfig::to_json() const {
  json j;
  j["num_classes"] = num_classes;
  j["depth"] = depth;
  j["base_filters"] = base_filters;
  j["variant"] = variant_name(variant);
  j["dropout_rate"] = dropout_rate;
  j["input_channels"] = input_channels;
  j["se_ratio_low"] = se_ratio_pair.first;
  j["se_ratio_high"] = se_ratio_pair.second;
  j["se_fixed_single"] = se_fixed_single;
  if (injection) {
    json ji;
    ji["sites"] = injection->sites;
    ji["extractors"] = injection->extractors;
    ji["stack_channels"] = injection->stack_channels;
    ji["add_projected_input"] = injection->add_projected_input;
    ji["trace"] = injection->trace;
    j["injection"] = ji;
  }
  return j.dump(2);
}

NetworkConfig NetworkConfig::from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  NetworkConfig c;
  c.num_classes = j.at("num_classes").get<int>();
  c.depth = j.value("depth", c.depth);
  c.base_filters = j.value("base_filters", c.base_filters);
  if (j.contains("variant"))
    c.variant = variant_from_name(j["variant"].get<std::string>());
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.input_channels = j.value("input_channels", c.input_channels);
  c.se_ratio_pair.first = j.value("se_ratio_low", c.se_ratio_pair.first);
  c.se_ratio_pair.second = j.value("se_ratio_high", c.se_ratio_pair.second);
  c.se_fixed_single = j.value("se_fixed_single", c.se_fixed_single);
  if (j.contains("injection") && !j["injection"].is_null()) {
    infusion::InjectionPlan plan;
    const json& ji = j["injection"];
    plan.sites = ji.at("sites").get<std::vector<int>>();
    plan.extractors =
        ji.value("extractors", std::vector<std::vector<std::string>>{});
    plan.stack_channels = ji.at("stack_channels").get<std::vector<int>>();
    plan.add_projected_input = ji.value("add_projected_input", true);
    plan.trace = ji.value("trace", false);
    c.injection = std::move(plan);
  }
  return c;
}

// ---------------------------------------------------------------------------

Var SegmentationModel::LevelBlock::forward(const Var& x,
                                           const Context& ctx) const {
  if (is_dab) return dab.forward(x, ctx);
  Var v = nn::relu(b1(c1(x), ctx));
  return nn::relu(b2(c2(v), ctx));
}

SegmentationModel::LevelBlock SegmentationModel::make_level(
    const std::string& prefix, int in_ch, int out_ch, bool use_dab,
    nn::Rng& rng) {
  LevelBlock lb;
  lb.is_dab = use_dab;
  if (use_dab) {
    BlockConfig bc;
    bc.in_channels = in_ch;
    bc.out_channels = out_ch;
    bc.se_ratio_pair = cfg_.se_ratio_pair;
    bc.se_fixed_single = cfg_.se_fixed_single;
    lb.dab = blocks::DualAttentiveBlock(params_, prefix + ".dab", bc, rng);
  } else {
    lb.c1 = nn::Conv2dLayer(params_, prefix + ".conv1", 3, 3, in_ch, out_ch,
                            false, rng);
    lb.b1 = nn::BatchNormLayer(params_, prefix + ".bn1", out_ch);
    lb.c2 = nn::Conv2dLayer(params_, prefix + ".conv2", 3, 3, out_ch, out_ch,
                            false, rng);
    lb.b2 = nn::BatchNormLayer(params_, prefix + ".bn2", out_ch);
  }
  return lb;
}

SegmentationModel::SegmentationModel(NetworkConfig cfg, std::uint64_t init_seed)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  nn::Rng rng(init_seed);
  const Placement pl = placement(cfg_.variant);
  const int depth = cfg_.depth;

  // Injection adapter binds to the encoder layer inputs.
  if (cfg_.injection && cfg_.injection->enabled()) {
    std::vector<int> site_inputs;
    for (int s : cfg_.injection->sites)
      site_inputs.push_back(s == 0 ? cfg_.input_channels
                                   : cfg_.filters_at(s - 1));
    adapter_ = infusion::InjectionAdapter(params_, "inject", *cfg_.injection,
                                          cfg_.injection->stack_channels,
                                          site_inputs, rng);
  }

  for (int i = 0; i < depth; ++i) {
    const int in_ch = i == 0 ? cfg_.input_channels : cfg_.filters_at(i - 1);
    encoder_.push_back(make_level("enc" + std::to_string(i), in_ch,
                                  cfg_.filters_at(i), pl.dab_encoder, rng));
  }
  bottleneck_ = make_level("bottleneck", cfg_.filters_at(depth - 1),
                           cfg_.bottleneck_filters(), pl.dab_encoder, rng);

  for (int i = 0; i < depth; ++i) {
    const int gating_ch =
        i + 1 < depth ? cfg_.filters_at(i + 1) : cfg_.bottleneck_filters();
    if (pl.dab_skips) {
      BlockConfig bc;
      bc.in_channels = cfg_.filters_at(i);
      bc.out_channels = cfg_.filters_at(i);
      bc.se_ratio_pair = cfg_.se_ratio_pair;
      bc.se_fixed_single = cfg_.se_fixed_single;
      skip_dabs_.emplace_back(params_, "skip" + std::to_string(i) + ".dab", bc,
                              rng);
    }
    if (pl.gates)
      gates_.emplace_back(params_, "gate" + std::to_string(i),
                          cfg_.filters_at(i), gating_ch, rng);
    ups_.push_back(nn::ConvTranspose2Layer(params_, "dec" + std::to_string(i) +
                                                        ".up",
                                           gating_ch, cfg_.filters_at(i), true,
                                           rng));
    decoder_.push_back(make_level("dec" + std::to_string(i),
                                  2 * cfg_.filters_at(i), cfg_.filters_at(i),
                                  pl.dab_decoder, rng));
  }
  head_ = nn::Conv2dLayer(params_, "head.conv", 1, 1, cfg_.filters_at(0),
                          cfg_.num_classes, true, rng);
}

Var SegmentationModel::forward(const Tensor& x,
                               const std::vector<Tensor>* site_stacks,
                               Context& ctx) const {
  const nn::Shape xs = x.shape();
  if (xs.c != cfg_.input_channels)
    throw std::invalid_argument("forward: expected " +
                                std::to_string(cfg_.input_channels) +
                                " input channels, got " + std::to_string(xs.c));
  const int div = 1 << cfg_.depth;
  if (xs.h % div != 0 || xs.w % div != 0)
    throw std::invalid_argument("forward: spatial dims " + xs.str() +
                                " must be divisible by " + std::to_string(div));
  const bool wants_stacks = cfg_.injection && cfg_.injection->enabled();
  if (wants_stacks && (!site_stacks ||
                       static_cast<int>(site_stacks->size()) !=
                           adapter_.num_sites()))
    throw std::invalid_argument(
        "forward: injection plan requires one feature stack per site");
  if (!wants_stacks && site_stacks && !site_stacks->empty())
    throw std::invalid_argument("forward: feature stacks passed but the "
                                "config has no injection plan");
  if (!x.all_finite())
    throw std::invalid_argument("forward: non-finite input");

  Var v = nn::constant(x);
  std::vector<Var> skips;
  const bool trace = wants_stacks && cfg_.injection->trace;
  if (trace) trace_maps_.assign(adapter_.num_sites(), Tensor());
  for (int i = 0; i < cfg_.depth; ++i) {
    if (wants_stacks) {
      for (int pos = 0; pos < adapter_.num_sites(); ++pos) {
        if (adapter_.site_index(pos) != i) continue;
        const Tensor& full = (*site_stacks)[pos];
        if (full.n() != xs.n || full.h() != xs.h || full.w() != xs.w)
          throw std::invalid_argument(
              "forward: stack " + full.shape().str() +
              " does not align with input " + xs.str());
        Var stack = nn::constant(nn::avg_downsample(full, 1 << i));
        if (trace) {
          Var m = adapter_.modulation_map(pos, v, stack);
          trace_maps_[pos] = m.value();
          v = nn::scale_spatial(v, m);
        } else {
          v = adapter_.inject(pos, v, stack);
        }
      }
    }
    Var e = encoder_[i].forward(v, ctx);
    skips.push_back(e);
    v = nn::maxpool2(e);
  }
  v = bottleneck_.forward(v, ctx);

  for (int i = cfg_.depth - 1; i >= 0; --i) {
    Var up = ups_[i](v);
    Var skip = skips[i];
    if (!skip_dabs_.empty()) skip = skip_dabs_[i].forward(skip, ctx);
    if (!gates_.empty()) skip = gates_[i].forward(skip, /*gating=*/v);
    v = decoder_[i].forward(nn::concat_channels({up, skip}), ctx);
  }

  if (ctx.training && cfg_.dropout_rate > 0.0) {
    if (!ctx.rng)
      throw std::invalid_argument("forward: training mode needs a RNG");
    v = nn::dropout(v, cfg_.dropout_rate, *ctx.rng, true);
  }
  return nn::softmax_channels(head_(v));
}

Tensor SegmentationModel::predict(const Tensor& x,
                                  const std::vector<Tensor>* site_stacks) const {
  Context ctx;
  ctx.training = false;
  return forward(x, site_stacks, ctx).value();
}

std::vector<std::pair<std::string, std::int64_t>>
SegmentationModel::parameter_groups() const {
  std::vector<std::pair<std::string, std::int64_t>> groups;
  auto bucket = [&](const std::string& name) -> std::string {
    const auto dot = name.find('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
  };
  for (const auto& p : params_.items()) {
    const std::string b = bucket(p->name);
    if (groups.empty() || groups.back().first != b)
      groups.emplace_back(b, 0);
    groups.back().second += p->value.size();
  }
  return groups;
}

std::unique_ptr<SegmentationModel> build_model(const NetworkConfig& cfg,
                                               std::uint64_t init_seed) {
  return std::make_unique<SegmentationModel>(cfg, init_seed);
}

std::vector<std::unique_ptr<SegmentationModel>> build_ablation_suite(
    const NetworkConfig& base, std::uint64_t init_seed) {
  std::vector<std::unique_ptr<SegmentationModel>> out;
  for (Variant v : ablation_variants()) {
    NetworkConfig cfg = base;
    cfg.variant = v;
    out.push_back(build_model(cfg, init_seed));
  }
  return out;
}

}  // namespace daufi::net
