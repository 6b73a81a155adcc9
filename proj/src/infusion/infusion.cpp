#include "infusion/infusion.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace daufi::infusion {

void InjectionPlan::validate(int network_depth) const {
  std::set<int> seen;
  for (int s : sites) {
    if (s < 0 || s >= network_depth)
      throw std::invalid_argument("InjectionPlan: site " + std::to_string(s) +
                                  " outside encoder depth " +
                                  std::to_string(network_depth));
    if (!seen.insert(s).second)
      throw std::invalid_argument("InjectionPlan: duplicate site " +
                                  std::to_string(s));
  }
  if (!sites.empty() && extractors.size() != sites.size())
    throw std::invalid_argument("InjectionPlan: one extractor set per site");
  if (!sites.empty() && stack_channels.size() != sites.size())
    throw std::invalid_argument("InjectionPlan: one channel count per site");
  for (int c : stack_channels)
    if (c <= 0)
      throw std::invalid_argument("InjectionPlan: channel counts must be positive");
}

InjectionPlan InjectionPlan::make(const std::vector<int>& sites,
                                  const std::vector<std::string>& extractor_ids,
                                  const features::ExtractorConfig& cfg) {
  InjectionPlan plan;
  plan.sites = sites;
  const std::set<std::string> ids(extractor_ids.begin(), extractor_ids.end());
  const int channels = features::extract_channel_count(ids, cfg);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    plan.extractors.push_back(extractor_ids);
    plan.stack_channels.push_back(channels);
  }
  return plan;
}

InjectionAdapter::InjectionAdapter(ParamStore& ps, const std::string& prefix,
                                   const InjectionPlan& plan,
                                   const std::vector<int>& actual_stack_channels,
                                   const std::vector<int>& site_input_channels,
                                   Rng& rng)
    : sites_(plan.sites), add_projected_input_(plan.add_projected_input) {
  if (actual_stack_channels.size() != plan.sites.size() ||
      site_input_channels.size() != plan.sites.size())
    throw std::invalid_argument(
        "InjectionAdapter: need per-site stack and input channel counts");
  for (std::size_t i = 0; i < plan.sites.size(); ++i) {
    if (!plan.stack_channels.empty() &&
        plan.stack_channels[i] != actual_stack_channels[i])
      throw std::invalid_argument(
          "InjectionAdapter: site " + std::to_string(plan.sites[i]) +
          " declares " + std::to_string(plan.stack_channels[i]) +
          " stack channels but is bound to " +
          std::to_string(actual_stack_channels[i]));
    const int f = actual_stack_channels[i];
    const int c = site_input_channels[i];
    Site s;
    const std::string sp = prefix + ".site" + std::to_string(plan.sites[i]);
    s.align = nn::Conv2dLayer(ps, sp + ".align", 3, 3, f, f, true, rng);
    s.proj = nn::Conv2dLayer(ps, sp + ".proj", 1, 1, c, f, true, rng);
    s.focus = nn::Conv2dLayer(ps, sp + ".focus", 1, 1, f, 1, true, rng);
    // Near-passthrough at init (sigmoid(2) ~ 0.88): the modulation starts
    // close to the identity and learns to close where features warrant,
    // instead of halving the site input from the first step.
    s.focus.b->value.fill(2.0);
    site_weights_.push_back(std::move(s));
    stack_channels_.push_back(f);
  }
}

Var InjectionAdapter::modulation_map(int pos, const Var& site_input,
                                     const Var& stack) const {
  const Site& s = site_weights_.at(pos);
  const nn::Shape is = site_input.shape(), ss = stack.shape();
  if (is.h != ss.h || is.w != ss.w || is.n != ss.n)
    throw std::invalid_argument(
        "inject: stack spatial dims " + ss.str() +
        " do not match site input " + is.str());
  if (ss.c != stack_channels_.at(pos))
    throw std::invalid_argument("inject: stack has " + std::to_string(ss.c) +
                                " channels, adapter expects " +
                                std::to_string(stack_channels_.at(pos)));
  Var a = s.align(stack);
  Var b = add_projected_input_ ? nn::add(a, s.proj(site_input)) : a;
  return nn::sigmoid(s.focus(b));
}

Var InjectionAdapter::inject(int pos, const Var& site_input,
                             const Var& stack) const {
  return nn::scale_spatial(site_input, modulation_map(pos, site_input, stack));
}

Tensor stack_to_tensor(const features::FeatureStack& stack) {
  Tensor t(nn::Shape{1, stack.h, stack.w, stack.count()});
  for (int c = 0; c < stack.count(); ++c) {
    const img::Plane& p = stack.channels[c];
    for (int y = 0; y < stack.h; ++y)
      for (int x = 0; x < stack.w; ++x) t.at(0, y, x, c) = p.at(y, x);
  }
  return t;
}

}  // namespace daufi::infusion
