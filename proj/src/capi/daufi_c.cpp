#include "daufi/daufi.h"

#include <cstring>
#include <memory>
#include <set>
#include <sstream>
#include <string>

#include "pipeline/pipeline.hpp"

#if defined(__GNUC__)
#define DAUFI_EXPORT __attribute__((visibility("default")))
#else
#define DAUFI_EXPORT
#endif

namespace {

thread_local std::string g_last_error;

daufi_status fail(daufi_status code, const char* what) {
  g_last_error = what ? what : "unknown error";
  return code;
}

// std::invalid_argument and std::domain_error map to configuration errors,
// everything else to runtime failures.
template <typename F>
daufi_status guard(F&& f) {
  try {
    f();
    return DAUFI_OK;
  } catch (const std::invalid_argument& e) {
    return fail(DAUFI_ERR_CONFIG, e.what());
  } catch (const std::domain_error& e) {
    return fail(DAUFI_ERR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(DAUFI_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(DAUFI_ERR_RUNTIME, "unknown exception");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::set<std::string> parse_csv(const char* csv) {
  std::set<std::string> out;
  if (!csv) return out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.insert(tok);
  return out;
}

}  // namespace

struct daufi_model {
  std::unique_ptr<daufi::net::SegmentationModel> impl;
};

struct daufi_confusion {
  daufi::metrics::ConfusionMatrix impl;
  explicit daufi_confusion(int k) : impl(k) {}
};

extern "C" {

DAUFI_EXPORT const char* daufi_version(void) { return "0.1.0"; }

DAUFI_EXPORT const char* daufi_last_error(void) { return g_last_error.c_str(); }

DAUFI_EXPORT void daufi_string_free(char* s) { std::free(s); }

// ---------------------------------------------------------------------------

#define DAUFI_CMD(name, call)                                            \
  DAUFI_EXPORT daufi_status name(const char* config_json) {              \
    if (!config_json) return fail(DAUFI_ERR_CONFIG, "null config");      \
    return guard([&] {                                                   \
      auto cfg = daufi::pipeline::RunConfig::from_json(config_json);     \
      call;                                                              \
    });                                                                  \
  }

DAUFI_CMD(daufi_cmd_extract, daufi::pipeline::run_extract(cfg))
DAUFI_CMD(daufi_cmd_synth, daufi::pipeline::run_synth(cfg))
DAUFI_CMD(daufi_cmd_train, daufi::pipeline::run_train(cfg))
DAUFI_CMD(daufi_cmd_eval, daufi::pipeline::run_eval(cfg))
DAUFI_CMD(daufi_cmd_ablate, daufi::pipeline::run_ablate(cfg))

#undef DAUFI_CMD

DAUFI_EXPORT daufi_status daufi_cmd_params(const char* config_json,
                                           char** report_out) {
  if (!config_json || !report_out)
    return fail(DAUFI_ERR_CONFIG, "null argument");
  return guard([&] {
    auto cfg = daufi::pipeline::RunConfig::from_json(config_json);
    *report_out = dup_string(daufi::pipeline::run_params(cfg));
  });
}

// ---------------------------------------------------------------------------

DAUFI_EXPORT daufi_status daufi_model_create(const char* network_config_json,
                                             uint64_t init_seed,
                                             daufi_model** out) {
  if (!network_config_json || !out)
    return fail(DAUFI_ERR_CONFIG, "null argument");
  return guard([&] {
    auto cfg = daufi::net::NetworkConfig::from_json(network_config_json);
    auto m = std::make_unique<daufi_model>();
    m->impl = std::make_unique<daufi::net::SegmentationModel>(cfg, init_seed);
    *out = m.release();
  });
}

DAUFI_EXPORT daufi_status daufi_model_load(const char* checkpoint_path,
                                           daufi_model** out) {
  if (!checkpoint_path || !out) return fail(DAUFI_ERR_CONFIG, "null argument");
  return guard([&] {
    auto m = std::make_unique<daufi_model>();
    m->impl = daufi::net::load_checkpoint(checkpoint_path);
    *out = m.release();
  });
}

DAUFI_EXPORT daufi_status daufi_model_save(const daufi_model* model,
                                           const char* path) {
  if (!model || !path) return fail(DAUFI_ERR_CONFIG, "null argument");
  return guard([&] { daufi::net::save_checkpoint(path, *model->impl); });
}

DAUFI_EXPORT void daufi_model_free(daufi_model* model) { delete model; }

DAUFI_EXPORT daufi_status daufi_model_param_count(const daufi_model* model,
                                                  uint64_t* out) {
  if (!model || !out) return fail(DAUFI_ERR_CONFIG, "null argument");
  *out = static_cast<uint64_t>(model->impl->parameter_count());
  return DAUFI_OK;
}

DAUFI_EXPORT daufi_status daufi_model_num_classes(const daufi_model* model,
                                                  int32_t* out) {
  if (!model || !out) return fail(DAUFI_ERR_CONFIG, "null argument");
  *out = model->impl->config().num_classes;
  return DAUFI_OK;
}

namespace {

daufi_status forward_impl(const daufi_model* model, const double* nhwc,
                          int32_t n, int32_t h, int32_t w, int32_t c,
                          const double* const* stacks,
                          const int32_t* stack_channels, int32_t num_sites,
                          double* probs_out) {
  if (!model || !nhwc || !probs_out)
    return fail(DAUFI_ERR_CONFIG, "null argument");
  return guard([&] {
    daufi::nn::Tensor x(daufi::nn::Shape{n, h, w, c});
    std::memcpy(x.data(), nhwc, sizeof(double) * x.size());
    std::vector<daufi::nn::Tensor> st;
    for (int32_t k = 0; k < num_sites; ++k) {
      daufi::nn::Tensor t(daufi::nn::Shape{n, h, w, stack_channels[k]});
      std::memcpy(t.data(), stacks[k], sizeof(double) * t.size());
      st.push_back(std::move(t));
    }
    daufi::nn::Tensor probs =
        model->impl->predict(x, num_sites > 0 ? &st : nullptr);
    std::memcpy(probs_out, probs.data(), sizeof(double) * probs.size());
  });
}

}  // namespace

DAUFI_EXPORT daufi_status daufi_model_forward(const daufi_model* model,
                                              const double* nhwc, int32_t n,
                                              int32_t h, int32_t w, int32_t c,
                                              double* probs_out) {
  return forward_impl(model, nhwc, n, h, w, c, nullptr, nullptr, 0, probs_out);
}

DAUFI_EXPORT daufi_status daufi_model_forward_with_features(
    const daufi_model* model, const double* nhwc, int32_t n, int32_t h,
    int32_t w, int32_t c, const double* const* stacks,
    const int32_t* stack_channels, int32_t num_sites, double* probs_out) {
  if (num_sites > 0 && (!stacks || !stack_channels))
    return fail(DAUFI_ERR_CONFIG, "null stack arguments");
  return forward_impl(model, nhwc, n, h, w, c, stacks, stack_channels,
                      num_sites, probs_out);
}

// ---------------------------------------------------------------------------

DAUFI_EXPORT daufi_status daufi_feature_channels(const char* extractors_csv,
                                                 int32_t* out) {
  if (!out) return fail(DAUFI_ERR_CONFIG, "null argument");
  return guard([&] {
    daufi::features::ExtractorConfig cfg;
    *out = daufi::features::extract_channel_count(parse_csv(extractors_csv),
                                                  cfg);
  });
}

DAUFI_EXPORT daufi_status daufi_extract_features(const uint8_t* rgb_interleaved,
                                                 int32_t h, int32_t w,
                                                 const char* extractors_csv,
                                                 double* out) {
  if (!rgb_interleaved || !out) return fail(DAUFI_ERR_CONFIG, "null argument");
  return guard([&] {
    daufi::img::ImageU8 im(h, w, 3);
    std::memcpy(im.v.data(), rgb_interleaved, im.v.size());
    daufi::features::ExtractorConfig cfg;
    daufi::features::FeatureStack stack =
        daufi::features::extract(im, parse_csv(extractors_csv), cfg);
    double* dst = out;
    for (const daufi::img::Plane& ch : stack.channels) {
      std::memcpy(dst, ch.v.data(), sizeof(double) * ch.v.size());
      dst += ch.v.size();
    }
  });
}

// ---------------------------------------------------------------------------

DAUFI_EXPORT daufi_status daufi_confusion_create(int32_t num_classes,
                                                 daufi_confusion** out) {
  if (!out) return fail(DAUFI_ERR_CONFIG, "null argument");
  return guard([&] { *out = new daufi_confusion(num_classes); });
}

DAUFI_EXPORT void daufi_confusion_free(daufi_confusion* cm) { delete cm; }

DAUFI_EXPORT daufi_status daufi_confusion_accumulate(daufi_confusion* cm,
                                                     const int32_t* pred,
                                                     const int32_t* gt,
                                                     int64_t n) {
  if (!cm || !pred || !gt) return fail(DAUFI_ERR_CONFIG, "null argument");
  return guard([&] {
    std::vector<int32_t> p(pred, pred + n), g(gt, gt + n);
    cm->impl.accumulate(p, g);
  });
}

DAUFI_EXPORT daufi_status daufi_confusion_report(const daufi_confusion* cm,
                                                 const double* ciw,
                                                 char** json_out) {
  if (!cm || !json_out) return fail(DAUFI_ERR_CONFIG, "null argument");
  return guard([&] {
    std::vector<double> weights;
    if (ciw)
      weights.assign(ciw, ciw + cm->impl.num_classes());
    else
      weights.assign(cm->impl.num_classes(), 1.0);
    auto report = daufi::metrics::compute_report(cm->impl, weights);
    *json_out = dup_string(report.to_json());
  });
}

}  // extern "C"
