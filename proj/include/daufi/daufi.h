/* daufi — dual-attention segmentation toolkit, C API.
 *
 * All functions return DAUFI_OK on success; on failure they return an error
 * code and leave a human-readable message in daufi_last_error() (thread
 * local). Handles are opaque and must be released with their _free function.
 */
#ifndef DAUFI_DAUFI_H_
#define DAUFI_DAUFI_H_

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum daufi_status {
  DAUFI_OK = 0,
  DAUFI_ERR_RUNTIME = 1, /* IO failures, numeric aborts, bad data */
  DAUFI_ERR_CONFIG = 2   /* invalid configuration or arguments */
} daufi_status;

const char* daufi_version(void);
const char* daufi_last_error(void);
void daufi_string_free(char* s);

/* ------------------------------------------------------------------ */
/* Command level: each takes the resolved run-configuration JSON (the   */
/* same schema the CLI reads; see the repository README).               */

daufi_status daufi_cmd_extract(const char* config_json);
daufi_status daufi_cmd_synth(const char* config_json);
daufi_status daufi_cmd_train(const char* config_json);
daufi_status daufi_cmd_eval(const char* config_json);
daufi_status daufi_cmd_ablate(const char* config_json);
/* report_out receives a malloc'd table; free with daufi_string_free.  */
daufi_status daufi_cmd_params(const char* config_json, char** report_out);

/* ------------------------------------------------------------------ */
/* Model handle                                                         */

typedef struct daufi_model daufi_model;

daufi_status daufi_model_create(const char* network_config_json,
                                uint64_t init_seed, daufi_model** out);
daufi_status daufi_model_load(const char* checkpoint_path, daufi_model** out);
daufi_status daufi_model_save(const daufi_model* model, const char* path);
void daufi_model_free(daufi_model* model);

daufi_status daufi_model_param_count(const daufi_model* model, uint64_t* out);
daufi_status daufi_model_num_classes(const daufi_model* model, int32_t* out);

/* Probability maps for an NHWC double image batch in [0,1]. probs_out
 * must hold n*h*w*num_classes doubles. Only valid for models without an
 * injection plan; use daufi_model_forward_with_features otherwise.     */
daufi_status daufi_model_forward(const daufi_model* model, const double* nhwc,
                                 int32_t n, int32_t h, int32_t w, int32_t c,
                                 double* probs_out);

/* stacks: per injection site, n*h*w*site_channels doubles at input
 * resolution (the model downsamples internally).                       */
daufi_status daufi_model_forward_with_features(
    const daufi_model* model, const double* nhwc, int32_t n, int32_t h,
    int32_t w, int32_t c, const double* const* stacks,
    const int32_t* stack_channels, int32_t num_sites, double* probs_out);

/* ------------------------------------------------------------------ */
/* Feature extraction                                                   */

/* Channel count for a comma-separated extractor list with default
 * parameters (gabor,sobel,canny,hog,color).                             */
daufi_status daufi_feature_channels(const char* extractors_csv, int32_t* out);

/* out must hold channels*h*w doubles, written channel-major in the
 * documented extractor order.                                           */
daufi_status daufi_extract_features(const uint8_t* rgb_interleaved, int32_t h,
                                    int32_t w, const char* extractors_csv,
                                    double* out);

/* ------------------------------------------------------------------ */
/* Metrics                                                              */

typedef struct daufi_confusion daufi_confusion;

daufi_status daufi_confusion_create(int32_t num_classes, daufi_confusion** out);
void daufi_confusion_free(daufi_confusion* cm);
daufi_status daufi_confusion_accumulate(daufi_confusion* cm,
                                        const int32_t* pred,
                                        const int32_t* gt, int64_t n);
/* ciw may be NULL (uniform weights). json_out receives a malloc'd JSON
 * report; free with daufi_string_free.                                  */
daufi_status daufi_confusion_report(const daufi_confusion* cm,
                                    const double* ciw, char** json_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DAUFI_DAUFI_H_ */
