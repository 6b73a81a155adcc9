#pragma once

#include <array>
#include <string>
#include <vector>

#include "train/training.hpp"

namespace daufi::pipeline {

// The single structured configuration every command runs from. Parsed from
// one JSON file with CLI overrides merged on top (overrides win); the fully
// resolved form is echoed into the output directory before any work starts.
struct RunConfig {
  net::NetworkConfig network;
  train::TrainConfig train;
  features::ExtractorConfig extractor;

  std::string data_root;
  std::string classes_path;  // "" = bundled sewer default
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 0;

  std::string out_dir = "out";
  std::string cache_dir;  // "" = $DAUFI_CACHE_DIR or <out_dir>/cache
  std::uint64_t model_seed = 1;
  bool cache_features = true;

  // extract command
  std::vector<std::string> extract_features{"gabor", "sobel", "canny"};
  std::string extract_in;  // image dir; "" = <data_root>/images
  std::string mask_dir;    // optional annotation-guided extraction

  // synth command
  int synth_num = 20;
  int synth_height = 64;
  int synth_width = 64;
  std::uint64_t synth_seed = 7;

  // train command
  std::string resume_from;  // checkpoint to continue from

  // eval command
  std::string eval_checkpoint;
  std::string eval_split = "all";  // all|train|val|test
  bool eval_plots = false;

  void validate() const;
  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  // Parses `path` (or defaults when empty) and merges `overrides_json` on top.
  static RunConfig load(const std::string& path,
                        const std::string& overrides_json);

  std::string resolved_cache_dir() const;
};

struct ExtractSummary {
  int computed = 0;
  int cache_hits = 0;
  int channels_per_image = 0;
};

ExtractSummary run_extract(const RunConfig& cfg);
void run_synth(const RunConfig& cfg);
train::TrainState run_train(const RunConfig& cfg);
metrics::MetricsReport run_eval(const RunConfig& cfg);

struct AblationRow {
  std::string variant;
  std::int64_t param_count = 0;
  metrics::MetricsReport report;
};
// Trains and evaluates P1..P6 under one shared TrainConfig and seed; writes
// the comparison table (IoU w/ bg, IoU w/o bg, FWIoU, F1, Bal. Acc, MCC).
std::vector<AblationRow> run_ablate(const RunConfig& cfg);

std::string run_params(const RunConfig& cfg);

// Cache-backed per-sample feature stack provider for a model's injection
// plan. Stacks are memoized in memory and, when `cfg.cache_features`, on
// disk keyed by (image hash, extractor params hash).
train::StackProvider make_stack_provider(const RunConfig& cfg,
                                         const net::NetworkConfig& net_cfg);

// Table in the ablation study's column order.
std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace daufi::pipeline
