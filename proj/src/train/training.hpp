#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "data/synthetic.hpp"
#include "metrics/metrics.hpp"
#include "net/checkpoint.hpp"
#include "net/network.hpp"

namespace daufi::train {

using net::SegmentationModel;
using nn::Tensor;

struct TrainConfig {
  int epochs = 50;
  int batch_size = 2;
  double lr0 = 1e-3;
  double decay_rate = 1e-4;       // per-epoch multiplicative decay (1 - rate)
  int decay_start_epoch = 10;
  bool ciw_loss_weighting = true;
  double background_weight = 0.05;  // loss weight of class 0 under CIW mode
  std::uint64_t seed = 0;
  int checkpoint_every = 10;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  metrics::MetricsReport val;
};

struct TrainState {
  int epoch = 0;          // epochs completed
  std::int64_t step = 0;  // optimizer steps taken
  double current_lr = 0.0;
  double best_val_miou = -1.0;
  std::string rng_state;
  std::vector<EpochRecord> history;

  std::string to_json() const;
  static TrainState from_json(const std::string& s);
};

// lr0 before decay_start_epoch, then lr0 * (1-decay_rate)^(epoch - start).
double lr_schedule(int epoch, const TrainConfig& cfg);

// Mean over pixels of -w[gt] * log(p[gt] + 1e-12).
double ce_loss(const Tensor& probs, const std::vector<std::int32_t>& gt,
               const std::vector<double>& class_weights);

class Adam {
 public:
  explicit Adam(nn::ParamStore& params, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void step(double lr);

  std::int64_t t() const { return t_; }
  const std::vector<Tensor>& m() const { return m_; }
  const std::vector<Tensor>& v() const { return v_; }
  void restore(std::vector<Tensor> m, std::vector<Tensor> v, std::int64_t t);

 private:
  nn::ParamStore* params_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Returns the per-site feature stack tensors for one sample, already at
// input resolution; empty when the model takes no features.
using StackProvider = std::function<std::vector<Tensor>(const data::Sample&)>;

struct TrainOptions {
  const data::ClassTable* table = nullptr;  // required
  StackProvider stacks;                     // required iff model injects
  std::string out_dir;                      // "" = no checkpoints/logs
  const net::CheckpointExtra* resume = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;  // optional observer
  // Early stopping: training ends after the first epoch for which this
  // returns true.
  std::function<bool(const EpochRecord&)> stop_early;
};

// Full loop: shuffled mini-batches, Adam with the decay schedule, per-epoch
// validation metrics, periodic + best checkpoints. Aborts with a diagnostic
// checkpoint on a non-finite loss.
TrainState train(SegmentationModel& model,
                 const std::vector<data::Sample>& samples,
                 const std::vector<std::string>& train_ids,
                 const std::vector<std::string>& val_ids,
                 const TrainConfig& cfg, const TrainOptions& opts);

// Argmax predictions accumulated into one confusion matrix over `samples`.
metrics::MetricsReport evaluate(const SegmentationModel& model,
                                const std::vector<data::Sample>& samples,
                                const data::ClassTable& table,
                                const StackProvider& stacks = {});

// Batch conversion helpers shared with the pipeline.
Tensor images_to_tensor(const std::vector<const data::Sample*>& batch);
std::vector<std::int32_t> masks_to_indices(
    const std::vector<const data::Sample*>& batch);

}  // namespace daufi::train
