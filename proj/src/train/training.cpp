#include "train/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <stdexcept>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace daufi::train {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs < 0");
  if (batch_size <= 0) throw std::invalid_argument("TrainConfig: batch_size <= 0");
  if (lr0 <= 0.0) throw std::invalid_argument("TrainConfig: lr0 must be positive");
  if (decay_rate < 0.0 || decay_rate >= 1.0)
    throw std::invalid_argument("TrainConfig: decay_rate must be in [0,1)");
  if (decay_start_epoch < 0)
    throw std::invalid_argument("TrainConfig: decay_start_epoch < 0");
  if (checkpoint_every < 0)
    throw std::invalid_argument("TrainConfig: checkpoint_every < 0");
  if (background_weight < 0.0)
    throw std::invalid_argument("TrainConfig: background_weight < 0");
}

std::string TrainState::to_json() const {
  json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["current_lr"] = current_lr;
  j["best_val_miou"] = best_val_miou;
  j["rng_state"] = rng_state;
  return j.dump();
}

TrainState TrainState::from_json(const std::string& s) {
  json j = json::parse(s);
  TrainState st;
  st.epoch = j.at("epoch").get<int>();
  st.step = j.at("step").get<std::int64_t>();
  st.current_lr = j.at("current_lr").get<double>();
  st.best_val_miou = j.at("best_val_miou").get<double>();
  st.rng_state = j.at("rng_state").get<std::string>();
  return st;
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: negative epoch");
  if (epoch < cfg.decay_start_epoch) return cfg.lr0;
  return cfg.lr0 *
         std::pow(1.0 - cfg.decay_rate, epoch - cfg.decay_start_epoch);
}

double ce_loss(const Tensor& probs, const std::vector<std::int32_t>& gt,
               const std::vector<double>& class_weights) {
  nn::Var p = nn::constant(probs);
  return nn::weighted_ce(p, gt, class_weights).value()[0];
}

Adam::Adam(nn::ParamStore& params, double beta1, double beta2, double eps)
    : params_(&params), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params.items()) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::restore(std::vector<Tensor> m, std::vector<Tensor> v,
                   std::int64_t t) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw std::invalid_argument("Adam::restore: state misaligned");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto& items = params_->items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    nn::Node& p = *items[i];
    if (p.grad.empty()) continue;
    for (std::int64_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g;
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g * g;
      const double mhat = m_[i][k] / bc1;
      const double vhat = v_[i][k] / bc2;
      p.value[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

Tensor images_to_tensor(const std::vector<const data::Sample*>& batch) {
  if (batch.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const int h = batch[0]->image.h, w = batch[0]->image.w;
  Tensor t(nn::Shape{static_cast<int>(batch.size()), h, w, 3});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const data::Sample& s = *batch[b];
    if (s.image.h != h || s.image.w != w)
      throw std::invalid_argument("images_to_tensor: mixed sizes in batch");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          t.at(static_cast<int>(b), y, x, c) = s.image.at(y, x, c) / 255.0;
  }
  return t;
}

std::vector<std::int32_t> masks_to_indices(
    const std::vector<const data::Sample*>& batch) {
  std::vector<std::int32_t> out;
  for (const data::Sample* s : batch)
    out.insert(out.end(), s->mask.v.begin(), s->mask.v.end());
  return out;
}

namespace {

std::vector<Tensor> batch_stacks(const std::vector<const data::Sample*>& batch,
                                 const StackProvider& provider,
                                 int num_sites) {
  // Per-sample stacks concatenated along the batch dimension, per site.
  std::vector<Tensor> out;
  std::vector<std::vector<Tensor>> per_sample;
  for (const data::Sample* s : batch) {
    per_sample.push_back(provider(*s));
    if (static_cast<int>(per_sample.back().size()) != num_sites)
      throw std::invalid_argument("stack provider returned wrong site count");
  }
  for (int k = 0; k < num_sites; ++k) {
    const Tensor& first = per_sample[0][k];
    Tensor t(nn::Shape{static_cast<int>(batch.size()), first.h(), first.w(),
                       first.c()});
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Tensor& src = per_sample[b][k];
      if (src.shape().h != first.h() || src.shape().c != first.c())
        throw std::invalid_argument("stack provider returned mixed shapes");
      std::copy(src.data(), src.data() + src.size(),
                t.data() + static_cast<std::int64_t>(b) * src.size());
    }
    out.push_back(std::move(t));
  }
  return out;
}

const data::Sample& sample_by_id(const std::vector<data::Sample>& samples,
                                 const std::string& id) {
  for (const data::Sample& s : samples)
    if (s.id == id) return s;
  throw std::invalid_argument("unknown sample id '" + id + "'");
}

}  // namespace

metrics::MetricsReport evaluate(const SegmentationModel& model,
                                const std::vector<data::Sample>& samples,
                                const data::ClassTable& table,
                                const StackProvider& stacks) {
  if (samples.empty())
    throw std::invalid_argument("evaluate: empty sample set");
  const bool injects =
      model.config().injection && model.config().injection->enabled();
  metrics::ConfusionMatrix cm(table.num_classes());
  for (const data::Sample& s : samples) {
    std::vector<const data::Sample*> one{&s};
    Tensor x = images_to_tensor(one);
    std::vector<Tensor> st;
    Tensor probs;
    if (injects) {
      if (!stacks) throw std::invalid_argument("evaluate: model needs stacks");
      st = batch_stacks(one, stacks,
                        static_cast<int>(model.config().injection->sites.size()));
      probs = model.predict(x, &st);
    } else {
      probs = model.predict(x);
    }
    cm.accumulate(nn::argmax_channels(probs), s.mask.v);
  }
  return metrics::compute_report(cm, table.ciw_values());
}

TrainState train(SegmentationModel& model,
                 const std::vector<data::Sample>& samples,
                 const std::vector<std::string>& train_ids,
                 const std::vector<std::string>& val_ids,
                 const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  if (!opts.table) throw std::invalid_argument("train: options need a class table");
  if (train_ids.empty()) throw std::invalid_argument("train: no training ids");
  const bool injects =
      model.config().injection && model.config().injection->enabled();
  if (injects && !opts.stacks)
    throw std::invalid_argument("train: injection model needs a stack provider");

  const std::vector<double> weights =
      cfg.ciw_loss_weighting ? opts.table->loss_weights(cfg.background_weight)
                             : std::vector<double>{};

  Adam adam(model.params());
  nn::Rng loop_rng(cfg.seed);
  TrainState state;
  if (opts.resume) {
    state = TrainState::from_json(opts.resume->train_json);
    loop_rng.deserialize(state.rng_state);
    if (opts.resume->has_adam)
      adam.restore(opts.resume->adam_m, opts.resume->adam_v,
                   opts.resume->adam_t);
  }

  const bool keep_files = !opts.out_dir.empty();
  std::ofstream log;
  if (keep_files) {
    fs::create_directories(opts.out_dir);
    log.open(fs::path(opts.out_dir) / "train_log.jsonl", std::ios::app);
  }

  auto save = [&](const std::string& name) {
    if (!keep_files) return;
    state.rng_state = loop_rng.serialize();
    net::CheckpointExtra extra;
    extra.train_json = state.to_json();
    extra.has_adam = true;
    extra.adam_t = adam.t();
    extra.adam_m = adam.m();
    extra.adam_v = adam.v();
    net::save_checkpoint((fs::path(opts.out_dir) / name).string(), model,
                         &extra);
  };

  const int num_sites =
      injects ? static_cast<int>(model.config().injection->sites.size()) : 0;

  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    state.current_lr = lr;

    std::vector<std::string> order = train_ids;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[loop_rng.uniform_int(i)]);

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<const data::Sample*> batch;
      for (std::size_t i = start;
           i < std::min(order.size(),
                        start + static_cast<std::size_t>(cfg.batch_size));
           ++i)
        batch.push_back(&sample_by_id(samples, order[i]));

      Tensor x = images_to_tensor(batch);
      std::vector<std::int32_t> gt = masks_to_indices(batch);
      std::vector<Tensor> st;
      nn::Context ctx;
      ctx.training = true;
      ctx.rng = &loop_rng;
      nn::Var probs;
      if (injects) {
        st = batch_stacks(batch, opts.stacks, num_sites);
        probs = model.forward(x, &st, ctx);
      } else {
        probs = model.forward(x, nullptr, ctx);
      }
      nn::Var loss = nn::weighted_ce(probs, gt, weights);
      const double loss_val = loss.value()[0];
      if (!std::isfinite(loss_val)) {
        save("diagnostic.ckpt");
        throw std::runtime_error(
            "train: non-finite loss at epoch " + std::to_string(epoch) +
            ", step " + std::to_string(state.step) +
            (keep_files ? "; diagnostic checkpoint written" : ""));
      }
      model.params().zero_grad();
      nn::backward(loss);
      adam.step(lr);
      loss_sum += loss_val;
      ++batches;
      ++state.step;
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    rec.train_loss = batches > 0 ? loss_sum / batches : 0.0;

    // Validation metrics; the training split stands in when no val ids
    // exist (overfit harnesses).
    std::vector<data::Sample> val_samples;
    for (const std::string& id : (val_ids.empty() ? train_ids : val_ids))
      val_samples.push_back(sample_by_id(samples, id));
    rec.val = evaluate(model, val_samples, *opts.table, opts.stacks);
    state.history.push_back(rec);
    state.epoch = epoch + 1;

    if (log.is_open()) {
      json j;
      j["epoch"] = rec.epoch;
      j["lr"] = rec.lr;
      j["train_loss"] = rec.train_loss;
      j["val"] = json::parse(rec.val.to_json());
      log << j.dump() << "\n";
      log.flush();
    }
    if (opts.on_epoch) opts.on_epoch(rec);

    if (rec.val.iou_bg > state.best_val_miou) {
      state.best_val_miou = rec.val.iou_bg;
      save("best.ckpt");
    }
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      save("epoch_" + std::to_string(epoch + 1) + ".ckpt");
    if (opts.stop_early && opts.stop_early(rec)) break;
  }
  state.rng_state = loop_rng.serialize();
  save("last.ckpt");
  return state;
}

}  // namespace daufi::train
