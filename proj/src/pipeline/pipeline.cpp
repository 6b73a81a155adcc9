#include "pipeline/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "pipeline/plots.hpp"
#include "util/hash.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace daufi::pipeline {

namespace {

json merge_json(json base, const json& overrides) {
  if (!overrides.is_object() || !base.is_object()) return overrides;
  for (const auto& [key, value] : overrides.items()) {
    if (base.contains(key) && base[key].is_object() && value.is_object())
      base[key] = merge_json(base[key], value);
    else
      base[key] = value;
  }
  return base;
}

json extractor_to_json(const features::ExtractorConfig& e) {
  json j;
  j["gabor"] = {{"orientations", e.gabor.orientations},
                {"wavelengths", e.gabor.wavelengths},
                {"sigma_ratio", e.gabor.sigma_ratio},
                {"gamma", e.gabor.gamma},
                {"kernel_size", e.gabor.kernel_size},
                {"phase", e.gabor.phase},
                {"include_imaginary", e.gabor.include_imaginary}};
  j["canny"] = {{"gaussian_sigma", e.canny.gaussian_sigma},
                {"gaussian_kernel_size", e.canny.gaussian_kernel_size},
                {"low_ratio", e.canny.low_ratio},
                {"high_ratio", e.canny.high_ratio}};
  j["hog"] = {{"cell_size", e.hog.cell_size},
              {"num_bins", e.hog.num_bins},
              {"block_size", e.hog.block_size}};
  j["color"] = {{"local_std_window", e.color.local_std_window}};
  return j;
}

features::ExtractorConfig extractor_from_json(const json& j) {
  features::ExtractorConfig e;
  if (j.contains("gabor")) {
    const json& g = j["gabor"];
    e.gabor.orientations = g.value("orientations", e.gabor.orientations);
    e.gabor.wavelengths = g.value("wavelengths", e.gabor.wavelengths);
    e.gabor.sigma_ratio = g.value("sigma_ratio", e.gabor.sigma_ratio);
    e.gabor.gamma = g.value("gamma", e.gabor.gamma);
    e.gabor.kernel_size = g.value("kernel_size", e.gabor.kernel_size);
    e.gabor.phase = g.value("phase", e.gabor.phase);
    e.gabor.include_imaginary =
        g.value("include_imaginary", e.gabor.include_imaginary);
  }
  if (j.contains("canny")) {
    const json& c = j["canny"];
    e.canny.gaussian_sigma = c.value("gaussian_sigma", e.canny.gaussian_sigma);
    e.canny.gaussian_kernel_size =
        c.value("gaussian_kernel_size", e.canny.gaussian_kernel_size);
    e.canny.low_ratio = c.value("low_ratio", e.canny.low_ratio);
    e.canny.high_ratio = c.value("high_ratio", e.canny.high_ratio);
  }
  if (j.contains("hog")) {
    const json& h = j["hog"];
    e.hog.cell_size = h.value("cell_size", e.hog.cell_size);
    e.hog.num_bins = h.value("num_bins", e.hog.num_bins);
    e.hog.block_size = h.value("block_size", e.hog.block_size);
  }
  if (j.contains("color"))
    e.color.local_std_window =
        j["color"].value("local_std_window", e.color.local_std_window);
  return e;
}

data::ClassTable load_table(const RunConfig& cfg) {
  if (!cfg.classes_path.empty()) return data::ClassTable::load(cfg.classes_path);
  // A dataset directory may bundle its own table.
  if (!cfg.data_root.empty()) {
    const fs::path p = fs::path(cfg.data_root) / "classes.csv";
    if (fs::exists(p)) return data::ClassTable::load(p.string());
  }
  return data::ClassTable::sewer_default();
}

std::string image_hash(const img::ImageU8& im) {
  std::uint64_t h = util::fnv1a64(&im.h, sizeof(im.h));
  h = util::fnv1a64(&im.w, sizeof(im.w), h);
  h = util::fnv1a64(im.v.data(), im.v.size(), h);
  return util::hex64(h);
}

std::string set_hash(const std::set<std::string>& ids,
                     const features::ExtractorConfig& e) {
  std::string canon = e.canonical() + "|ids=";
  for (const std::string& id : ids) canon += id + ",";
  return util::hex64(util::fnv1a64(canon));
}

// One container per image per extractor-set hash, plus a JSON sidecar.
fs::path cache_file(const std::string& cache_dir, const std::string& img_hash,
                    const std::string& sethash) {
  return fs::path(cache_dir) / (img_hash + "_" + sethash + ".dfsk");
}

void write_stack_atomic(const fs::path& path,
                        const features::FeatureStack& stack,
                        const std::string& image_id,
                        const std::string& img_hash,
                        const std::set<std::string>& ids) {
  const fs::path tmp = path.string() + ".tmp";
  features::save_stack(tmp.string(), stack);
  fs::rename(tmp, path);
  json side;
  side["image_id"] = image_id;
  side["image_hash"] = img_hash;
  side["extractors"] = std::vector<std::string>(ids.begin(), ids.end());
  side["params_hash"] = stack.params_hash;
  side["channels"] = stack.names;
  const fs::path stmp = path.string() + ".json.tmp";
  std::ofstream f(stmp);
  f << side.dump(2) << "\n";
  f.close();
  fs::rename(stmp, fs::path(path.string() + ".json"));
}

}  // namespace

void RunConfig::validate() const {
  network.validate();
  train.validate();
  const double fsum = split[0] + split[1] + split[2];
  if (std::abs(fsum - 1.0) > 1e-9)
    throw std::invalid_argument("RunConfig: split fractions must sum to 1");
  for (double f : split)
    if (f < 0.0)
      throw std::invalid_argument("RunConfig: negative split fraction");
  if (out_dir.empty())
    throw std::invalid_argument("RunConfig: out_dir must be set");
  if (synth_num < 0 || synth_height <= 0 || synth_width <= 0)
    throw std::invalid_argument("RunConfig: bad synth geometry");
  for (const std::string& e : extract_features)
    if (std::find(features::kExtractorOrder.begin(),
                  features::kExtractorOrder.end(),
                  e) == features::kExtractorOrder.end())
      throw std::invalid_argument("RunConfig: unknown extractor '" + e + "'");
  if (eval_split != "all" && eval_split != "train" && eval_split != "val" &&
      eval_split != "test")
    throw std::invalid_argument("RunConfig: eval_split must be "
                                "all|train|val|test");
}

std::string RunConfig::to_json() const {
  json j;
  j["network"] = json::parse(network.to_json());
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"lr0", train.lr0},
                {"decay_rate", train.decay_rate},
                {"decay_start_epoch", train.decay_start_epoch},
                {"ciw_loss_weighting", train.ciw_loss_weighting},
                {"background_weight", train.background_weight},
                {"seed", train.seed},
                {"checkpoint_every", train.checkpoint_every}};
  j["extractor"] = extractor_to_json(extractor);
  j["data"] = {{"root", data_root},
               {"classes", classes_path},
               {"split", split},
               {"split_seed", split_seed}};
  j["out_dir"] = out_dir;
  j["cache_dir"] = cache_dir;
  j["model_seed"] = model_seed;
  j["cache_features"] = cache_features;
  j["extract"] = {{"features", extract_features},
                  {"in", extract_in},
                  {"mask_dir", mask_dir}};
  j["synth"] = {{"num", synth_num},
                {"height", synth_height},
                {"width", synth_width},
                {"seed", synth_seed}};
  j["eval"] = {{"checkpoint", eval_checkpoint},
               {"split", eval_split},
               {"plots", eval_plots}};
  j["resume_from"] = resume_from;
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  RunConfig c;
  if (j.contains("extractor")) c.extractor = extractor_from_json(j["extractor"]);
  if (j.contains("network")) {
    json nj = j["network"];
    // Injection may be declared as {sites, features}; resolve channel counts
    // against the extractor configuration.
    if (nj.contains("injection") && !nj["injection"].is_null() &&
        !nj["injection"].contains("stack_channels")) {
      const json& ji = nj["injection"];
      const auto sites = ji.value("sites", std::vector<int>{0, 1});
      const auto feats = ji.value(
          "features", std::vector<std::string>{"gabor", "sobel", "canny"});
      auto plan = infusion::InjectionPlan::make(sites, feats, c.extractor);
      plan.add_projected_input = ji.value("add_projected_input", true);
      plan.trace = ji.value("trace", false);
      json pj;
      pj["sites"] = plan.sites;
      pj["extractors"] = plan.extractors;
      pj["stack_channels"] = plan.stack_channels;
      pj["add_projected_input"] = plan.add_projected_input;
      pj["trace"] = plan.trace;
      nj["injection"] = pj;
    }
    if (!nj.contains("num_classes")) nj["num_classes"] = 2;
    c.network = net::NetworkConfig::from_json(nj.dump());
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.lr0 = t.value("lr0", c.train.lr0);
    c.train.decay_rate = t.value("decay_rate", c.train.decay_rate);
    c.train.decay_start_epoch =
        t.value("decay_start_epoch", c.train.decay_start_epoch);
    c.train.ciw_loss_weighting =
        t.value("ciw_loss_weighting", c.train.ciw_loss_weighting);
    c.train.background_weight =
        t.value("background_weight", c.train.background_weight);
    c.train.seed = t.value("seed", c.train.seed);
    c.train.checkpoint_every =
        t.value("checkpoint_every", c.train.checkpoint_every);
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    c.data_root = d.value("root", c.data_root);
    c.classes_path = d.value("classes", c.classes_path);
    if (d.contains("split")) {
      auto v = d["split"].get<std::vector<double>>();
      if (v.size() != 3)
        throw std::invalid_argument("RunConfig: split needs 3 fractions");
      c.split = {v[0], v[1], v[2]};
    }
    c.split_seed = d.value("split_seed", c.split_seed);
  }
  c.out_dir = j.value("out_dir", c.out_dir);
  c.cache_dir = j.value("cache_dir", c.cache_dir);
  c.model_seed = j.value("model_seed", c.model_seed);
  c.cache_features = j.value("cache_features", c.cache_features);
  if (j.contains("extract")) {
    const json& e = j["extract"];
    c.extract_features = e.value("features", c.extract_features);
    c.extract_in = e.value("in", c.extract_in);
    c.mask_dir = e.value("mask_dir", c.mask_dir);
  }
  if (j.contains("synth")) {
    const json& s = j["synth"];
    c.synth_num = s.value("num", c.synth_num);
    c.synth_height = s.value("height", c.synth_height);
    c.synth_width = s.value("width", c.synth_width);
    if (s.contains("size")) {
      c.synth_height = s["size"].get<int>();
      c.synth_width = c.synth_height;
    }
    c.synth_seed = s.value("seed", c.synth_seed);
  }
  c.resume_from = j.value("resume_from", c.resume_from);
  if (j.contains("eval")) {
    const json& e = j["eval"];
    c.eval_checkpoint = e.value("checkpoint", c.eval_checkpoint);
    c.eval_split = e.value("split", c.eval_split);
    c.eval_plots = e.value("plots", c.eval_plots);
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path,
                          const std::string& overrides_json) {
  json base = json::object();
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config file " + path);
    f >> base;
  }
  if (!overrides_json.empty())
    base = merge_json(base, json::parse(overrides_json));
  return from_json(base.dump());
}

std::string RunConfig::resolved_cache_dir() const {
  if (!cache_dir.empty()) return cache_dir;
  if (const char* env = std::getenv("DAUFI_CACHE_DIR"); env && *env)
    return env;
  return (fs::path(out_dir) / "cache").string();
}

// ---------------------------------------------------------------------------

ExtractSummary run_extract(const RunConfig& cfg) {
  const std::string in =
      cfg.extract_in.empty()
          ? (fs::path(cfg.data_root) / "images").string()
          : cfg.extract_in;
  if (!fs::is_directory(in))
    throw std::invalid_argument("extract: no such image directory: " + in);
  const std::string cache = cfg.resolved_cache_dir();
  fs::create_directories(cache);

  const std::set<std::string> ids(cfg.extract_features.begin(),
                                  cfg.extract_features.end());
  if (ids.empty()) throw std::invalid_argument("extract: empty feature set");
  const std::string sethash = set_hash(ids, cfg.extractor);

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in)) {
    const std::string ext = e.path().extension().string();
    if (ext == ".png" || ext == ".ppm" || ext == ".pgm")
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  ExtractSummary summary;
  summary.channels_per_image = features::extract_channel_count(ids, cfg.extractor);
  for (const fs::path& file : files) {
    img::ImageU8 im = img::read_image(file.string());
    if (im.channels == 1) {
      img::ImageU8 rgb(im.h, im.w, 3);
      for (std::size_t i = 0; i < im.v.size(); ++i)
        for (int c = 0; c < 3; ++c) rgb.v[i * 3 + c] = im.v[i];
      im = std::move(rgb);
    }
    const std::string ih = image_hash(im);
    const fs::path out = cache_file(cache, ih, sethash);
    if (fs::exists(out)) {
      ++summary.cache_hits;
      std::cout << "extract: cache hit for " << file.filename().string()
                << "\n";
      continue;
    }
    std::unique_ptr<img::Plane> mask;
    if (!cfg.mask_dir.empty()) {
      const fs::path mp = fs::path(cfg.mask_dir) / file.filename();
      if (fs::exists(mp)) {
        img::ImageU8 mi = img::read_image(mp.string());
        mask = std::make_unique<img::Plane>(mi.h, mi.w);
        for (int y = 0; y < mi.h; ++y)
          for (int x = 0; x < mi.w; ++x)
            mask->at(y, x) = mi.at(y, x, 0) > 0 ||
                                     (mi.channels == 3 &&
                                      (mi.at(y, x, 1) > 0 || mi.at(y, x, 2) > 0))
                                 ? 1.0
                                 : 0.0;
      }
    }
    features::FeatureStack stack =
        features::extract(im, ids, cfg.extractor, mask.get());
    write_stack_atomic(out, stack, file.stem().string(), ih, ids);
    ++summary.computed;
  }

  // Regenerate the global manifest from the sidecars.
  json manifest = json::array();
  std::vector<fs::path> sidecars;
  for (const auto& e : fs::directory_iterator(cache))
    if (e.path().extension() == ".json" &&
        e.path().string().find(".dfsk.json") != std::string::npos)
      sidecars.push_back(e.path());
  std::sort(sidecars.begin(), sidecars.end());
  for (const fs::path& s : sidecars) {
    std::ifstream f(s);
    json entry;
    f >> entry;
    entry["file"] = s.stem().string();  // <hash>_<sethash>.dfsk
    manifest.push_back(entry);
  }
  const fs::path mtmp = fs::path(cache) / "manifest.json.tmp";
  std::ofstream mf(mtmp);
  mf << manifest.dump(2) << "\n";
  mf.close();
  fs::rename(mtmp, fs::path(cache) / "manifest.json");
  return summary;
}

void run_synth(const RunConfig& cfg) {
  const data::ClassTable table =
      cfg.classes_path.empty() ? data::ClassTable::sewer_default()
                               : data::ClassTable::load(cfg.classes_path);
  auto samples = data::generate_synthetic(cfg.synth_num, cfg.synth_height,
                                          cfg.synth_width, cfg.synth_seed,
                                          table);
  const std::string root =
      cfg.data_root.empty() ? (fs::path(cfg.out_dir) / "synth").string()
                            : cfg.data_root;
  data::save_dataset(root, samples, table);
  std::cout << "synth: wrote " << samples.size() << " samples to " << root
            << "\n";
}

train::StackProvider make_stack_provider(const RunConfig& cfg,
                                         const net::NetworkConfig& net_cfg) {
  if (!net_cfg.injection || !net_cfg.injection->enabled()) return {};
  const infusion::InjectionPlan plan = *net_cfg.injection;
  const features::ExtractorConfig ecfg = cfg.extractor;
  const std::string cache = cfg.resolved_cache_dir();
  const bool use_disk = cfg.cache_features;
  if (use_disk) fs::create_directories(cache);

  // Distinct extractor sets are computed once per sample; sites sharing a
  // set reuse the tensor.
  auto memo = std::make_shared<std::map<std::string, std::vector<nn::Tensor>>>();
  return [plan, ecfg, cache, use_disk, memo](const data::Sample& s) {
    if (auto it = memo->find(s.id); it != memo->end()) return it->second;
    const std::string ih = image_hash(s.image);
    std::map<std::string, nn::Tensor> by_set;
    std::vector<nn::Tensor> out;
    for (std::size_t pos = 0; pos < plan.sites.size(); ++pos) {
      const std::set<std::string> ids(plan.extractors[pos].begin(),
                                      plan.extractors[pos].end());
      const std::string key = set_hash(ids, ecfg);
      auto found = by_set.find(key);
      if (found == by_set.end()) {
        features::FeatureStack stack;
        const fs::path file = cache_file(cache, ih, key);
        if (use_disk && fs::exists(file)) {
          stack = features::load_stack(file.string());
        } else {
          stack = features::extract(s.image, ids, ecfg);
          if (use_disk) write_stack_atomic(file, stack, s.id, ih, ids);
        }
        found = by_set.emplace(key, infusion::stack_to_tensor(stack)).first;
      }
      out.push_back(found->second);
    }
    (*memo)[s.id] = out;
    return out;
  };
}

namespace {

struct LoadedData {
  data::ClassTable table;
  std::vector<data::Sample> samples;
  data::DatasetSplit split;
};

LoadedData load_data(const RunConfig& cfg) {
  if (cfg.data_root.empty())
    throw std::invalid_argument("no data root configured");
  LoadedData d{load_table(cfg), {}, {}};
  d.samples = data::load_dataset(cfg.data_root, d.table);
  if (d.samples.empty())
    throw std::runtime_error("dataset at " + cfg.data_root + " is empty");
  d.split = data::split_dataset(d.samples, cfg.split, cfg.split_seed);
  return d;
}

void echo_config(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  std::ofstream f(fs::path(cfg.out_dir) / "resolved_config.json");
  f << cfg.to_json() << "\n";
}

}  // namespace

train::TrainState run_train(const RunConfig& cfg) {
  LoadedData d = load_data(cfg);
  net::NetworkConfig ncfg = cfg.network;
  ncfg.num_classes = d.table.num_classes();
  echo_config(cfg);

  std::unique_ptr<net::SegmentationModel> model;
  net::CheckpointExtra resume;
  const bool resuming = !cfg.resume_from.empty();
  if (resuming) {
    model = net::load_checkpoint(cfg.resume_from, &resume);
    ncfg = model->config();
  } else {
    model = std::make_unique<net::SegmentationModel>(ncfg, cfg.model_seed);
  }
  train::TrainOptions opts;
  opts.table = &d.table;
  opts.out_dir = cfg.out_dir;
  opts.stacks = make_stack_provider(cfg, ncfg);
  if (resuming) opts.resume = &resume;
  opts.on_epoch = [](const train::EpochRecord& r) {
    std::cout << "epoch " << r.epoch << " lr " << r.lr << " loss "
              << r.train_loss << " val_iou " << r.val.iou_bg << "\n";
  };
  return train::train(*model, d.samples, d.split.train, d.split.val, cfg.train,
                      opts);
}

namespace {

std::vector<data::Sample> select_split(const LoadedData& d,
                                       const std::string& which) {
  if (which == "all") return d.samples;
  const std::vector<std::string>* ids = nullptr;
  if (which == "train") ids = &d.split.train;
  else if (which == "val") ids = &d.split.val;
  else if (which == "test") ids = &d.split.test;
  else throw std::invalid_argument("unknown split '" + which + "'");
  std::vector<data::Sample> out;
  for (const std::string& id : *ids)
    for (const data::Sample& s : d.samples)
      if (s.id == id) out.push_back(s);
  return out;
}

}  // namespace

metrics::MetricsReport run_eval(const RunConfig& cfg) {
  if (cfg.eval_checkpoint.empty())
    throw std::invalid_argument("eval: no checkpoint configured");
  LoadedData d = load_data(cfg);
  auto model = net::load_checkpoint(cfg.eval_checkpoint);
  if (model->config().num_classes != d.table.num_classes())
    throw std::runtime_error(
        "eval: checkpoint expects " +
        std::to_string(model->config().num_classes) +
        " classes but the class table has " +
        std::to_string(d.table.num_classes()));
  echo_config(cfg);

  std::vector<data::Sample> samples = select_split(d, cfg.eval_split);
  if (samples.empty())
    throw std::runtime_error("eval: selected split is empty");
  auto provider = make_stack_provider(cfg, model->config());
  metrics::MetricsReport report =
      train::evaluate(*model, samples, d.table, provider);

  std::vector<std::string> names;
  for (const auto& e : d.table.entries()) names.push_back(e.name);
  {
    std::ofstream f(fs::path(cfg.out_dir) / "metrics_report.json");
    f << report.to_json(names);
  }

  if (cfg.eval_plots) {
    const fs::path plots = fs::path(cfg.out_dir) / "plots";
    fs::create_directories(plots);
    const bool injects =
        model->config().injection && model->config().injection->enabled();
    for (const data::Sample& s : samples) {
      std::vector<const data::Sample*> one{&s};
      nn::Tensor x = train::images_to_tensor(one);
      nn::Tensor probs;
      if (injects) {
        std::vector<nn::Tensor> st = provider(s);
        probs = model->predict(x, &st);
      } else {
        probs = model->predict(x);
      }
      data::IndexMask pred(s.mask.h, s.mask.w);
      pred.v = nn::argmax_channels(probs);
      img::ImageU8 trip = compose_triptych(
          s.image, data::encode_mask(s.mask, d.table),
          data::encode_mask(pred, d.table));
      img::write_image((plots / (s.id + ".png")).string(), trip);
      if (injects && model->config().injection->trace) {
        const auto& maps = model->trace_maps();
        for (std::size_t k = 0; k < maps.size(); ++k) {
          const nn::Tensor& m = maps[k];
          img::ImageU8 im(m.h(), m.w(), 1);
          for (int y = 0; y < m.h(); ++y)
            for (int xx = 0; xx < m.w(); ++xx)
              im.at(y, xx, 0) = static_cast<std::uint8_t>(
                  std::lround(std::clamp(m.at(0, y, xx, 0), 0.0, 1.0) * 255));
          img::write_image(
              (plots / (s.id + ".inject_site" +
                        std::to_string(model->config().injection->sites[k]) +
                        ".png"))
                  .string(),
              im);
        }
      }
    }
    // Curve sheet: training history when the checkpoint directory carries a
    // log, otherwise per-sample IoU.
    std::vector<Curve> curves;
    const fs::path log =
        fs::path(cfg.eval_checkpoint).parent_path() / "train_log.jsonl";
    if (fs::exists(log)) {
      Curve loss{"train_loss", {}}, iou{"val_iou_bg", {}};
      std::ifstream f(log);
      std::string line;
      while (std::getline(f, line)) {
        if (line.empty()) continue;
        json r = json::parse(line);
        loss.values.push_back(r.value("train_loss", 0.0));
        iou.values.push_back(r["val"].value("iou_bg", 0.0));
      }
      curves = {loss, iou};
    } else {
      Curve per_sample{"per_sample_iou_bg", {}};
      for (const data::Sample& s : samples) {
        metrics::ConfusionMatrix cm(d.table.num_classes());
        std::vector<const data::Sample*> one{&s};
        nn::Tensor x = train::images_to_tensor(one);
        nn::Tensor probs;
        if (injects) {
          std::vector<nn::Tensor> st = provider(s);
          probs = model->predict(x, &st);
        } else {
          probs = model->predict(x);
        }
        cm.accumulate(nn::argmax_channels(probs), s.mask.v);
        per_sample.values.push_back(metrics::iou(cm, true).mean);
      }
      curves = {per_sample};
    }
    render_curve_sheet((plots / "curves.png").string(), curves);
  }
  return report;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant  params     iou_bg   iou_nobg fwiou    f1       bal_acc  mcc\n";
  for (const AblationRow& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%-8s %-10lld %-8.5f %-8.5f %-8.5f %-8.5f %-8.5f %-8.5f\n",
                  r.variant.c_str(), static_cast<long long>(r.param_count),
                  r.report.iou_bg, r.report.iou_nobg, r.report.fwiou,
                  r.report.f1, r.report.balanced_acc, r.report.mcc);
    os << buf;
  }
  return os.str();
}

std::vector<AblationRow> run_ablate(const RunConfig& cfg) {
  LoadedData d = load_data(cfg);
  echo_config(cfg);
  std::vector<AblationRow> rows;
  std::vector<std::string> statuses;
  bool failed = false;
  for (net::Variant v : net::ablation_variants()) {
    const std::string name = net::variant_name(v);
    try {
      net::NetworkConfig ncfg = cfg.network;
      ncfg.variant = v;
      ncfg.num_classes = d.table.num_classes();
      net::SegmentationModel model(ncfg, cfg.model_seed);
      train::TrainOptions opts;
      opts.table = &d.table;
      opts.out_dir = (fs::path(cfg.out_dir) / name).string();
      opts.stacks = make_stack_provider(cfg, ncfg);
      train::train(model, d.samples, d.split.train, d.split.val, cfg.train,
                   opts);
      const auto eval_samples =
          d.split.val.empty() ? select_split(d, "train") : select_split(d, "val");
      AblationRow row;
      row.variant = name;
      row.param_count = model.parameter_count();
      row.report = train::evaluate(model, eval_samples, d.table, opts.stacks);
      rows.push_back(std::move(row));
      statuses.push_back(name + ": ok");
    } catch (const std::exception& e) {
      failed = true;
      statuses.push_back(name + ": FAILED (" + e.what() + ")");
    }
  }
  for (const std::string& s : statuses) std::cout << "ablate: " << s << "\n";
  if (failed) {
    std::string all;
    for (const std::string& s : statuses) all += s + "; ";
    throw std::runtime_error("ablation aborted: " + all);
  }

  const std::string table_text = format_ablation_table(rows);
  std::cout << table_text;
  {
    std::ofstream f(fs::path(cfg.out_dir) / "ablation_table.txt");
    f << table_text;
    json jrows = json::array();
    for (const AblationRow& r : rows) {
      json jr;
      jr["variant"] = r.variant;
      jr["param_count"] = r.param_count;
      jr["report"] = json::parse(r.report.to_json());
      jrows.push_back(jr);
    }
    std::ofstream jf(fs::path(cfg.out_dir) / "ablation_results.json");
    jf << jrows.dump(2) << "\n";
  }
  return rows;
}

std::string run_params(const RunConfig& cfg) {
  net::NetworkConfig ncfg = cfg.network;
  net::SegmentationModel model(ncfg, cfg.model_seed);
  const std::int64_t total = model.parameter_count();
  const std::int64_t target = 1'456'961;
  std::ostringstream os;
  os << "parameter counts for variant " << net::variant_name(ncfg.variant)
     << " (depth " << ncfg.depth << ", base_filters " << ncfg.base_filters
     << ")\n";
  for (const auto& [group, n] : model.parameter_groups()) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "  %-12s %10lld\n", group.c_str(),
                  static_cast<long long>(n));
    os << buf;
  }
  os << "  total        " << total << "\n";
  os << "  reference    " << target << " (delta " << (total - target) << ")\n";
  return os.str();
}

}  // namespace daufi::pipeline
