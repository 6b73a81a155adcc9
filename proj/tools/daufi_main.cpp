// daufi command-line front end. Parses flags into a configuration override
// object, merges it over an optional --config file and hands the resolved
// JSON to the shared-library C API.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "daufi/daufi.h"

using json = nlohmann::json;

namespace {

json* dig(json& root, const std::string& dotted, std::string* leaf) {
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    if (dot == std::string::npos) {
      *leaf = dotted.substr(start);
      return node;
    }
    const std::string key = dotted.substr(start, dot - start);
    if (!node->contains(key) || !(*node)[key].is_object())
      (*node)[key] = json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

void set_path(json& root, const std::string& dotted, const json& value) {
  std::string leaf;
  json* node = dig(root, dotted, &leaf);
  (*node)[leaf] = value;
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (...) {
    return json(text);  // plain string
  }
}

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = csv.find(',', start);
    const std::string tok = csv.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!tok.empty()) out.push_back(tok);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

json merge(json base, const json& overrides) {
  if (!overrides.is_object() || !base.is_object()) return overrides;
  for (const auto& [key, value] : overrides.items()) {
    if (base.contains(key) && base[key].is_object() && value.is_object())
      base[key] = merge(base[key], value);
    else
      base[key] = value;
  }
  return base;
}

int finish(daufi_status status) {
  if (status != DAUFI_OK)
    std::cerr << "error: " << daufi_last_error() << "\n";
  return static_cast<int>(status);
}

std::string resolve_config(const std::string& config_path,
                           const json& overrides) {
  json base = json::object();
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) {
      std::cerr << "error: cannot open config file " << config_path << "\n";
      std::exit(2);
    }
    f >> base;
  }
  return merge(base, overrides).dump();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DAU-FI Net segmentation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // --config / --set may follow the subcommand

  std::string config_path;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "Configuration JSON file")
      ->configurable(false);
  app.add_option("--set", sets,
                 "Override a config value by dotted path, e.g. "
                 "--set train.lr0=0.0005");

  json ov = json::object();

  // extract
  auto* extract = app.add_subcommand("extract", "Compute engineered feature "
                                                "stacks into the cache");
  std::string ex_in, ex_features, ex_out, ex_masks;
  extract->add_option("--in", ex_in, "Image directory");
  extract->add_option("--features", ex_features,
                      "Comma list: gabor,sobel,canny,hog,color");
  extract->add_option("--out", ex_out, "Cache directory");
  extract->add_option("--masks", ex_masks,
                      "Optional mask directory for annotation-guided "
                      "extraction");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  int sy_num = -1, sy_size = -1;
  std::int64_t sy_seed = -1;
  std::string sy_out, sy_classes;
  synth->add_option("--num", sy_num, "Number of samples");
  synth->add_option("--size", sy_size, "Square image size");
  synth->add_option("--seed", sy_seed, "Generator seed");
  synth->add_option("--out", sy_out, "Dataset output directory");
  synth->add_option("--classes", sy_classes, "Class table CSV");

  // shared train/eval/ablate/params flags
  std::string data_root, out_dir, classes_path, variant, inject_csv;
  std::string resume_from;
  int epochs = -1, batch = -1, base_filters = -1, depth = -1, num_classes = -1;
  std::int64_t seed = -1, model_seed = -1;
  double lr = -1.0;
  bool no_inject = false;

  auto add_common = [&](CLI::App* cmd, bool with_train) {
    cmd->add_option("--data", data_root, "Dataset root directory");
    cmd->add_option("--out", out_dir, "Output directory");
    cmd->add_option("--classes", classes_path, "Class table CSV");
    cmd->add_option("--variant", variant, "P1..P6 or UNET_BASELINE");
    cmd->add_option("--base-filters", base_filters, "Width of the first level");
    cmd->add_option("--depth", depth, "Encoder depth");
    cmd->add_option("--num-classes", num_classes, "Number of classes");
    cmd->add_option("--model-seed", model_seed, "Weight init seed");
    if (with_train) {
      cmd->add_option("--epochs", epochs, "Training epochs");
      cmd->add_option("--batch", batch, "Batch size");
      cmd->add_option("--lr", lr, "Initial learning rate");
      cmd->add_option("--seed", seed, "Training seed");
      cmd->add_option("--inject", inject_csv,
                      "Enable feature injection with this extractor list");
      cmd->add_flag("--no-inject", no_inject, "Disable feature injection");
      cmd->add_option("--resume", resume_from,
                      "Continue training from this checkpoint");
    }
  };

  auto* train = app.add_subcommand("train", "Train a model");
  add_common(train, true);
  auto* ablate =
      app.add_subcommand("ablate", "Train and compare variants P1..P6");
  add_common(ablate, true);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_checkpoint, ev_split;
  bool ev_plots = false;
  add_common(eval, false);
  eval->add_option("--checkpoint", ev_checkpoint, "Checkpoint file");
  eval->add_option("--split", ev_split, "all|train|val|test");
  eval->add_flag("--plots", ev_plots, "Emit overlay plots and a curve sheet");

  auto* params = app.add_subcommand("params", "Report parameter counts");
  add_common(params, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // usage/config problems exit with 2
  }

  for (const std::string& s : sets) {
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --set expects key.path=value, got '" << s << "'\n";
      return 2;
    }
    set_path(ov, s.substr(0, eq), parse_value(s.substr(eq + 1)));
  }

  if (!data_root.empty()) set_path(ov, "data.root", json(data_root));
  if (!classes_path.empty()) set_path(ov, "data.classes", json(classes_path));
  if (!out_dir.empty()) set_path(ov, "out_dir", json(out_dir));
  if (!variant.empty()) set_path(ov, "network.variant", json(variant));
  if (base_filters > 0) set_path(ov, "network.base_filters", json(base_filters));
  if (depth > 0) set_path(ov, "network.depth", json(depth));
  if (num_classes > 0) set_path(ov, "network.num_classes", json(num_classes));
  if (model_seed >= 0) set_path(ov, "model_seed", json(model_seed));
  if (epochs >= 0) set_path(ov, "train.epochs", json(epochs));
  if (batch > 0) set_path(ov, "train.batch_size", json(batch));
  if (lr > 0) set_path(ov, "train.lr0", json(lr));
  if (seed >= 0) set_path(ov, "train.seed", json(seed));
  if (!inject_csv.empty()) {
    json inj;
    inj["sites"] = {0, 1};
    inj["features"] = split_csv(inject_csv);
    set_path(ov, "network.injection", inj);
  }
  if (no_inject) set_path(ov, "network.injection", json());
  if (!resume_from.empty()) set_path(ov, "resume_from", json(resume_from));

  if (*extract) {
    if (!ex_in.empty()) set_path(ov, "extract.in", json(ex_in));
    if (!ex_features.empty())
      set_path(ov, "extract.features", json(split_csv(ex_features)));
    if (!ex_masks.empty()) set_path(ov, "extract.mask_dir", json(ex_masks));
    if (!ex_out.empty()) {
      set_path(ov, "cache_dir", json(ex_out));
      set_path(ov, "out_dir", json(ex_out));
    }
    return finish(daufi_cmd_extract(resolve_config(config_path, ov).c_str()));
  }
  if (*synth) {
    if (sy_num >= 0) set_path(ov, "synth.num", json(sy_num));
    if (sy_size > 0) set_path(ov, "synth.size", json(sy_size));
    if (sy_seed >= 0) set_path(ov, "synth.seed", json(sy_seed));
    if (!sy_classes.empty()) set_path(ov, "data.classes", json(sy_classes));
    if (!sy_out.empty()) {
      set_path(ov, "data.root", json(sy_out));
      set_path(ov, "out_dir", json(sy_out));
    }
    return finish(daufi_cmd_synth(resolve_config(config_path, ov).c_str()));
  }
  if (*train)
    return finish(daufi_cmd_train(resolve_config(config_path, ov).c_str()));
  if (*ablate)
    return finish(daufi_cmd_ablate(resolve_config(config_path, ov).c_str()));
  if (*eval) {
    if (!ev_checkpoint.empty())
      set_path(ov, "eval.checkpoint", json(ev_checkpoint));
    if (!ev_split.empty()) set_path(ov, "eval.split", json(ev_split));
    if (ev_plots) set_path(ov, "eval.plots", json(true));
    return finish(daufi_cmd_eval(resolve_config(config_path, ov).c_str()));
  }
  if (*params) {
    char* report = nullptr;
    const daufi_status st =
        daufi_cmd_params(resolve_config(config_path, ov).c_str(), &report);
    if (st == DAUFI_OK && report) {
      std::fputs(report, stdout);
      daufi_string_free(report);
    }
    return finish(st);
  }
  return 2;
}
