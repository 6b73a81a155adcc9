#include "net/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace daufi::net {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'U', 'F', 'I', 'C', 'K', '1'};
using json = nlohmann::json;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void write_doubles(std::ostream& os, const double* d, std::int64_t n) {
  os.write(reinterpret_cast<const char*>(d),
           static_cast<std::streamsize>(n * sizeof(double)));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::string read_str(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}
void read_doubles(std::istream& is, double* d, std::int64_t n) {
  is.read(reinterpret_cast<char*>(d),
          static_cast<std::streamsize>(n * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::string& path, const SegmentationModel& model,
                     const CheckpointExtra* extra) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + tmp + " for writing");
    os.write(kMagic, sizeof(kMagic));

    json header;
    header["format_version"] = 1;
    header["network"] = json::parse(model.config().to_json());
    header["train"] = extra && !extra->train_json.empty()
                          ? json::parse(extra->train_json)
                          : json();
    header["has_adam"] = extra && extra->has_adam;
    header["adam_t"] = extra ? extra->adam_t : 0;
    write_str(os, header.dump());

    const auto& items = model.params().items();
    write_u32(os, static_cast<std::uint32_t>(items.size()));
    for (const auto& p : items) {
      write_str(os, p->name);
      write_u64(os, static_cast<std::uint64_t>(p->value.size()));
      write_doubles(os, p->value.data(), p->value.size());
    }

    const auto& stats = model.params().stats_items();
    write_u32(os, static_cast<std::uint32_t>(stats.size()));
    for (const auto& [name, st] : stats) {
      write_str(os, name);
      os.put(st->initialized ? 1 : 0);
      const std::uint32_t c =
          st->initialized ? static_cast<std::uint32_t>(st->mean.size()) : 0;
      write_u32(os, c);
      if (st->initialized) {
        write_doubles(os, st->mean.data(), c);
        write_doubles(os, st->var.data(), c);
      }
    }

    if (extra && extra->has_adam) {
      if (extra->adam_m.size() != items.size() ||
          extra->adam_v.size() != items.size())
        throw std::invalid_argument(
            "save_checkpoint: adam state misaligned with parameters");
      for (std::size_t i = 0; i < items.size(); ++i) {
        write_doubles(os, extra->adam_m[i].data(), extra->adam_m[i].size());
        write_doubles(os, extra->adam_v[i].data(), extra->adam_v[i].size());
      }
    }
    if (!os) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::unique_ptr<SegmentationModel> load_checkpoint(const std::string& path,
                                                   CheckpointExtra* extra_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);

  const json header = json::parse(read_str(is));
  if (header.at("format_version").get<int>() != 1)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  NetworkConfig cfg = NetworkConfig::from_json(header.at("network").dump());
  auto model = std::make_unique<SegmentationModel>(cfg);

  const std::uint32_t n_params = read_u32(is);
  if (n_params != model->params().items().size())
    throw std::runtime_error("checkpoint parameter count mismatch in " + path);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const std::string name = read_str(is);
    const std::uint64_t numel = read_u64(is);
    nn::NodeRef p = model->params().get(name);
    if (static_cast<std::uint64_t>(p->value.size()) != numel)
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    read_doubles(is, p->value.data(), static_cast<std::int64_t>(numel));
  }

  const std::uint32_t n_stats = read_u32(is);
  if (n_stats != model->params().stats_items().size())
    throw std::runtime_error("checkpoint stats count mismatch in " + path);
  for (std::uint32_t i = 0; i < n_stats; ++i) {
    const std::string name = read_str(is);
    const auto& stats = model->params().stats_items();
    std::shared_ptr<nn::BnStats> st;
    for (const auto& [n, s] : stats)
      if (n == name) st = s;
    if (!st) throw std::runtime_error("checkpoint has unknown stats " + name);
    const bool initialized = is.get() == 1;
    const std::uint32_t c = read_u32(is);
    st->initialized = initialized;
    if (initialized) {
      st->mean = Tensor(nn::Shape{1, 1, 1, static_cast<int>(c)});
      st->var = Tensor(nn::Shape{1, 1, 1, static_cast<int>(c)});
      read_doubles(is, st->mean.data(), c);
      read_doubles(is, st->var.data(), c);
    }
  }

  if (extra_out) {
    extra_out->train_json =
        header.at("train").is_null() ? "" : header.at("train").dump();
    extra_out->has_adam = header.value("has_adam", false);
    extra_out->adam_t = header.value("adam_t", 0);
    extra_out->adam_m.clear();
    extra_out->adam_v.clear();
    if (extra_out->has_adam) {
      for (const auto& p : model->params().items()) {
        Tensor m(p->value.shape()), v(p->value.shape());
        read_doubles(is, m.data(), m.size());
        read_doubles(is, v.data(), v.size());
        extra_out->adam_m.push_back(std::move(m));
        extra_out->adam_v.push_back(std::move(v));
      }
    }
  }
  if (!is) throw std::runtime_error("truncated checkpoint " + path);
  return model;
}

}  // namespace daufi::net
