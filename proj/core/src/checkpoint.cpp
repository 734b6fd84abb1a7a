#include "encore/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "encore/common.hpp"

namespace encore {

namespace {

std::vector<std::pair<std::string, std::string>> opt_kv(const AdamState& opt) {
  const AdamConfig& c = opt.cfg;
  return {
      {"lr_peak", fmt_double(c.lr_peak)},
      {"beta1", fmt_double(c.beta1)},
      {"beta2", fmt_double(c.beta2)},
      {"eps", fmt_double(c.eps)},
      {"weight_decay", fmt_double(c.weight_decay)},
      {"clip_norm", fmt_double(c.clip_norm)},
      {"warmup_steps", std::to_string(c.warmup_steps)},
      {"total_steps", std::to_string(c.total_steps)},
      {"t", std::to_string(opt.t)},
  };
}

void opt_set(AdamState& opt, const std::string& k, const std::string& v) {
  AdamConfig& c = opt.cfg;
  if (k == "lr_peak") c.lr_peak = std::stod(v);
  else if (k == "beta1") c.beta1 = std::stod(v);
  else if (k == "beta2") c.beta2 = std::stod(v);
  else if (k == "eps") c.eps = std::stod(v);
  else if (k == "weight_decay") c.weight_decay = std::stod(v);
  else if (k == "clip_norm") c.clip_norm = std::stod(v);
  else if (k == "warmup_steps") c.warmup_steps = std::stoll(v);
  else if (k == "total_steps") c.total_steps = std::stoll(v);
  else if (k == "t") opt.t = std::stoll(v);
  else fail<DataError>("checkpoint: unknown optimizer key '", k, "'");
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check<DataError>(out.good(), "checkpoint: cannot write ", path);

  struct Entry {
    std::string name;
    const std::vector<float>* data;
    Shape shape;
  };
  std::vector<Entry> entries;
  for (const auto& [name, t] : ckpt.params.named)
    entries.push_back({name, &t.data(), t.shape()});
  std::vector<std::string> slot_names;
  if (ckpt.has_opt) {
    for (const auto& [name, mv] : ckpt.opt.slots) slot_names.push_back(name);
    std::sort(slot_names.begin(), slot_names.end());
    for (const auto& name : slot_names) {
      const auto& mv = ckpt.opt.slots.at(name);
      int64_t n = static_cast<int64_t>(mv.first.size());
      entries.push_back({"opt.m::" + name, &mv.first, {n}});
      entries.push_back({"opt.v::" + name, &mv.second, {n}});
    }
  }

  out << "encore-checkpoint v1\n";
  out << "step " << ckpt.step << "\n";
  out << "rng " << ckpt.rng_state << " " << ckpt.rng_inc << "\n";
  for (const auto& [k, v] : ckpt.params.config.to_kv())
    out << "model " << k << " " << v << "\n";
  if (ckpt.has_opt)
    for (const auto& [k, v] : opt_kv(ckpt.opt)) out << "opt " << k << " " << v << "\n";

  int64_t offset = 0;
  for (const auto& e : entries) {
    out << "tensor " << e.name << " " << e.shape.size();
    for (int64_t d : e.shape) out << " " << d;
    out << " " << offset << " " << e.data->size() << "\n";
    offset += static_cast<int64_t>(e.data->size());
  }
  out << "blob " << offset << "\n";
  for (const auto& e : entries)
    out.write(reinterpret_cast<const char*>(e.data->data()),
              static_cast<std::streamsize>(e.data->size() * sizeof(float)));
  check<DataError>(out.good(), "checkpoint: write failed for ", path);
}

namespace {

struct RawCheckpoint {
  int64_t step = 0;
  uint64_t rng_state = 0, rng_inc = 0;
  std::vector<std::pair<std::string, std::string>> model_kv;
  std::vector<std::pair<std::string, std::string>> opt_kv;
  struct TensorEntry {
    std::string name;
    Shape shape;
    int64_t offset;
    int64_t count;
  };
  std::vector<TensorEntry> tensors;
  std::vector<float> blob;
};

RawCheckpoint read_raw(const std::string& path, bool want_blob) {
  std::ifstream in(path, std::ios::binary);
  check<DataError>(in.good(), "checkpoint: cannot read ", path);
  RawCheckpoint raw;
  std::string line;
  check<DataError>(std::getline(in, line) && line == "encore-checkpoint v1",
                   "checkpoint: bad header in ", path);
  int64_t total = -1;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "step") {
      ls >> raw.step;
    } else if (tag == "rng") {
      ls >> raw.rng_state >> raw.rng_inc;
    } else if (tag == "model" || tag == "opt") {
      std::string k, v;
      ls >> k >> v;
      (tag == "model" ? raw.model_kv : raw.opt_kv).emplace_back(k, v);
    } else if (tag == "tensor") {
      RawCheckpoint::TensorEntry e;
      size_t rank = 0;
      ls >> e.name >> rank;
      e.shape.resize(rank);
      for (size_t i = 0; i < rank; ++i) ls >> e.shape[i];
      ls >> e.offset >> e.count;
      check<DataError>(!ls.fail(), "checkpoint: bad tensor line '", line, "'");
      raw.tensors.push_back(std::move(e));
    } else if (tag == "blob") {
      ls >> total;
      break;
    } else {
      fail<DataError>("checkpoint: unknown manifest tag '", tag, "' in ", path);
    }
  }
  check<DataError>(total >= 0, "checkpoint: missing blob section in ", path);
  if (want_blob) {
    raw.blob.resize(total);
    in.read(reinterpret_cast<char*>(raw.blob.data()),
            static_cast<std::streamsize>(total * sizeof(float)));
    check<DataError>(in.gcount() ==
                         static_cast<std::streamsize>(total * sizeof(float)),
                     "checkpoint: truncated blob in ", path);
  }
  return raw;
}

}  // namespace

Checkpoint load_checkpoint(const std::string& path) {
  RawCheckpoint raw = read_raw(path, true);
  Checkpoint ckpt;
  ckpt.step = raw.step;
  ckpt.rng_state = raw.rng_state;
  ckpt.rng_inc = raw.rng_inc;
  ckpt.params.config = ModelConfig::from_kv(raw.model_kv);
  ckpt.has_opt = !raw.opt_kv.empty();
  for (const auto& [k, v] : raw.opt_kv) opt_set(ckpt.opt, k, v);

  for (const auto& e : raw.tensors) {
    std::vector<float> data(raw.blob.begin() + e.offset,
                            raw.blob.begin() + e.offset + e.count);
    if (e.name.rfind("opt.m::", 0) == 0) {
      ckpt.opt.slots[e.name.substr(7)].first = std::move(data);
    } else if (e.name.rfind("opt.v::", 0) == 0) {
      ckpt.opt.slots[e.name.substr(7)].second = std::move(data);
    } else {
      auto t = Tensor::from(e.shape, std::move(data), /*requires_grad=*/true);
      ckpt.params.add(e.name, std::move(t));
    }
  }
  return ckpt;
}

ModelParams load_encoder_params(const std::string& path) {
  Checkpoint full = load_checkpoint(path);
  ModelParams enc;
  enc.config = full.params.config;
  for (auto& [name, t] : full.params.named)
    if (name.rfind("dec.", 0) != 0) enc.add(name, t);
  return enc;
}

}  // namespace encore
