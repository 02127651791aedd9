// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#include "stgp/config.hpp"

#include "stgp/params.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace stgp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int to_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  int out = 0;
  try {
    out = std::stoi(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size()) throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size()) throw std::invalid_argument("config: bad number for " + key + ": " + v);
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

#define INT_FIELD(name, member)                                              \
  Field {                                                                    \
    name, [](const TrainConfig& c) { return std::to_string(c.member); },     \
        [](TrainConfig& c, const std::string& v) { c.member = to_int(name, v); } \
  }
#define DBL_FIELD(name, member)                                              \
  Field {                                                                    \
    name, [](const TrainConfig& c) { return fmt_double(c.member); },         \
        [](TrainConfig& c, const std::string& v) { c.member = to_double(name, v); } \
  }
#define BOOL_FIELD(name, member)                                               \
  Field {                                                                      \
    name, [](const TrainConfig& c) { return std::string(c.member ? "true" : "false"); }, \
        [](TrainConfig& c, const std::string& v) { c.member = to_bool(name, v); }  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
            [](TrainConfig& c, const std::string& v) {
              c.seed = static_cast<std::uint64_t>(to_int("seed", v));
            }},
      INT_FIELD("patch_len", model.patch_len),
      INT_FIELD("channels", model.channels),
      INT_FIELD("d_h", model.d_h),
      INT_FIELD("heads", model.heads),
      INT_FIELD("layers_t", model.layers_t),
      INT_FIELD("layers_s", model.layers_s),
      INT_FIELD("ffn_mult", model.ffn_mult),
      INT_FIELD("d_dec", model.d_dec),
      INT_FIELD("layers_d", model.layers_d),
      INT_FIELD("kernel", model.kernel),
      INT_FIELD("head_hidden1", model.head_hidden1),
      INT_FIELD("head_hidden2", model.head_hidden2),
      INT_FIELD("max_patches", model.max_patches),
      INT_FIELD("hop_max", model.hop_max),
      INT_FIELD("num_prompts", model.num_prompts),
      DBL_FIELD("phi", model.phi),
      INT_FIELD("num_patches", num_patches),
      DBL_FIELD("mask_ratio", mask_ratio),
      DBL_FIELD("lr_pretrain", lr_pretrain),
      DBL_FIELD("lr_domain", lr_domain),
      DBL_FIELD("lr_task", lr_task),
      DBL_FIELD("weight_decay", weight_decay),
      INT_FIELD("epochs_pretrain", epochs_pretrain),
      INT_FIELD("epochs_domain", epochs_domain),
      INT_FIELD("epochs_task", epochs_task),
      INT_FIELD("patience", patience),
      INT_FIELD("batch_size", batch_size),
      INT_FIELD("batches_per_epoch", batches_per_epoch),
      INT_FIELD("window_stride", window_stride),
      INT_FIELD("val_windows", val_windows),
      DBL_FIELD("grad_clip", grad_clip),
      BOOL_FIELD("cosine_lr", cosine_lr),
      BOOL_FIELD("tune_head", tune_head),
      BOOL_FIELD("normalize", normalize),
      DBL_FIELD("source_train_fraction", source_train_fraction),
      INT_FIELD("target_prompt_days", target_prompt_days),
      INT_FIELD("target_val_days", target_val_days),
      INT_FIELD("test_stride", test_stride),
      INT_FIELD("hist_patches", hist_patches),
      INT_FIELD("pred_patches", pred_patches),
      DBL_FIELD("unobserved_fraction", unobserved_fraction),
      BOOL_FIELD("inductive", inductive),
      INT_FIELD("knn_k", knn_k),
  };
  return table;
}

#undef INT_FIELD
#undef DBL_FIELD
#undef BOOL_FIELD

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("key=value: missing '=' on line " + std::to_string(lineno));
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("key=value: empty key on line " + std::to_string(lineno));
    if (out.count(key)) throw std::invalid_argument("key=value: duplicate key " + key);
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::string TrainConfig::to_text() const {
  std::map<std::string, std::string> sorted;
  for (const Field& f : fields()) sorted[f.key] = f.get(*this);
  std::string out;
  for (const auto& [k, v] : sorted) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t TrainConfig::hash() const { return fnv1a64(to_text()); }

TrainConfig TrainConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  for (const auto& [key, value] : kv) {
    bool found = false;
    for (const Field& f : fields()) {
      if (key == f.key) {
        f.set(c, value);
        found = true;
        break;
      }
    }
    if (!found) throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
  return from_key_values(read_key_value_file(path));
}

void TrainConfig::validate() const {
  const ModelConfig& m = model;
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
  };
  require(m.patch_len > 0 && m.channels > 0, "patch_len and channels must be positive");
  require(m.d_h > 0 && m.heads > 0 && m.d_h % m.heads == 0, "heads must divide d_h");
  require(m.layers_t >= 0 && m.layers_s >= 0 && m.layers_d >= 0, "layer counts must be >= 0");
  require(m.ffn_mult > 0 && m.d_dec > 0, "ffn_mult and d_dec must be positive");
  require(m.kernel > 0 && m.kernel % 2 == 1, "kernel must be odd");
  require(m.head_hidden1 > 0 && m.head_hidden2 > 0, "head sizes must be positive");
  require(m.hop_max >= 1, "hop_max must be >= 1");
  require(m.num_prompts >= 1, "num_prompts must be >= 1");
  require(m.phi >= 0.0 && m.phi <= 1.0, "phi must lie in [0, 1]");
  require(num_patches > 0 && m.max_patches >= num_patches, "max_patches must cover num_patches");
  require(mask_ratio >= 0.0 && mask_ratio < 1.0, "mask_ratio must lie in [0, 1)");
  require(lr_pretrain > 0 && lr_domain > 0 && lr_task > 0, "learning rates must be positive");
  require(weight_decay >= 0, "weight_decay must be >= 0");
  require(epochs_pretrain >= 0 && epochs_domain >= 0 && epochs_task >= 0, "epochs must be >= 0");
  require(patience > 0 && batch_size > 0, "patience and batch_size must be positive");
  require(batches_per_epoch >= 0 && window_stride >= 0 && val_windows >= 0, "counts must be >= 0");
  require(source_train_fraction > 0 && source_train_fraction < 1, "source_train_fraction in (0,1)");
  require(target_prompt_days > 0 && target_val_days > 0, "target day counts must be positive");
  require(hist_patches > 0 && pred_patches > 0 && hist_patches + pred_patches == num_patches,
          "hist_patches + pred_patches must equal num_patches");
  require(unobserved_fraction > 0 && unobserved_fraction < 1, "unobserved_fraction in (0,1)");
  require(knn_k > 0, "knn_k must be positive");
}

}  // namespace stgp
