// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

namespace uaglnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("key '" + key + "': not an integer: " + v);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': not a number: " + v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("key '" + key + "': not a boolean: " + v);
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << d;
  return os.str();
}

template <typename Seq>
std::string join(const Seq& seq) {
  std::ostringstream os;
  bool first = true;
  for (const auto& v : seq) {
    if (!first) os << ',';
    os << v;
    first = false;
  }
  return os.str();
}

template <typename Arr>
void set_array(const std::string& key, const std::string& v, Arr& out) {
  const auto items = split_list(v);
  if (items.size() != out.size()) {
    throw ConfigError("key '" + key + "': expected " + std::to_string(out.size()) +
                      " comma-separated values, got " + std::to_string(items.size()));
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<typename Arr::value_type>(to_int(key, items[i]));
}

std::vector<int> to_levels(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split_list(v)) out.push_back(static_cast<int>(to_int(key, s)));
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SETTER(expr) [](RunConfig& c, const std::string& k, const std::string& v) { (void)k; expr; }
#define GETTER(expr) [](const RunConfig& c) { return expr; }
#define INT_FIELD(sec, name)                                                              \
  {#name, Field{SETTER(c.sec.name = static_cast<decltype(c.sec.name)>(to_int(k, v))),     \
                GETTER(std::to_string(c.sec.name))}}
#define DOUBLE_FIELD(sec, name) \
  {#name, Field{SETTER(c.sec.name = to_double(k, v)), GETTER(fmt_double(c.sec.name))}}
#define BOOL_FIELD(sec, name)                               \
  {#name, Field{SETTER(c.sec.name = to_bool(k, v)),         \
                GETTER(std::string(c.sec.name ? "1" : "0"))}}
#define ARRAY_FIELD(sec, name) \
  {#name, Field{SETTER(set_array(k, v, c.sec.name)), GETTER(join(c.sec.name))}}
#define LEVELS_FIELD(sec, name) \
  {#name, Field{SETTER(c.sec.name = to_levels(k, v)), GETTER(join(c.sec.name))}}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      ARRAY_FIELD(model, widths),
      ARRAY_FIELD(model, depths),
      INT_FIELD(model, mkfm_groups),
      INT_FIELD(model, heads_stage3),
      INT_FIELD(model, heads_stage4),
      ARRAY_FIELD(model, ffn_ratios),
      INT_FIELD(model, fusion_dim),
      LEVELS_FIELD(model, local_levels),
      LEVELS_FIELD(model, global_levels),
      DOUBLE_FIELD(model, norm_eps),
      BOOL_FIELD(model, use_uad),
      INT_FIELD(model, samples),
      DOUBLE_FIELD(model, sigma_floor),
      BOOL_FIELD(model, uncertainty_grad),
      BOOL_FIELD(model, zero_sigma),
      DOUBLE_FIELD(model, gamma),
      DOUBLE_FIELD(model, eta),
      DOUBLE_FIELD(model, lambda1),
      DOUBLE_FIELD(model, lambda2),
      DOUBLE_FIELD(model, drop_path),
      DOUBLE_FIELD(model, lr),
      DOUBLE_FIELD(model, lr_min),
      DOUBLE_FIELD(model, weight_decay),
      DOUBLE_FIELD(model, beta1),
      DOUBLE_FIELD(model, beta2),
      DOUBLE_FIELD(model, adam_eps),
      INT_FIELD(model, restart_epochs),
      INT_FIELD(model, restart_mult),
      INT_FIELD(model, epochs),
      INT_FIELD(model, steps_per_epoch),
      INT_FIELD(model, max_steps),
      INT_FIELD(model, batch_size),
      INT_FIELD(model, val_every),
      INT_FIELD(model, seed),
      INT_FIELD(model, tile),
      DOUBLE_FIELD(model, threshold),
      INT_FIELD(data, scene_size),
      INT_FIELD(data, crop_size),
      INT_FIELD(data, train_scenes),
      INT_FIELD(data, val_scenes),
      INT_FIELD(data, difficulty),
      DOUBLE_FIELD(data, noise_std),
      INT_FIELD(data, degrade),
      INT_FIELD(data, data_seed),
  };
  return table;
}

#undef INT_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef ARRAY_FIELD
#undef LEVELS_FIELD
#undef SETTER
#undef GETTER

bool is_contiguous_run(const std::vector<int>& levels, int first, int last) {
  if (levels.empty()) return false;
  if (!std::is_sorted(levels.begin(), levels.end())) return false;
  for (std::size_t i = 1; i < levels.size(); ++i)
    if (levels[i] != levels[i - 1] + 1) return false;
  return levels.front() >= first && levels.back() <= last;
}

}  // namespace

void ModelConfig::validate() const {
  if (mkfm_groups < 1) throw ConfigError("mkfm_groups must be >= 1");
  for (int s = 0; s < 4; ++s) {
    if (widths[s] < 1) throw ConfigError("widths must be positive");
    if (depths[s] < 0) throw ConfigError("depths must be non-negative");
    if (ffn_ratios[s] < 1) throw ConfigError("ffn_ratios must be >= 1");
  }
  for (int s = 0; s < 3; ++s) {
    if (widths[s] % mkfm_groups != 0) {
      throw ConfigError("stage " + std::to_string(s + 1) + " width " + std::to_string(widths[s]) +
                        " is not divisible by mkfm_groups " + std::to_string(mkfm_groups));
    }
  }
  if (heads_stage3 < 1 || widths[2] % heads_stage3 != 0) {
    throw ConfigError("heads_stage3 " + std::to_string(heads_stage3) +
                      " does not divide stage-3 width " + std::to_string(widths[2]));
  }
  if (heads_stage4 < 1 || widths[3] % heads_stage4 != 0) {
    throw ConfigError("heads_stage4 " + std::to_string(heads_stage4) +
                      " does not divide stage-4 width " + std::to_string(widths[3]));
  }
  if (fusion_dim < 1) throw ConfigError("fusion_dim must be positive");
  if (!is_contiguous_run(local_levels, 1, 3) || local_levels.front() != 1) {
    throw ConfigError("local_levels must be a contiguous run starting at 1 within 1..3");
  }
  if (!is_contiguous_run(global_levels, 2, 4) || global_levels.back() != 4) {
    throw ConfigError("global_levels must be a contiguous run ending at 4 within 2..4");
  }
  if (samples < 2) throw ConfigError("samples must be >= 2 (variance undefined otherwise)");
  if (!(sigma_floor >= 0)) throw ConfigError("sigma_floor must be non-negative");
  for (double w : {gamma, eta, lambda1, lambda2}) {
    if (!(w >= 0)) throw ConfigError("loss weights must be non-negative");
  }
  if (drop_path < 0 || drop_path >= 1) throw ConfigError("drop_path must be in [0, 1)");
  if (lr < 0 || lr_min < 0 || weight_decay < 0) throw ConfigError("lr/weight_decay must be >= 0");
  if (restart_epochs < 1 || restart_mult < 1) throw ConfigError("restart schedule must be >= 1");
  if (steps_per_epoch < 1 || batch_size < 1) throw ConfigError("steps_per_epoch/batch_size >= 1");
  if (tile < 32 || tile % 32 != 0) throw ConfigError("tile must be a positive multiple of 32");
  if (threshold <= 0 || threshold >= 1) throw ConfigError("threshold must be in (0, 1)");
}

void DatasetSpec::validate() const {
  if (scene_size < 32 || scene_size % 32 != 0) {
    throw ConfigError("scene_size must be a positive multiple of 32");
  }
  if (crop_size < 32 || crop_size % 32 != 0) throw ConfigError("crop_size must be a multiple of 32");
  if (crop_size > scene_size) throw ConfigError("crop_size larger than scene_size");
  if (train_scenes < 0 || val_scenes < 0) throw ConfigError("scene counts must be >= 0");
  if (degrade < 1) throw ConfigError("degrade must be >= 1");
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse_key_values(os.str());
}

RunConfig apply_key_values(RunConfig base, const KeyValues& kv) {
  const auto& table = fields();
  for (const auto& [key, value] : kv) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(base, key, value);
  }
  return base;
}

KeyValues to_key_values(const RunConfig& config) {
  KeyValues kv;
  for (const auto& [key, field] : fields()) kv[key] = field.get(config);
  return kv;
}

std::string to_text(const RunConfig& config) {
  std::ostringstream os;
  for (const auto& [key, value] : to_key_values(config)) os << key << " = " << value << '\n';
  return os.str();
}

RunConfig desk_config() {
  RunConfig c;
  c.model.widths = {16, 32, 64, 128};
  c.model.fusion_dim = 16;
  c.data.scene_size = 64;
  c.data.crop_size = 64;
  c.model.tile = 64;
  c.model.batch_size = 8;
  c.model.lr = 4e-3;
  c.model.drop_path = 0.1;
  c.model.gamma = 0.05;
  return c;
}

}  // namespace uaglnet
