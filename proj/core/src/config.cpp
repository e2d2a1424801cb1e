#include "mdcl/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "mdcl/errors.hpp"

namespace mdcl {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

long long to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("'" + key + "' expects an integer, got '" + value + "'");
  }
}

double to_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename Config>
struct Field {
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string& key, const std::string&)> set;
};

template <typename Config>
using FieldTable = std::vector<std::pair<std::string, Field<Config>>>;

#define INT_FIELD(name)                                                                          \
  {#name, {[](const TrainConfig& c) { return std::to_string(c.name); },                          \
           [](TrainConfig& c, const std::string& k, const std::string& v) {                      \
             c.name = static_cast<decltype(c.name)>(to_int(k, v));                               \
           }}}
#define REAL_FIELD(name)                                                                                            \
  {#name, {[](const TrainConfig& c) { return fmt(c.name); },                                                        \
           [](TrainConfig& c, const std::string& k, const std::string& v) { c.name = to_real(k, v); }}}
#define BOOL_FIELD(name)                                                                                            \
  {#name, {[](const TrainConfig& c) { return std::string(c.name ? "true" : "false"); },                             \
           [](TrainConfig& c, const std::string& k, const std::string& v) { c.name = to_bool(k, v); }}}

const FieldTable<TrainConfig>& train_fields() {
  static const FieldTable<TrainConfig> table{
      INT_FIELD(epochs),
      INT_FIELD(decay_start),
      REAL_FIELD(lr0),
      REAL_FIELD(adam_beta1),
      REAL_FIELD(adam_beta2),
      INT_FIELD(grad_accumulation),
      INT_FIELD(max_iterations),
      INT_FIELD(crop),
      {"seed",
       {[](const TrainConfig& c) { return std::to_string(c.seed); },
        [](TrainConfig& c, const std::string& k, const std::string& v) {
          const auto s = to_int(k, v);
          if (s < 0) throw ConfigError("'seed' must be non-negative");
          c.seed = static_cast<std::uint64_t>(s);
        }}},
      INT_FIELD(m_patches),
      REAL_FIELD(tau),
      REAL_FIELD(lambda_gp),
      {"loss_variant",
       {[](const TrainConfig& c) { return std::string(to_string(c.loss_variant)); },
        [](TrainConfig& c, const std::string& k, const std::string& v) {
          if (v == "mix" || v == "mix_domain") {
            c.loss_variant = ContrastiveVariant::kMixDomain;
          } else if (v == "nce" || v == "patchnce") {
            c.loss_variant = ContrastiveVariant::kPatchNce;
          } else {
            throw ConfigError("'" + k + "' expects mix or nce, got '" + v + "'");
          }
        }}},
      BOOL_FIELD(use_gt_branch),
      BOOL_FIELD(detach_gt_branch),
      {"nce_reduction",
       {[](const TrainConfig& c) { return std::string(to_string(c.nce_reduction)); },
        [](TrainConfig& c, const std::string& k, const std::string& v) {
          if (v == "sum") {
            c.nce_reduction = LossReduction::kSum;
          } else if (v == "mean") {
            c.nce_reduction = LossReduction::kMean;
          } else {
            throw ConfigError("'" + k + "' expects sum or mean, got '" + v + "'");
          }
        }}},
      INT_FIELD(gp_levels),
      {"gp_weights",
       {[](const TrainConfig& c) { return join(c.gp_weights); },
        [](TrainConfig& c, const std::string& k, const std::string& v) {
          c.gp_weights.clear();
          for (const auto& item : split_list(v)) c.gp_weights.push_back(to_real(k, item));
        }}},
      INT_FIELD(gen_width),
      INT_FIELD(gen_res_blocks),
      INT_FIELD(gen_downsamples),
      {"gen_feature_taps",
       {[](const TrainConfig& c) { return c.gen_feature_taps.empty() ? std::string("default") : join(c.gen_feature_taps); },
        [](TrainConfig& c, const std::string& k, const std::string& v) {
          c.gen_feature_taps.clear();
          if (v == "default") return;
          for (const auto& item : split_list(v)) c.gen_feature_taps.push_back(static_cast<int>(to_int(k, item)));
        }}},
      INT_FIELD(disc_width),
      INT_FIELD(disc_layers),
      INT_FIELD(embed_dim),
      INT_FIELD(keep_checkpoints),
  };
  return table;
}

#undef INT_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD

const FieldTable<MetricConfig>& metric_fields() {
  static const FieldTable<MetricConfig> table{
      {"extractor_id",
       {[](const MetricConfig& c) { return c.extractor_id; },
        [](MetricConfig& c, const std::string&, const std::string& v) { c.extractor_id = v; }}},
      {"phv_threshold",
       {[](const MetricConfig& c) { return fmt(c.phv_threshold); },
        [](MetricConfig& c, const std::string& k, const std::string& v) { c.phv_threshold = to_real(k, v); }}},
      {"kid_subset_size",
       {[](const MetricConfig& c) { return std::to_string(c.kid_subset_size); },
        [](MetricConfig& c, const std::string& k, const std::string& v) {
          c.kid_subset_size = static_cast<int>(to_int(k, v));
        }}},
      {"kid_subsets",
       {[](const MetricConfig& c) { return std::to_string(c.kid_subsets); },
        [](MetricConfig& c, const std::string& k, const std::string& v) { c.kid_subsets = static_cast<int>(to_int(k, v)); }}},
      {"metric_seed",
       {[](const MetricConfig& c) { return std::to_string(c.seed); },
        [](MetricConfig& c, const std::string& k, const std::string& v) {
          c.seed = static_cast<std::uint64_t>(to_int(k, v));
        }}},
  };
  return table;
}

template <typename Config>
std::vector<std::string> keys_of(const FieldTable<Config>& table) {
  std::vector<std::string> keys;
  for (const auto& [key, field] : table) keys.push_back(key);
  return keys;
}

template <typename Config>
KeyValues dump(const FieldTable<Config>& table, const Config& config) {
  KeyValues kv;
  for (const auto& [key, field] : table) kv[key] = field.get(config);
  return kv;
}

template <typename Config>
Config apply(const FieldTable<Config>& table, const KeyValues& kv, Config config) {
  for (const auto& [key, value] : kv) {
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& entry) { return entry.first == key; });
    if (it == table.end()) {
      std::string valid;
      for (const auto& k : keys_of(table)) valid += (valid.empty() ? "" : ", ") + k;
      throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid);
    }
    it->second.set(config, key, value);
  }
  return config;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(number) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_key_values(buffer.str());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [key, value] : kv) out += key + " = " + value + "\n";
  return out;
}

void write_key_values(const std::filesystem::path& path, const KeyValues& kv) {
  std::ofstream out(path);
  out << format_key_values(kv);
  if (!out) throw IoFailure("cannot write " + path.string());
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(epochs >= 1, "epochs must be at least 1");
  require(decay_start > 0 && decay_start <= epochs, "decay_start must satisfy 0 < decay_start <= epochs");
  require(lr0 > 0.0, "lr0 must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, "Adam betas must lie in [0,1)");
  require(grad_accumulation >= 1, "grad_accumulation must be at least 1");
  require(max_iterations >= 0, "max_iterations must be non-negative");
  require(crop >= 4, "crop must be at least 4");
  require(m_patches >= 1, "m_patches must be at least 1");
  require(tau > 0.0, "tau must be positive");
  require(lambda_gp >= 0.0, "lambda_gp must be non-negative");
  require(gp_levels >= 1, "gp_levels must be at least 1");
  require(static_cast<int>(gp_weights.size()) == gp_levels, "gp_weights needs exactly gp_levels entries");
  require(gen_width >= 1 && gen_res_blocks >= 0 && gen_downsamples >= 0, "invalid generator shape");
  require(crop % (1 << gen_downsamples) == 0, "crop must be divisible by 2^gen_downsamples");
  require(crop % (1 << (gp_levels - 1)) == 0, "crop must be divisible by 2^(gp_levels-1)");
  require(disc_width >= 1 && disc_layers >= 1, "invalid discriminator shape");
  require(embed_dim >= 1, "embed_dim must be positive");
  require(keep_checkpoints >= 0, "keep_checkpoints must be non-negative");
}

std::vector<std::string> train_config_keys() { return keys_of(train_fields()); }
KeyValues to_key_values(const TrainConfig& config) { return dump(train_fields(), config); }
TrainConfig train_config_from(const KeyValues& kv, TrainConfig base) { return apply(train_fields(), kv, std::move(base)); }

std::vector<std::string> metric_config_keys() { return keys_of(metric_fields()); }
KeyValues to_key_values(const MetricConfig& config) { return dump(metric_fields(), config); }
MetricConfig metric_config_from(const KeyValues& kv, MetricConfig base) {
  return apply(metric_fields(), kv, std::move(base));
}

std::string_view to_string(ContrastiveVariant variant) {
  return variant == ContrastiveVariant::kMixDomain ? "mix" : "nce";
}

std::string_view to_string(LossReduction reduction) { return reduction == LossReduction::kSum ? "sum" : "mean"; }

std::string he_objective_name(const TrainConfig& config) {
  return config.loss_variant == ContrastiveVariant::kMixDomain ? "mix_domain" : "patchnce";
}

std::string gt_objective_name(const TrainConfig& config) {
  if (!config.use_gt_branch) return "none";
  return he_objective_name(config) + "_weighted";
}

}  // namespace mdcl
