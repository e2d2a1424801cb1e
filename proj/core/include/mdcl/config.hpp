#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mdcl/metrics.hpp"
#include "mdcl/objectives.hpp"

namespace mdcl {

/// Ordered flat key/value configuration.
using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines; `#` starts a comment. Throws ConfigError on malformed lines.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv);

enum class LossReduction { kSum, kMean };

struct TrainConfig {
  // Schedule and optimizer.
  int epochs = 40;
  int decay_start = 30;
  double lr0 = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int grad_accumulation = 1;
  /// Stop after this many iterations in total (0 = run all epochs).
  long max_iterations = 0;

  // Data.
  int crop = 64;
  std::uint64_t seed = 0;

  // Objective.
  int m_patches = 256;
  double tau = 0.07;
  double lambda_gp = 10.0;
  ContrastiveVariant loss_variant = ContrastiveVariant::kMixDomain;
  bool use_gt_branch = true;
  bool detach_gt_branch = true;
  LossReduction nce_reduction = LossReduction::kSum;
  int gp_levels = 4;
  std::vector<double> gp_weights{1.0, 2.0, 4.0, 8.0};

  // Architecture.
  int gen_width = 32;
  int gen_res_blocks = 3;
  int gen_downsamples = 2;
  std::vector<int> gen_feature_taps;  // empty = stem + downsampling stages
  int disc_width = 32;
  int disc_layers = 3;
  int embed_dim = 256;

  // Output.
  /// Keep only the newest N epoch checkpoints (0 = keep all).
  int keep_checkpoints = 0;

  /// Throws ConfigError naming the violated constraint.
  void validate() const;
};

std::vector<std::string> train_config_keys();
KeyValues to_key_values(const TrainConfig& config);
/// Applies `kv` on top of `base`. Unknown keys raise ConfigError listing the valid ones.
TrainConfig train_config_from(const KeyValues& kv, TrainConfig base = {});

std::vector<std::string> metric_config_keys();
KeyValues to_key_values(const MetricConfig& config);
MetricConfig metric_config_from(const KeyValues& kv, MetricConfig base = {});

std::string_view to_string(ContrastiveVariant variant);
std::string_view to_string(LossReduction reduction);

/// Human-readable name of the contrastive objective each branch uses,
/// e.g. "mix_domain" / "mix_domain_weighted" or "patchnce" / "none".
std::string he_objective_name(const TrainConfig& config);
std::string gt_objective_name(const TrainConfig& config);

}  // namespace mdcl
