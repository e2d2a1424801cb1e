#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "mdcl/config.hpp"
#include "mdcl/dataset.hpp"
#include "mdcl/networks.hpp"
#include "mdcl/objectives.hpp"

namespace mdcl {

/// Learning rate of a 0-based epoch: lr0 before `decay_start`, then
/// lr0 * (1 - (epoch - decay_start + 1) / (epochs - decay_start)).
double lr_schedule(int epoch, const TrainConfig& config);

/// Everything needed to continue training bit-for-bit.
struct TrainState {
  TrainConfig config;
  int epoch = 0;        // index of the epoch in progress (= completed epochs)
  long iteration = 0;   // completed train steps
  int accumulated = 0;  // micro-steps since the last optimizer update
  GeneratorNet generator{nullptr};
  DiscriminatorNet discriminator{nullptr};
  ProjectorNet projector{nullptr};
  std::unique_ptr<torch::optim::Adam> optim_g;
  std::unique_ptr<torch::optim::Adam> optim_d;
  std::unique_ptr<torch::optim::Adam> optim_p;
  Rng rng;
};

/// Builds fresh networks and optimizers from `config` (weights seeded by config.seed).
TrainState make_train_state(const TrainConfig& config);

// Checkpoint container (format "mdcl-checkpoint", version 1): a torch archive
// holding the strings `format`, `config` (key = value lines of TrainConfig)
// and `rng` (mt19937_64 state), the ints `version`, `epoch`, `iteration` and
// `accumulated`, and sub-archives `generator`, `discriminator`, `projector`,
// `optim_g`, `optim_d`, `optim_p` with named parameter tensors and Adam moments.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);
/// Reads only the config and generator weights.
GeneratorNet load_generator(const std::filesystem::path& path, TrainConfig* config = nullptr);

class Trainer {
 public:
  explicit Trainer(const TrainConfig& config);
  explicit Trainer(TrainState state);

  static Trainer from_checkpoint(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const { save_checkpoint(path, state_); }

  /// Positions the schedule at a 0-based epoch and applies its learning rate.
  void begin_epoch(int epoch);
  void end_epoch();

  /// Random crop of `pair` at config.crop drawn from the trainer's stream.
  MatchedPair crop(const MatchedPair& pair);

  /// One discriminator update followed by one generator + projector update.
  LossBreakdown step(const MatchedPair& cropped);

  double learning_rate() const;
  const TrainConfig& config() const noexcept { return state_.config; }
  TrainState& state() noexcept { return state_; }
  const TrainState& state() const noexcept { return state_; }

 private:
  void set_learning_rate(double lr);

  TrainState state_;
};

struct TraceRow {
  long iteration = 0;
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown losses;
};

/// Tab-separated, header `iteration epoch lr adv_g adv_d mix_he mix_gt gp total_g`,
/// values printed with 17 significant digits.
class TraceWriter {
 public:
  explicit TraceWriter(const std::filesystem::path& path);
  void append(const TraceRow& row);

 private:
  std::filesystem::path path_;
};

std::vector<TraceRow> read_trace(const std::filesystem::path& path);

struct TrainOutputs {
  std::filesystem::path final_checkpoint;
  std::filesystem::path trace;
  long iterations = 0;
};

/// Epoch loop over `<dataset_root>/train`. Writes `checkpoints/epoch_NNN.ckpt`
/// after every completed epoch (NNN = completed epochs), `checkpoints/last.ckpt`
/// at the end, and appends to `trace.tsv`. With `resume`, training continues
/// from that checkpoint using its stored config.
TrainOutputs train(const TrainConfig& config, const std::filesystem::path& dataset_root,
                   const std::filesystem::path& out_dir,
                   const std::optional<std::filesystem::path>& resume = std::nullopt);

/// Generator inference on an arbitrary-size image: tiles of at most `tile`
/// pixels with stride tile/2, overlaps averaged, borders reflect-padded to the
/// generator's downsampling factor.
RgbImage translate_image(GeneratorNet& g, const RgbImage& image, int tile);

/// Translates every image of `input_dir` into `output_dir` under the same file name.
int translate(const std::filesystem::path& checkpoint, const std::filesystem::path& input_dir,
              const std::filesystem::path& output_dir);

/// Pairs images by stem and scores them.
MetricReport evaluate(const std::filesystem::path& generated_dir, const std::filesystem::path& gt_dir,
                      const MetricConfig& config);

}  // namespace mdcl
