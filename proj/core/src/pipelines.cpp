#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>

#include "mdcl/errors.hpp"
#include "mdcl/trainer.hpp"

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

namespace mdcl {

namespace {

std::string epoch_checkpoint_name(int completed_epochs) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.ckpt", completed_epochs);
  return buf;
}

void prune_checkpoints(const fs::path& dir, int keep, int newest) {
  if (keep <= 0) return;
  for (int e = newest - keep; e >= 1; --e) {
    std::error_code ec;
    if (!fs::remove(dir / epoch_checkpoint_name(e), ec)) break;
  }
}

void dump_nonfinite(const fs::path& out_dir, const MatchedPair& pair, const TrainState& state, const std::string& what) {
  const fs::path dir = out_dir / "nonfinite_dump";
  fs::create_directories(dir);
  write_rgb(dir / "he.png", pair.he.pixels);
  write_rgb(dir / "ihc_gt.png", pair.ihc_gt.pixels);
  KeyValues info = to_key_values(state.config);
  info["error"] = what;
  info["pair_id"] = pair.pair_id;
  info["crop_origin"] = std::to_string(pair.he.origin_y) + "," + std::to_string(pair.he.origin_x);
  info["epoch"] = std::to_string(state.epoch);
  info["iteration"] = std::to_string(state.iteration);
  write_key_values(dir / "info.txt", info);
}

}  // namespace

TrainOutputs train(const TrainConfig& config, const fs::path& dataset_root, const fs::path& out_dir,
                   const std::optional<fs::path>& resume) {
  Trainer trainer = resume ? Trainer::from_checkpoint(*resume) : Trainer(config);
  const TrainConfig& cfg = trainer.config();
  const auto pairs = scan_dataset(dataset_root, Split::kTrain);

  const fs::path ckpt_dir = out_dir / "checkpoints";
  fs::create_directories(ckpt_dir);
  TrainOutputs outputs;
  outputs.trace = out_dir / "trace.tsv";
  TraceWriter trace(outputs.trace);

  bool budget_hit = false;
  for (int epoch = trainer.state().epoch; epoch < cfg.epochs && !budget_hit; ++epoch) {
    trainer.begin_epoch(epoch);
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(trainer.state().rng)]);
    }
    for (std::size_t idx : order) {
      if (cfg.max_iterations > 0 && trainer.state().iteration >= cfg.max_iterations) {
        budget_hit = true;
        break;
      }
      const MatchedPair cropped = trainer.crop(pairs[idx]);
      TraceRow row;
      row.iteration = trainer.state().iteration;
      row.epoch = epoch;
      row.lr = trainer.learning_rate();
      try {
        row.losses = trainer.step(cropped);
      } catch (const NonFiniteLoss& e) {
        dump_nonfinite(out_dir, cropped, trainer.state(), e.what());
        throw NonFiniteLoss(std::string(e.what()) + " (diagnostics in " + (out_dir / "nonfinite_dump").string() + ")");
      }
      trace.append(row);
    }
    if (!budget_hit) {
      trainer.end_epoch();
      trainer.save(ckpt_dir / epoch_checkpoint_name(trainer.state().epoch));
      prune_checkpoints(ckpt_dir, cfg.keep_checkpoints, trainer.state().epoch);
    }
  }
  outputs.final_checkpoint = ckpt_dir / "last.ckpt";
  trainer.save(outputs.final_checkpoint);
  outputs.iterations = trainer.state().iteration;
  return outputs;
}

namespace {

std::vector<int> tile_starts(int extent, int tile) {
  std::vector<int> starts;
  const int stride = std::max(1, tile / 2);
  for (int p = 0; p + tile < extent; p += stride) starts.push_back(p);
  starts.push_back(extent - tile);
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
  return starts;
}

torch::Tensor run_padded(GeneratorNet& g, const torch::Tensor& x) {
  const int factor = g->total_downsampling();
  const std::int64_t min_side = std::max(4, 2 * factor);
  const auto h = x.size(2);
  const auto w = x.size(3);
  const auto pad_h = (factor - h % factor) % factor;
  const auto pad_w = (factor - w % factor) % factor;
  if (pad_h == 0 && pad_w == 0 && h >= min_side && w >= min_side) return g->forward(x);
  const auto extra_h = std::max<std::int64_t>(pad_h, min_side - h);
  const auto extra_w = std::max<std::int64_t>(pad_w, min_side - w);
  const bool reflect_ok = extra_h < h && extra_w < w;
  F::PadFuncOptions::mode_t mode = torch::kReplicate;
  if (reflect_ok) mode = torch::kReflect;
  auto padded = F::pad(x, F::PadFuncOptions({0, extra_w, 0, extra_h}).mode(mode));
  // Round the padded size up to the factor again when the minimum-size rule kicked in.
  const auto ph = padded.size(2);
  const auto pw = padded.size(3);
  const auto more_h = (factor - ph % factor) % factor;
  const auto more_w = (factor - pw % factor) % factor;
  if (more_h || more_w) {
    padded = F::pad(padded, F::PadFuncOptions({0, more_w, 0, more_h}).mode(torch::kReplicate));
  }
  return g->forward(padded).slice(2, 0, h).slice(3, 0, w);
}

}  // namespace

RgbImage translate_image(GeneratorNet& g, const RgbImage& image, int tile) {
  if (tile < 1) throw PreconditionError("tile size must be positive");
  torch::NoGradGuard no_grad;
  g->eval();
  const int h = image.height();
  const int w = image.width();
  const int th = std::min(tile, h);
  const int tw = std::min(tile, w);
  const auto x = to_model_tensor(image);
  auto sum = torch::zeros({1, 3, h, w});
  auto count = torch::zeros({1, 1, h, w});
  for (int top : tile_starts(h, th)) {
    for (int left : tile_starts(w, tw)) {
      auto patch = x.slice(2, top, top + th).slice(3, left, left + tw);
      auto out = run_padded(g, patch);
      sum.slice(2, top, top + th).slice(3, left, left + tw).add_(out);
      count.slice(2, top, top + th).slice(3, left, left + tw).add_(1.0);
    }
  }
  return from_model_tensor(sum / count);
}

int translate(const fs::path& checkpoint, const fs::path& input_dir, const fs::path& output_dir) {
  TrainConfig config;
  GeneratorNet g = load_generator(checkpoint, &config);
  const auto inputs = list_images(input_dir);
  std::error_code ec;
  fs::create_directories(output_dir, ec);
  if (ec) throw IoFailure("cannot create " + output_dir.string() + ": " + ec.message());
  int written = 0;
  for (const auto& path : inputs) {
    const RgbImage out = translate_image(g, read_rgb(path), config.crop);
    write_rgb(output_dir / path.filename(), out);
    ++written;
  }
  return written;
}

MetricReport evaluate(const fs::path& generated_dir, const fs::path& gt_dir, const MetricConfig& config) {
  const auto generated_files = list_images(generated_dir);
  const auto gt_files = list_images(gt_dir);
  if (generated_files.size() != gt_files.size()) {
    throw PairMismatch(std::to_string(generated_files.size()) + " generated images vs " +
                       std::to_string(gt_files.size()) + " ground-truth images");
  }
  std::vector<StainedImage> generated;
  std::vector<StainedImage> gt;
  for (std::size_t i = 0; i < generated_files.size(); ++i) {
    if (generated_files[i].stem() != gt_files[i].stem()) {
      throw PairMismatch("unpaired stems '" + generated_files[i].stem().string() + "' and '" +
                         gt_files[i].stem().string() + "'");
    }
    generated.push_back({read_rgb(generated_files[i]), StainDomain::kIhcVirtual, generated_files[i].string()});
    gt.push_back({read_rgb(gt_files[i]), StainDomain::kIhcReal, gt_files[i].string()});
  }
  return compute_metrics(generated, gt, config);
}

}  // namespace mdcl
