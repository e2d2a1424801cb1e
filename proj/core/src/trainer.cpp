#include "mdcl/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mdcl/errors.hpp"
#include "mdcl/patching.hpp"

namespace mdcl {

double lr_schedule(int epoch, const TrainConfig& config) {
  if (epoch < 0 || epoch >= config.epochs) {
    throw PreconditionError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(config.epochs) + ")");
  }
  if (epoch < config.decay_start) return config.lr0;
  const double done = static_cast<double>(epoch - config.decay_start + 1);
  const double span = static_cast<double>(config.epochs - config.decay_start);
  return config.lr0 * (1.0 - done / span);
}

Trainer::Trainer(const TrainConfig& config) : state_(make_train_state(config)) { begin_epoch(0); }

Trainer::Trainer(TrainState state) : state_(std::move(state)) {
  if (state_.epoch < state_.config.epochs) set_learning_rate(lr_schedule(state_.epoch, state_.config));
}

Trainer Trainer::from_checkpoint(const std::filesystem::path& path) { return Trainer(load_checkpoint(path)); }

void Trainer::begin_epoch(int epoch) {
  state_.epoch = epoch;
  set_learning_rate(lr_schedule(epoch, state_.config));
}

void Trainer::end_epoch() { ++state_.epoch; }

void Trainer::set_learning_rate(double lr) {
  for (auto* optim : {state_.optim_g.get(), state_.optim_d.get(), state_.optim_p.get()}) {
    for (auto& group : optim->param_groups()) {
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }
  }
}

double Trainer::learning_rate() const {
  return static_cast<const torch::optim::AdamOptions&>(state_.optim_g->param_groups().front().options()).lr();
}

MatchedPair Trainer::crop(const MatchedPair& pair) { return random_crop_pair(pair, state_.config.crop, state_.rng); }

namespace {

void set_requires_grad(torch::nn::Module& module, bool flag) {
  for (auto& p : module.parameters()) p.set_requires_grad(flag);
}

}  // namespace

LossBreakdown Trainer::step(const MatchedPair& cropped) {
  auto& s = state_;
  const auto& cfg = s.config;
  if (cropped.he.height() != cfg.crop || cropped.he.width() != cfg.crop || cropped.ihc_gt.height() != cfg.crop ||
      cropped.ihc_gt.width() != cfg.crop) {
    throw PreconditionError("train_step expects a " + std::to_string(cfg.crop) + "x" + std::to_string(cfg.crop) +
                            " pair");
  }
  s.generator->train();
  s.discriminator->train();
  s.projector->train();

  const auto he = to_model_tensor(cropped.he);
  const auto gt = to_model_tensor(cropped.ihc_gt);
  const double scale = 1.0 / cfg.grad_accumulation;
  const bool apply_update = (s.accumulated + 1) % cfg.grad_accumulation == 0;

  const auto fake = s.generator->forward(he);

  // Discriminator step.
  set_requires_grad(*s.discriminator, true);
  const auto real_logits = s.discriminator->forward(gt);
  const auto adv_d = lsgan_losses(real_logits, s.discriminator->forward(fake.detach())).adv_d;
  if (!std::isfinite(adv_d.item<double>())) throw NonFiniteLoss("adv_d is " + std::to_string(adv_d.item<double>()));
  (adv_d * scale).backward();
  if (apply_update) {
    s.optim_d->step();
    s.optim_d->zero_grad();
  }

  // Generator + projector step against the updated discriminator.
  set_requires_grad(*s.discriminator, false);
  const auto adv_g = lsgan_losses(real_logits.detach(), s.discriminator->forward(fake)).adv_g;

  auto locs = std::make_shared<const PatchLocations>(
      sample_locations(tap_shapes(*s.generator, cfg.crop, cfg.crop), cfg.m_patches, s.rng));
  const auto sets = build_sets(s.generator, s.projector, he, fake, gt, locs, BuildOptions{cfg.detach_gt_branch});

  const ContrastiveConfig contrastive{cfg.tau, cfg.loss_variant};
  const double progress = static_cast<double>(s.epoch) / cfg.epochs;
  torch::Tensor mix_he = torch::zeros({}, fake.options());
  torch::Tensor mix_gt = torch::zeros({}, fake.options());
  int taps_used = 0;
  for (int tap = 0; tap < locs->n_taps(); ++tap) {
    const auto anchors = sets.anchors.tap_rows(tap);
    if (anchors.size(0) == 0) continue;
    const double reduce = cfg.nce_reduction == LossReduction::kMean ? 1.0 / static_cast<double>(anchors.size(0)) : 1.0;
    mix_he = mix_he + reduce * contrastive_loss(contrastive, anchors, sets.positives_he.tap_rows(tap));
    if (cfg.use_gt_branch) {
      const auto positives_gt = sets.positives_gt.tap_rows(tap);
      const auto weights = adaptive_weights(anchors, positives_gt, progress);
      mix_gt = mix_gt + reduce * contrastive_loss(contrastive, anchors, positives_gt, weights);
    }
    ++taps_used;
  }
  mix_he = mix_he / taps_used;
  mix_gt = mix_gt / taps_used;

  const auto gp = gp_loss(fake, gt, PyramidLossOptions{cfg.gp_levels, cfg.gp_weights});
  const auto total = total_objective(adv_g, mix_he, mix_gt, gp, cfg.lambda_gp);
  (total * scale).backward();
  set_requires_grad(*s.discriminator, true);
  if (apply_update) {
    s.optim_g->step();
    s.optim_p->step();
    s.optim_g->zero_grad();
    s.optim_p->zero_grad();
  }
  s.accumulated = apply_update ? 0 : s.accumulated + 1;
  ++s.iteration;

  LossBreakdown out;
  out.adv_g = adv_g.item<double>();
  out.adv_d = adv_d.item<double>();
  out.mix_he = mix_he.item<double>();
  out.mix_gt = mix_gt.item<double>();
  out.gp = gp.item<double>();
  out.total_g = total_objective(out.adv_g, out.mix_he, out.mix_gt, out.gp, cfg.lambda_gp);
  return out;
}

TraceWriter::TraceWriter(const std::filesystem::path& path) : path_(path) {
  if (!std::filesystem::exists(path_) || std::filesystem::file_size(path_) == 0) {
    std::ofstream out(path_);
    out << "iteration\tepoch\tlr\tadv_g\tadv_d\tmix_he\tmix_gt\tgp\ttotal_g\n";
    if (!out) throw IoFailure("cannot create trace " + path_.string());
  }
}

void TraceWriter::append(const TraceRow& row) {
  std::ofstream out(path_, std::ios::app);
  char buf[512];
  const auto& l = row.losses;
  std::snprintf(buf, sizeof buf, "%ld\t%d\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n", row.iteration, row.epoch,
                row.lr, l.adv_g, l.adv_d, l.mix_he, l.mix_gt, l.gp, l.total_g);
  out << buf;
  if (!out) throw IoFailure("cannot append to trace " + path_.string());
}

std::vector<TraceRow> read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot read trace " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<TraceRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    TraceRow row;
    auto& l = row.losses;
    if (!(fields >> row.iteration >> row.epoch >> row.lr >> l.adv_g >> l.adv_d >> l.mix_he >> l.mix_gt >> l.gp >>
          l.total_g)) {
      throw IoFailure("malformed trace row '" + line + "'");
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mdcl
