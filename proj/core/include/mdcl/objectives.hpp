#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "mdcl/networks.hpp"

namespace mdcl {

enum class ContrastiveVariant { kPatchNce, kMixDomain };

struct ContrastiveConfig {
  double tau = 0.07;
  ContrastiveVariant variant = ContrastiveVariant::kMixDomain;
};

/// Per-anchor weights for the ground-truth contrastive term.
struct AdaptiveWeights {
  torch::Tensor omega;  // length M, entries in [0,1]
  double progress = 0.0;
};

struct LossBreakdown {
  double adv_g = 0.0;
  double adv_d = 0.0;
  double mix_he = 0.0;
  double mix_gt = 0.0;
  double gp = 0.0;
  double total_g = 0.0;
};

// Contrastive losses. `anchors` and `positives` are row-aligned M x D
// matrices of unit vectors: row i of `positives` is the positive of anchor i
// and every other row is a negative. All logits are divided by `tau` and every
// softmax denominator is evaluated with log-sum-exp.

/// Softmax probability that anchor i picks its own positive among all positives.
double matching_probability(const torch::Tensor& anchors, const torch::Tensor& positives, int i, double tau);

/// Per-anchor -log matching_probability, length M.
torch::Tensor patchnce_terms(const torch::Tensor& anchors, const torch::Tensor& positives, double tau);

/// Per-anchor mix-domain terms, length M. The denominator holds every
/// positive-set similarity plus the similarities to the OTHER anchors.
torch::Tensor mix_domain_terms(const torch::Tensor& anchors, const torch::Tensor& positives, double tau);

/// Sum over anchors of the inter-domain-only loss, optionally weighted per anchor.
torch::Tensor patchnce_loss(const torch::Tensor& anchors, const torch::Tensor& positives, double tau,
                            const std::optional<AdaptiveWeights>& weights = std::nullopt);

/// Sum over anchors of omega_i times the mix-domain term (omega_i = 1 without weights).
torch::Tensor mix_domain_loss(const torch::Tensor& anchors, const torch::Tensor& positives, double tau,
                              const std::optional<AdaptiveWeights>& weights = std::nullopt);

torch::Tensor contrastive_loss(const ContrastiveConfig& config, const torch::Tensor& anchors,
                               const torch::Tensor& positives,
                               const std::optional<AdaptiveWeights>& weights = std::nullopt);

/// Rank-based confidence ramp for the pixel-misaligned ground-truth pairs.
///
/// s_i = <z_i, z_i^gt>; r_i = (rank_i - 1) / (M - 1) with ascending 1-based
/// ranks, ties sharing their mean rank (r_i = 1 when M = 1);
/// omega_i = (1 - progress) + progress * r_i. The weights carry no gradient.
AdaptiveWeights adaptive_weights(const torch::Tensor& anchors, const torch::Tensor& gt_positives, double progress);

/// Level 0 is the input; each further level is a 5x5 binomial blur
/// (replicate border) followed by 2x decimation. Input is N x C x H x W.
std::vector<torch::Tensor> gaussian_pyramid(const torch::Tensor& image, int levels);

struct PyramidLossOptions {
  int levels = 4;
  std::vector<double> level_weights{1.0, 2.0, 4.0, 8.0};
};

/// Sum over levels of w_l * mean |pyr_l(generated) - pyr_l(gt)|.
torch::Tensor gp_loss(const torch::Tensor& generated, const torch::Tensor& gt, const PyramidLossOptions& options = {});

struct AdversarialLosses {
  torch::Tensor adv_g;
  torch::Tensor adv_d;
};

/// Least-squares GAN losses from precomputed logit maps.
/// adv_d = 0.5 mean((real - 1)^2) + 0.5 mean(fake^2), adv_g = mean((fake - 1)^2).
AdversarialLosses lsgan_losses(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);

/// adv_d sees a detached `fake`, so it only reaches the discriminator. adv_g
/// reaches the generator through `fake`; callers freeze D's parameters for the
/// generator step.
AdversarialLosses adversarial_losses(DiscriminatorNet& d, const torch::Tensor& real, const torch::Tensor& fake);

/// adv_g + mix_he + mix_gt + lambda_gp * gp. Throws NonFiniteLoss when any
/// component (or the result) is NaN or infinite.
double total_objective(double adv_g, double mix_he, double mix_gt, double gp, double lambda_gp);
torch::Tensor total_objective(const torch::Tensor& adv_g, const torch::Tensor& mix_he, const torch::Tensor& mix_gt,
                              const torch::Tensor& gp, double lambda_gp);

}  // namespace mdcl
