#include "mdcl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mdcl/errors.hpp"

namespace F = torch::nn::functional;

namespace mdcl {

namespace {

void check_sets(const torch::Tensor& anchors, const torch::Tensor& positives, double tau) {
  if (anchors.dim() != 2 || positives.dim() != 2 || anchors.sizes() != positives.sizes()) {
    throw ShapeError("anchors and positives must be row-aligned M x D matrices");
  }
  if (anchors.size(0) < 1) throw PreconditionError("contrastive loss needs at least one anchor");
  if (!(tau > 0.0)) throw PreconditionError("temperature must be positive");
}

torch::Tensor weighted_sum(const torch::Tensor& terms, const std::optional<AdaptiveWeights>& weights) {
  if (!weights) return terms.sum();
  if (weights->omega.dim() != 1 || weights->omega.size(0) != terms.size(0)) {
    throw ShapeError("adaptive weights must have one entry per anchor");
  }
  return (terms * weights->omega.to(terms.scalar_type()).detach()).sum();
}

}  // namespace

torch::Tensor patchnce_terms(const torch::Tensor& anchors, const torch::Tensor& positives, double tau) {
  check_sets(anchors, positives, tau);
  auto logits = anchors.matmul(positives.t()) / tau;
  return torch::logsumexp(logits, 1) - logits.diagonal();
}

torch::Tensor mix_domain_terms(const torch::Tensor& anchors, const torch::Tensor& positives, double tau) {
  check_sets(anchors, positives, tau);
  const auto m = anchors.size(0);
  auto inter = anchors.matmul(positives.t()) / tau;
  auto self = torch::eye(m, torch::TensorOptions().dtype(torch::kBool).device(anchors.device()));
  auto intra = (anchors.matmul(anchors.t()) / tau).masked_fill(self, -std::numeric_limits<double>::infinity());
  return torch::logsumexp(torch::cat({inter, intra}, 1), 1) - inter.diagonal();
}

double matching_probability(const torch::Tensor& anchors, const torch::Tensor& positives, int i, double tau) {
  check_sets(anchors, positives, tau);
  if (i < 0 || i >= anchors.size(0)) throw PreconditionError("anchor index out of range");
  torch::NoGradGuard no_grad;
  const auto nll = patchnce_terms(anchors.to(torch::kFloat64), positives.to(torch::kFloat64), tau)[i].item<double>();
  return std::exp(-nll);
}

torch::Tensor patchnce_loss(const torch::Tensor& anchors, const torch::Tensor& positives, double tau,
                            const std::optional<AdaptiveWeights>& weights) {
  return weighted_sum(patchnce_terms(anchors, positives, tau), weights);
}

torch::Tensor mix_domain_loss(const torch::Tensor& anchors, const torch::Tensor& positives, double tau,
                              const std::optional<AdaptiveWeights>& weights) {
  return weighted_sum(mix_domain_terms(anchors, positives, tau), weights);
}

torch::Tensor contrastive_loss(const ContrastiveConfig& config, const torch::Tensor& anchors,
                               const torch::Tensor& positives, const std::optional<AdaptiveWeights>& weights) {
  return config.variant == ContrastiveVariant::kMixDomain ? mix_domain_loss(anchors, positives, config.tau, weights)
                                                          : patchnce_loss(anchors, positives, config.tau, weights);
}

AdaptiveWeights adaptive_weights(const torch::Tensor& anchors, const torch::Tensor& gt_positives, double progress) {
  check_sets(anchors, gt_positives, 1.0);
  if (!(progress >= 0.0 && progress <= 1.0)) throw PreconditionError("progress must lie in [0,1]");
  torch::NoGradGuard no_grad;
  auto sim_tensor = (anchors * gt_positives).sum(1).to(torch::kFloat64).contiguous();
  const auto m = static_cast<std::size_t>(sim_tensor.size(0));
  std::vector<double> sim(sim_tensor.data_ptr<double>(), sim_tensor.data_ptr<double>() + m);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[a] < sim[b]; });

  std::vector<double> rank(m);
  for (std::size_t start = 0; start < m;) {
    std::size_t end = start + 1;
    while (end < m && sim[order[end]] == sim[order[start]]) ++end;
    // 1-based ranks start+1 .. end share their mean.
    const double mean_rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) rank[order[k]] = mean_rank;
    start = end;
  }

  std::vector<double> omega(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double r = m == 1 ? 1.0 : (rank[i] - 1.0) / static_cast<double>(m - 1);
    omega[i] = (1.0 - progress) + progress * r;
  }
  return AdaptiveWeights{torch::tensor(omega, torch::kFloat64), progress};
}

std::vector<torch::Tensor> gaussian_pyramid(const torch::Tensor& image, int levels) {
  if (levels < 1) throw PreconditionError("pyramid needs at least one level");
  if (image.dim() != 4) throw ShapeError("pyramid expects an N x C x H x W tensor");
  const auto factor = std::int64_t{1} << (levels - 1);
  if (image.size(2) % factor != 0 || image.size(3) % factor != 0) {
    throw ShapeError("image " + std::to_string(image.size(2)) + "x" + std::to_string(image.size(3)) +
                     " is not divisible by 2^" + std::to_string(levels - 1));
  }
  const auto channels = image.size(1);
  auto taps = torch::tensor({1.0, 4.0, 6.0, 4.0, 1.0}, image.options().requires_grad(false)) / 16.0;
  auto kernel = torch::outer(taps, taps).expand({channels, 1, 5, 5}).contiguous();

  std::vector<torch::Tensor> pyramid{image};
  for (int level = 1; level < levels; ++level) {
    const auto& prev = pyramid.back();
    auto padded = F::pad(prev, F::PadFuncOptions({2, 2, 2, 2}).mode(torch::kReplicate));
    auto blurred = F::conv2d(padded, kernel, F::Conv2dFuncOptions().groups(channels));
    pyramid.push_back(blurred.slice(2, 0, blurred.size(2), 2).slice(3, 0, blurred.size(3), 2));
  }
  return pyramid;
}

torch::Tensor gp_loss(const torch::Tensor& generated, const torch::Tensor& gt, const PyramidLossOptions& options) {
  if (generated.sizes() != gt.sizes()) throw ShapeError("pyramid loss needs images of identical shape");
  if (static_cast<int>(options.level_weights.size()) < options.levels) {
    throw PreconditionError("pyramid loss needs one weight per level");
  }
  const auto a = gaussian_pyramid(generated, options.levels);
  const auto b = gaussian_pyramid(gt, options.levels);
  torch::Tensor loss = torch::zeros({}, generated.options());
  for (int level = 0; level < options.levels; ++level) {
    loss = loss + options.level_weights[level] * (a[level] - b[level]).abs().mean();
  }
  return loss;
}

AdversarialLosses lsgan_losses(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
  AdversarialLosses out;
  out.adv_d = 0.5 * (real_logits - 1.0).pow(2).mean() + 0.5 * fake_logits.pow(2).mean();
  out.adv_g = (fake_logits - 1.0).pow(2).mean();
  return out;
}

AdversarialLosses adversarial_losses(DiscriminatorNet& d, const torch::Tensor& real, const torch::Tensor& fake) {
  if (real.sizes() != fake.sizes()) throw ShapeError("real and fake images must share one shape");
  auto real_logits = d->forward(real);
  auto fake_logits_d = d->forward(fake.detach());
  auto fake_logits_g = d->forward(fake);
  AdversarialLosses out;
  out.adv_d = lsgan_losses(real_logits, fake_logits_d).adv_d;
  out.adv_g = lsgan_losses(real_logits.detach(), fake_logits_g).adv_g;
  return out;
}

double total_objective(double adv_g, double mix_he, double mix_gt, double gp, double lambda_gp) {
  const std::pair<const char*, double> parts[] = {
      {"adv_g", adv_g}, {"mix_he", mix_he}, {"mix_gt", mix_gt}, {"gp", gp}, {"lambda_gp", lambda_gp}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) throw NonFiniteLoss(std::string(name) + " is " + std::to_string(value));
  }
  if (lambda_gp < 0.0) throw PreconditionError("lambda_gp must be non-negative");
  const double total = adv_g + mix_he + mix_gt + lambda_gp * gp;
  if (!std::isfinite(total)) throw NonFiniteLoss("total objective overflowed");
  return total;
}

torch::Tensor total_objective(const torch::Tensor& adv_g, const torch::Tensor& mix_he, const torch::Tensor& mix_gt,
                              const torch::Tensor& gp, double lambda_gp) {
  total_objective(adv_g.item<double>(), mix_he.item<double>(), mix_gt.item<double>(), gp.item<double>(), lambda_gp);
  return adv_g + mix_he + mix_gt + lambda_gp * gp;
}

}  // namespace mdcl
