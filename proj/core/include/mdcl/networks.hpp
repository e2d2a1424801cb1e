#pragma once

#include <vector>

#include <torch/torch.h>

#include "mdcl/dataset.hpp"

namespace mdcl {

// Conversions between StainedImage ([0,1], HxWx3) and model tensors
// ([-1,1], 1x3xHxW float32).
torch::Tensor to_model_tensor(const StainedImage& image);
torch::Tensor to_model_tensor(const RgbImage& image);
RgbImage from_model_tensor(const torch::Tensor& tensor);

struct GeneratorOptions {
  int base_width = 32;
  int n_res_blocks = 3;
  int n_downsamples = 2;
  /// Encoder layer indices exposed for patch sampling. Layer 0 is the stem
  /// conv, 1..n_downsamples the downsampling stages, then one index per
  /// residual block. Empty selects the stem plus every downsampling stage.
  std::vector<int> feature_taps;
};

struct TapInfo {
  int layer = 0;
  int channels = 0;
  int downsample = 1;
};

struct GeneratorOutput {
  torch::Tensor image;
  std::vector<torch::Tensor> features;
};

/// ResNet generator: reflect-padded 7x7 stem, strided downsampling convs,
/// residual blocks, transposed-conv upsampling and a tanh head.
class GeneratorNetImpl : public torch::nn::Module {
 public:
  explicit GeneratorNetImpl(GeneratorOptions options = {});

  torch::Tensor forward(const torch::Tensor& x);
  GeneratorOutput forward_with_features(const torch::Tensor& x);

  /// Tap features only; stops at the deepest configured tap.
  std::vector<torch::Tensor> encode(const torch::Tensor& x);

  const std::vector<TapInfo>& taps() const noexcept { return taps_; }
  int total_downsampling() const noexcept { return 1 << options_.n_downsamples; }
  const GeneratorOptions& options() const noexcept { return options_; }

  void check_input(const torch::Tensor& x) const;

 private:
  GeneratorOptions options_;
  std::vector<TapInfo> taps_;
  std::vector<torch::nn::Sequential> encoder_layers_;
  torch::nn::Sequential decoder_{nullptr};
};
TORCH_MODULE(GeneratorNet);

struct DiscriminatorOptions {
  int base_width = 32;
  int n_layers = 3;
};

/// PatchGAN: 4x4 convs, instance norm after the first layer, one logit per receptive field.
class DiscriminatorNetImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorNetImpl(DiscriminatorOptions options = {});

  torch::Tensor forward(const torch::Tensor& x);

  /// Logit-map side length for a square input of `input_size`; <= 0 when too small.
  int output_size(int input_size) const;
  int receptive_field() const;
  const DiscriminatorOptions& options() const noexcept { return options_; }

 private:
  DiscriminatorOptions options_;
  torch::nn::Sequential model_{nullptr};
};
TORCH_MODULE(DiscriminatorNet);

struct ProjectorOptions {
  int embed_dim = 256;
  std::vector<int> tap_channels;
};

/// One two-layer MLP head (Linear-ReLU-Linear) per tap, followed by L2 normalization.
/// Weights and biases are drawn from N(0, 0.02).
class ProjectorNetImpl : public torch::nn::Module {
 public:
  explicit ProjectorNetImpl(ProjectorOptions options);

  /// M x C raw features -> M x D unit rows. Throws DegenerateEmbedding for
  /// rows whose pre-normalization norm is below 1e-12.
  torch::Tensor forward(const torch::Tensor& features, int tap);

  int embed_dim() const noexcept { return options_.embed_dim; }
  std::size_t n_taps() const noexcept { return heads_.size(); }

 private:
  ProjectorOptions options_;
  std::vector<torch::nn::Sequential> heads_;
};
TORCH_MODULE(ProjectorNet);

/// N(0, 0.02) for conv / linear weights and zero biases.
void init_weights(torch::nn::Module& module, double std = 0.02);

struct TranslationResult {
  StainedImage virtual_ihc;
  std::vector<torch::Tensor> features;
};

/// Runs the generator in inference mode on an HE (or virtual IHC) image.
TranslationResult generator_forward(GeneratorNet& g, const StainedImage& image);

/// Logit map of shape 1x1xh'xw' for an image already in model range.
torch::Tensor discriminator_forward(DiscriminatorNet& d, const torch::Tensor& image);

torch::Tensor project_patches(ProjectorNet& p, const torch::Tensor& raw_patch_features, int tap);

}  // namespace mdcl
