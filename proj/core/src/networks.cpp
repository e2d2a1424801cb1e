#include "mdcl/networks.hpp"

#include <algorithm>
#include <set>

#include "mdcl/errors.hpp"

namespace nn = torch::nn;

namespace mdcl {

torch::Tensor to_model_tensor(const RgbImage& image) {
  auto hwc = torch::from_blob(const_cast<float*>(image.data().data()), {image.height(), image.width(), 3},
                              torch::kFloat32);
  return hwc.permute({2, 0, 1}).unsqueeze(0).mul(2.0).sub(1.0).contiguous();
}

torch::Tensor to_model_tensor(const StainedImage& image) { return to_model_tensor(image.pixels); }

RgbImage from_model_tensor(const torch::Tensor& tensor) {
  if (tensor.dim() != 4 || tensor.size(0) != 1 || tensor.size(1) != 3) {
    throw ShapeError("expected a 1x3xHxW tensor");
  }
  auto hwc = tensor.detach().to(torch::kFloat32).squeeze(0).permute({1, 2, 0}).add(1.0).mul(0.5).clamp(0.0, 1.0);
  hwc = hwc.contiguous();
  RgbImage out(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)));
  std::copy_n(hwc.data_ptr<float>(), hwc.numel(), out.data().data());
  return out;
}

namespace {

class ResnetBlockImpl : public nn::Module {
 public:
  explicit ResnetBlockImpl(int channels) {
    body_ = register_module(
        "body", nn::Sequential(nn::ReflectionPad2d(1), nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)),
                               nn::InstanceNorm2d(channels), nn::ReLU(), nn::ReflectionPad2d(1),
                               nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)), nn::InstanceNorm2d(channels)));
  }

  torch::Tensor forward(const torch::Tensor& x) { return x + body_->forward(x); }

 private:
  nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResnetBlock);

}  // namespace

GeneratorNetImpl::GeneratorNetImpl(GeneratorOptions options) : options_(std::move(options)) {
  const int w = options_.base_width;
  if (w < 1 || options_.n_res_blocks < 0 || options_.n_downsamples < 0) {
    throw PreconditionError("invalid generator options");
  }

  encoder_layers_.push_back(nn::Sequential(nn::ReflectionPad2d(3), nn::Conv2d(nn::Conv2dOptions(3, w, 7)),
                                           nn::InstanceNorm2d(w), nn::ReLU()));
  std::vector<TapInfo> layer_info{{0, w, 1}};
  int channels = w;
  for (int i = 0; i < options_.n_downsamples; ++i) {
    encoder_layers_.push_back(nn::Sequential(
        nn::Conv2d(nn::Conv2dOptions(channels, channels * 2, 3).stride(2).padding(1)),
        nn::InstanceNorm2d(channels * 2), nn::ReLU()));
    channels *= 2;
    layer_info.push_back({i + 1, channels, 1 << (i + 1)});
  }
  for (int i = 0; i < options_.n_res_blocks; ++i) {
    encoder_layers_.push_back(nn::Sequential(ResnetBlock(channels)));
    layer_info.push_back({static_cast<int>(layer_info.size()), channels, 1 << options_.n_downsamples});
  }
  for (std::size_t i = 0; i < encoder_layers_.size(); ++i) {
    register_module("enc" + std::to_string(i), encoder_layers_[i]);
  }

  decoder_ = nn::Sequential();
  for (int i = 0; i < options_.n_downsamples; ++i) {
    decoder_->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(channels, channels / 2, 3).stride(2).padding(1).output_padding(1)));
    decoder_->push_back(nn::InstanceNorm2d(channels / 2));
    decoder_->push_back(nn::ReLU());
    channels /= 2;
  }
  decoder_->push_back(nn::ReflectionPad2d(3));
  decoder_->push_back(nn::Conv2d(nn::Conv2dOptions(channels, 3, 7)));
  decoder_->push_back(nn::Tanh());
  register_module("dec", decoder_);

  if (options_.feature_taps.empty()) {
    for (int i = 0; i <= options_.n_downsamples; ++i) options_.feature_taps.push_back(i);
  }
  std::set<int> seen;
  for (int tap : options_.feature_taps) {
    if (tap < 0 || tap >= static_cast<int>(layer_info.size()) || !seen.insert(tap).second) {
      throw PreconditionError("invalid or duplicate feature tap " + std::to_string(tap));
    }
    taps_.push_back(layer_info[tap]);
  }
  init_weights(*this);
}

void GeneratorNetImpl::check_input(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != 3) throw ShapeError("generator expects Nx3xHxW input");
  const int factor = total_downsampling();
  if (x.size(2) % factor != 0 || x.size(3) % factor != 0) {
    throw ShapeError("input " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                     " is not divisible by the total downsampling factor " + std::to_string(factor));
  }
  if (x.size(2) < 4 || x.size(3) < 4) throw ShapeError("generator input smaller than 4x4");
}

torch::Tensor GeneratorNetImpl::forward(const torch::Tensor& x) {
  check_input(x);
  torch::Tensor h = x;
  for (auto& layer : encoder_layers_) h = layer->forward(h);
  return decoder_->forward(h);
}

GeneratorOutput GeneratorNetImpl::forward_with_features(const torch::Tensor& x) {
  check_input(x);
  GeneratorOutput out;
  std::vector<torch::Tensor> per_layer;
  torch::Tensor h = x;
  for (auto& layer : encoder_layers_) {
    h = layer->forward(h);
    per_layer.push_back(h);
  }
  for (const auto& tap : taps_) out.features.push_back(per_layer[tap.layer]);
  out.image = decoder_->forward(h);
  return out;
}

std::vector<torch::Tensor> GeneratorNetImpl::encode(const torch::Tensor& x) {
  check_input(x);
  int deepest = 0;
  for (const auto& tap : taps_) deepest = std::max(deepest, tap.layer);
  std::vector<torch::Tensor> per_layer;
  torch::Tensor h = x;
  for (int i = 0; i <= deepest; ++i) {
    h = encoder_layers_[i]->forward(h);
    per_layer.push_back(h);
  }
  std::vector<torch::Tensor> features;
  for (const auto& tap : taps_) features.push_back(per_layer[tap.layer]);
  return features;
}

DiscriminatorNetImpl::DiscriminatorNetImpl(DiscriminatorOptions options) : options_(options) {
  const int w = options_.base_width;
  if (w < 1 || options_.n_layers < 1) throw PreconditionError("invalid discriminator options");
  model_ = nn::Sequential();
  model_->push_back(nn::Conv2d(nn::Conv2dOptions(3, w, 4).stride(2).padding(1)));
  model_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  int mult = 1;
  for (int i = 1; i < options_.n_layers; ++i) {
    const int prev = mult;
    mult = std::min(1 << i, 8);
    model_->push_back(nn::Conv2d(nn::Conv2dOptions(w * prev, w * mult, 4).stride(2).padding(1)));
    model_->push_back(nn::InstanceNorm2d(w * mult));
    model_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  }
  const int prev = mult;
  mult = std::min(1 << options_.n_layers, 8);
  model_->push_back(nn::Conv2d(nn::Conv2dOptions(w * prev, w * mult, 4).stride(1).padding(1)));
  model_->push_back(nn::InstanceNorm2d(w * mult));
  model_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  model_->push_back(nn::Conv2d(nn::Conv2dOptions(w * mult, 1, 4).stride(1).padding(1)));
  register_module("model", model_);
  init_weights(*this);
}

int DiscriminatorNetImpl::output_size(int input_size) const {
  int n = input_size;
  for (int i = 0; i < options_.n_layers; ++i) n = (n - 2) / 2 + 1;
  return n - 2;
}

int DiscriminatorNetImpl::receptive_field() const {
  // Walk back from one output logit: two stride-1 4x4 convs, then n stride-2 4x4 convs.
  int rf = 1;
  rf = rf + 3;
  rf = rf + 3;
  for (int i = 0; i < options_.n_layers; ++i) rf = (rf - 1) * 2 + 4;
  return rf;
}

torch::Tensor DiscriminatorNetImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3) throw ShapeError("discriminator expects Nx3xHxW input");
  // The last normalized layer is one pixel wider than the logit map and needs more than one element.
  const int min_side = static_cast<int>(std::min(x.size(2), x.size(3)));
  if (output_size(min_side) < 1) {
    throw ShapeError("input " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                     " too small for a " + std::to_string(options_.n_layers) + "-layer PatchGAN");
  }
  return model_->forward(x);
}

ProjectorNetImpl::ProjectorNetImpl(ProjectorOptions options) : options_(std::move(options)) {
  if (options_.embed_dim < 1 || options_.tap_channels.empty()) throw PreconditionError("invalid projector options");
  for (std::size_t t = 0; t < options_.tap_channels.size(); ++t) {
    auto head = nn::Sequential(nn::Linear(options_.tap_channels[t], options_.embed_dim), nn::ReLU(),
                               nn::Linear(options_.embed_dim, options_.embed_dim));
    heads_.push_back(register_module("head" + std::to_string(t), head));
  }
  init_weights(*this);
  torch::NoGradGuard no_grad;
  for (auto& p : named_parameters()) {
    if (p.key().ends_with(".bias")) nn::init::normal_(p.value(), 0.0, 0.02);
  }
}

torch::Tensor ProjectorNetImpl::forward(const torch::Tensor& features, int tap) {
  if (tap < 0 || tap >= static_cast<int>(heads_.size())) throw ShapeError("no projector head for tap " + std::to_string(tap));
  if (features.dim() != 2 || features.size(1) != options_.tap_channels[tap] || features.size(0) < 1) {
    throw ShapeError("projector head " + std::to_string(tap) + " expects M x " +
                     std::to_string(options_.tap_channels[tap]) + " features");
  }
  auto raw = heads_[tap]->forward(features);
  auto norms = raw.norm(2, 1, true);
  if (norms.min().item<double>() < 1e-12) {
    throw DegenerateEmbedding("projector head " + std::to_string(tap) + " produced a zero row");
  }
  return raw / norms;
}

void init_weights(torch::nn::Module& module, double std) {
  torch::NoGradGuard no_grad;
  for (auto& m : module.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<nn::Conv2d>()) {
      nn::init::normal_(conv->weight, 0.0, std);
      if (conv->bias.defined()) nn::init::zeros_(conv->bias);
    } else if (auto* deconv = m->as<nn::ConvTranspose2d>()) {
      nn::init::normal_(deconv->weight, 0.0, std);
      if (deconv->bias.defined()) nn::init::zeros_(deconv->bias);
    } else if (auto* linear = m->as<nn::Linear>()) {
      nn::init::normal_(linear->weight, 0.0, std);
      if (linear->bias.defined()) nn::init::zeros_(linear->bias);
    }
  }
}

TranslationResult generator_forward(GeneratorNet& g, const StainedImage& image) {
  torch::NoGradGuard no_grad;
  auto out = g->forward_with_features(to_model_tensor(image));
  TranslationResult result;
  result.virtual_ihc = StainedImage{from_model_tensor(out.image), StainDomain::kIhcVirtual, image.source_id,
                                    image.origin_y, image.origin_x};
  result.features = std::move(out.features);
  return result;
}

torch::Tensor discriminator_forward(DiscriminatorNet& d, const torch::Tensor& image) { return d->forward(image); }

torch::Tensor project_patches(ProjectorNet& p, const torch::Tensor& raw_patch_features, int tap) {
  return p->forward(raw_patch_features, tap);
}

}  // namespace mdcl
