#include <cmath>
#include <filesystem>
#include <mutex>

#include <torch/script.h>
#include <torch/torch.h>

#include "mdcl/errors.hpp"
#include "mdcl/metrics.hpp"
#include "mdcl/networks.hpp"

namespace F = torch::nn::functional;

namespace mdcl {

namespace {

LayerMap to_layer_map(const torch::Tensor& activation) {
  auto t = activation.detach().to(torch::kFloat32).contiguous();
  if (t.dim() == 4) t = t.squeeze(0);
  if (t.dim() == 1) t = t.view({t.size(0), 1, 1});
  if (t.dim() == 2) t = t.unsqueeze(2);
  if (t.dim() != 3) throw ShapeError("feature map must be C x H x W");
  LayerMap map;
  map.channels = static_cast<int>(t.size(0));
  map.height = static_cast<int>(t.size(1));
  map.width = static_cast<int>(t.size(2));
  map.values.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
  return map;
}

/// Four stride-2 3x3 conv + ReLU stages with weights drawn from a fixed
/// mt19937_64 stream (He-normal), so features never depend on global torch RNG state.
class TinyCnnExtractor final : public FeatureExtractor {
 public:
  static constexpr std::uint64_t kSeed = 0x6d64636cULL;

  TinyCnnExtractor() {
    Rng rng(kSeed);
    int in = 3;
    for (int out : {16, 32, 64, 128}) {
      std::normal_distribution<float> normal(0.0f, std::sqrt(2.0f / static_cast<float>(in * 9)));
      std::vector<float> w(static_cast<std::size_t>(out) * in * 9);
      for (float& v : w) v = normal(rng);
      weights_.push_back(torch::tensor(w).view({out, in, 3, 3}));
      in = out;
    }
  }

  std::string id() const override { return "tiny-cnn"; }
  int n_layers() const override { return static_cast<int>(weights_.size()); }

  ImageActivations activations(const RgbImage& image) const override {
    torch::NoGradGuard no_grad;
    ImageActivations out;
    torch::Tensor h = to_model_tensor(image);
    for (const auto& w : weights_) {
      h = torch::relu(F::conv2d(h, w, F::Conv2dFuncOptions().stride(2).padding(1)));
      out.push_back(to_layer_map(h));
    }
    return out;
  }

 private:
  std::vector<torch::Tensor> weights_;
};

class TorchScriptExtractor final : public FeatureExtractor {
 public:
  explicit TorchScriptExtractor(const std::string& path) : path_(path) {
    if (!std::filesystem::exists(path)) throw ExtractorUnavailable("no TorchScript module at " + path);
    try {
      module_ = torch::jit::load(path);
      module_.eval();
      n_layers_ = static_cast<int>(activations(RgbImage(64, 64, 0.5f)).size());
    } catch (const c10::Error& e) {
      throw ExtractorUnavailable("cannot load TorchScript module " + path + ": " + e.what_without_backtrace());
    }
  }

  std::string id() const override { return "torchscript:" + path_; }
  int n_layers() const override { return n_layers_; }

  ImageActivations activations(const RgbImage& image) const override {
    torch::NoGradGuard no_grad;
    std::lock_guard lock(mutex_);
    auto result = module_.forward({to_model_tensor(image)});
    ImageActivations out;
    if (result.isTensor()) {
      out.push_back(to_layer_map(result.toTensor()));
    } else if (result.isTuple()) {
      for (const auto& v : result.toTuple()->elements()) out.push_back(to_layer_map(v.toTensor()));
    } else if (result.isList()) {
      for (const auto& v : result.toList()) out.push_back(to_layer_map(v.get().toTensor()));
    } else {
      throw ExtractorUnavailable("TorchScript extractor must return a tensor, tuple or list");
    }
    return out;
  }

 private:
  std::string path_;
  mutable torch::jit::script::Module module_;
  mutable std::mutex mutex_;
  int n_layers_ = 0;
};

}  // namespace

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& id) {
  if (id == "tiny-cnn") return std::make_unique<TinyCnnExtractor>();
  constexpr std::string_view kScript = "torchscript:";
  if (id.rfind(kScript, 0) == 0) return std::make_unique<TorchScriptExtractor>(id.substr(kScript.size()));
  throw ExtractorUnavailable("unknown feature extractor '" + id + "'");
}

}  // namespace mdcl
