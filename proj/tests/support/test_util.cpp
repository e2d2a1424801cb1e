#include "test_util.hpp"

#include <algorithm>
#include <random>

namespace fs = std::filesystem;

namespace mdcl::testing {

torch::Tensor random_unit_rows(int m, int d, Rng& rng, torch::Dtype dtype) {
  std::normal_distribution<double> normal;
  auto t = torch::empty({m, d}, torch::kFloat64);
  auto acc = t.accessor<double, 2>();
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < d; ++k) acc[i][k] = normal(rng);
  }
  t = t / t.norm(2, 1, true);
  return t.to(dtype);
}

oracle::Mat to_mat(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  auto acc = c.accessor<double, 2>();
  oracle::Mat out(c.size(0), oracle::Vec(c.size(1)));
  for (int64_t i = 0; i < c.size(0); ++i) {
    for (int64_t k = 0; k < c.size(1); ++k) out[i][k] = acc[i][k];
  }
  return out;
}

oracle::Vec to_vec(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous().flatten();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

torch::Tensor from_mat(const oracle::Mat& m) {
  auto t = torch::empty({static_cast<int64_t>(m.size()), static_cast<int64_t>(m[0].size())}, torch::kFloat64);
  auto acc = t.accessor<double, 2>();
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t k = 0; k < m[i].size(); ++k) acc[i][k] = m[i][k];
  }
  return t;
}

TempDir::TempDir() {
  std::random_device rd;
  const auto base = fs::temp_directory_path();
  for (;;) {
    path_ = base / ("mdcl-test-" + std::to_string(rd()));
    if (fs::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

double gradient_relative_error(const std::function<torch::Tensor(const std::vector<torch::Tensor>&)>& fn,
                               std::vector<torch::Tensor> inputs, double step) {
  for (auto& x : inputs) x = x.detach().clone().set_requires_grad(true);
  fn(inputs).backward();

  double max_diff = 0.0;
  double max_grad = 0.0;
  torch::NoGradGuard no_grad;
  for (auto& x : inputs) {
    const auto analytic = x.grad().contiguous();
    auto flat = x.view({-1});
    for (int64_t k = 0; k < flat.numel(); ++k) {
      const double original = flat[k].item<double>();
      flat[k] = original + step;
      const double plus = fn(inputs).item<double>();
      flat[k] = original - step;
      const double minus = fn(inputs).item<double>();
      flat[k] = original;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic.view({-1})[k].item<double>();
      max_diff = std::max(max_diff, std::abs(a - numeric));
      max_grad = std::max({max_grad, std::abs(a), std::abs(numeric)});
    }
  }
  return max_grad == 0.0 ? max_diff : max_diff / max_grad;
}

std::size_t count_image_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) ++n;
  }
  return n;
}

TrainConfig small_config(int crop) {
  TrainConfig c;
  c.crop = crop;
  c.epochs = 4;
  c.decay_start = 2;
  c.m_patches = 32;
  c.gen_width = 8;
  c.gen_res_blocks = 1;
  c.disc_width = 8;
  c.disc_layers = 2;
  c.embed_dim = 16;
  return c;
}

RgbImage random_image(int height, int width, Rng& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  RgbImage img(height, width);
  for (float& v : img.data()) v = u(rng);
  return img;
}

}  // namespace mdcl::testing
