#include <gtest/gtest.h>
#include <torch/torch.h>

#include "mdcl/errors.hpp"
#include "mdcl/networks.hpp"
#include "test_util.hpp"

using namespace mdcl;

namespace {

StainedImage random_stained(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  return StainedImage{mdcl::testing::random_image(h, w, rng), StainDomain::kHE, "random"};
}

}  // namespace

TEST(ModelTensor, RoundTripAndRange) {
  Rng rng(1);
  const RgbImage img = mdcl::testing::random_image(6, 7, rng);
  const auto t = to_model_tensor(img);
  EXPECT_EQ(t.sizes(), (std::vector<int64_t>{1, 3, 6, 7}));
  EXPECT_GE(t.min().item<float>(), -1.0f);
  EXPECT_LE(t.max().item<float>(), 1.0f);
  EXPECT_NEAR(t[0][1][2][3].item<float>(), img.at(2, 3, 1) * 2.0f - 1.0f, 1e-6);
  const RgbImage back = from_model_tensor(t);
  for (std::size_t k = 0; k < img.data().size(); ++k) EXPECT_NEAR(back.data()[k], img.data()[k], 1e-6);
  EXPECT_THROW(from_model_tensor(torch::zeros({3, 4, 4})), ShapeError);
}

TEST(Generator, ShapePreservingWithTapDims) {
  torch::manual_seed(0);
  GeneratorNet g(GeneratorOptions{8, 1, 2, {}});
  auto out = generator_forward(g, random_stained(64, 64, 1));
  EXPECT_EQ(out.virtual_ihc.height(), 64);
  EXPECT_EQ(out.virtual_ihc.width(), 64);
  EXPECT_EQ(out.virtual_ihc.domain, StainDomain::kIhcVirtual);
  ASSERT_EQ(out.features.size(), 3u);
  ASSERT_EQ(g->taps().size(), 3u);
  for (std::size_t t = 0; t < g->taps().size(); ++t) {
    const auto& info = g->taps()[t];
    EXPECT_EQ(out.features[t].size(1), info.channels);
    EXPECT_EQ(out.features[t].size(2), 64 / info.downsample);
    EXPECT_EQ(out.features[t].size(3), 64 / info.downsample);
  }
  EXPECT_EQ(out.features[2].size(2), 16);
}

TEST(Generator, BoundedOutput) {
  torch::manual_seed(3);
  GeneratorNet g(GeneratorOptions{8, 1, 2, {}});
  torch::NoGradGuard no_grad;
  auto y = g->forward(torch::randn({1, 3, 32, 32}) * 10.0);
  EXPECT_GE(y.min().item<float>(), -1.0f);
  EXPECT_LE(y.max().item<float>(), 1.0f);
}

TEST(Generator, DeterministicInference) {
  torch::manual_seed(5);
  GeneratorNet g(GeneratorOptions{8, 1, 2, {}});
  const auto img = random_stained(32, 32, 2);
  const auto a = generator_forward(g, img);
  const auto b = generator_forward(g, img);
  EXPECT_EQ(a.virtual_ihc.pixels, b.virtual_ihc.pixels);
}

TEST(Generator, SameSeedSameWeights) {
  torch::manual_seed(11);
  GeneratorNet a(GeneratorOptions{8, 1, 2, {}});
  torch::manual_seed(11);
  GeneratorNet b(GeneratorOptions{8, 1, 2, {}});
  const auto pa = a->parameters();
  const auto pb = b->parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pb[i]));
}

TEST(Generator, RejectsIndivisibleInput) {
  GeneratorNet g(GeneratorOptions{8, 1, 2, {}});
  EXPECT_THROW(generator_forward(g, random_stained(30, 32, 1)), ShapeError);
  EXPECT_THROW(g->forward(torch::zeros({1, 1, 32, 32})), ShapeError);
}

TEST(Generator, CustomTapsIncludeResidualBlocks) {
  GeneratorNet g(GeneratorOptions{8, 2, 2, {1, 4}});
  ASSERT_EQ(g->taps().size(), 2u);
  EXPECT_EQ(g->taps()[0].downsample, 2);
  EXPECT_EQ(g->taps()[1].layer, 4);
  EXPECT_EQ(g->taps()[1].downsample, 4);
  EXPECT_EQ(g->taps()[1].channels, 32);
  torch::NoGradGuard no_grad;
  const auto feats = g->encode(torch::zeros({1, 3, 16, 16}));
  ASSERT_EQ(feats.size(), 2u);
  EXPECT_EQ(feats[1].size(2), 4);
  EXPECT_THROW(GeneratorNet(GeneratorOptions{8, 1, 2, {5}}), PreconditionError);
  EXPECT_THROW(GeneratorNet(GeneratorOptions{8, 1, 2, {1, 1}}), PreconditionError);
}

TEST(Discriminator, LogitMapSmallerThanInput) {
  torch::manual_seed(0);
  DiscriminatorNet d(DiscriminatorOptions{8, 3});
  auto logits = discriminator_forward(d, torch::rand({1, 3, 64, 64}) * 2 - 1);
  EXPECT_EQ(logits.size(1), 1);
  EXPECT_LT(logits.size(2), 64);
  EXPECT_LT(logits.size(3), 64);
  EXPECT_EQ(logits.size(2), d->output_size(64));
  EXPECT_EQ(d->receptive_field(), 70);
}

TEST(Discriminator, ZeroWeightsGiveFinalBias) {
  DiscriminatorNet d(DiscriminatorOptions{8, 3});
  {
    torch::NoGradGuard no_grad;
    for (auto& p : d->parameters()) p.zero_();
    auto params = d->named_parameters();
    std::string last_bias;
    for (const auto& item : params) {
      if (item.key().find("bias") != std::string::npos) last_bias = item.key();
    }
    params[last_bias].fill_(0.375);
  }
  auto logits = discriminator_forward(d, torch::rand({1, 3, 32, 32}));
  EXPECT_TRUE(torch::allclose(logits, torch::full_like(logits, 0.375)));
}

TEST(Discriminator, FiniteOnExtremeInputs) {
  DiscriminatorNet d(DiscriminatorOptions{8, 3});
  for (double v : {-1.0, 1.0}) {
    auto logits = discriminator_forward(d, torch::full({1, 3, 32, 32}, v));
    EXPECT_TRUE(torch::isfinite(logits).all().item<bool>());
  }
}

TEST(Discriminator, TooSmallInput) {
  DiscriminatorNet d(DiscriminatorOptions{8, 3});
  EXPECT_THROW(discriminator_forward(d, torch::zeros({1, 3, 8, 8})), ShapeError);
}

TEST(Projector, UnitRows) {
  torch::manual_seed(1);
  ProjectorNet p(ProjectorOptions{16, {8, 12}});
  for (int tap = 0; tap < 2; ++tap) {
    auto z = project_patches(p, torch::randn({20, tap == 0 ? 8 : 12}), tap);
    EXPECT_EQ(z.sizes(), (std::vector<int64_t>{20, 16}));
    auto norms = z.norm(2, 1);
    EXPECT_LT((norms - 1.0).abs().max().item<double>(), 1e-6);
  }
}

TEST(Projector, DuplicatedRowsStayDuplicated) {
  torch::manual_seed(2);
  ProjectorNet p(ProjectorOptions{16, {8}});
  auto row = torch::randn({1, 8});
  auto z = project_patches(p, torch::cat({row, row, row}), 0);
  EXPECT_TRUE(torch::equal(z[0], z[1]));
  EXPECT_TRUE(torch::equal(z[1], z[2]));
}

TEST(Projector, ZeroInputRowStaysFinite) {
  torch::manual_seed(4);
  ProjectorNet p(ProjectorOptions{16, {8}});
  auto features = torch::randn({4, 8});
  features[2].zero_();
  const auto z = project_patches(p, features, 0);
  EXPECT_NEAR(z[2].norm().item<double>(), 1.0, 1e-6);
}

TEST(Projector, DeadHeadIsDegenerate) {
  ProjectorNet p(ProjectorOptions{16, {8}});
  {
    torch::NoGradGuard no_grad;
    for (auto& param : p->parameters()) param.zero_();
  }
  auto features = torch::randn({4, 8});
  EXPECT_THROW(project_patches(p, features, 0), DegenerateEmbedding);
}

TEST(Projector, WrongShapes) {
  ProjectorNet p(ProjectorOptions{16, {8}});
  EXPECT_THROW(project_patches(p, torch::randn({4, 7}), 0), ShapeError);
  EXPECT_THROW(project_patches(p, torch::randn({4, 8}), 1), ShapeError);
}

TEST(InitWeights, NormalStdAndZeroBiases) {
  torch::manual_seed(0);
  auto net = torch::nn::Sequential(torch::nn::Linear(256, 256), torch::nn::Conv2d(torch::nn::Conv2dOptions(16, 16, 3)));
  init_weights(*net);
  double sum_sq = 0.0;
  int64_t count = 0;
  for (const auto& item : net->named_parameters()) {
    if (item.key().find("weight") == std::string::npos) {
      EXPECT_EQ(item.value().abs().max().item<double>(), 0.0);
      continue;
    }
    sum_sq += item.value().pow(2).sum().item<double>();
    count += item.value().numel();
  }
  EXPECT_NEAR(std::sqrt(sum_sq / count), 0.02, 0.001);
}

TEST(InitWeights, ProjectorBiasesAreRandom) {
  torch::manual_seed(0);
  ProjectorNet p(ProjectorOptions{256, {256}});
  for (const auto& item : p->named_parameters()) {
    const double std = item.value().std().item<double>();
    EXPECT_NEAR(std, 0.02, 0.004) << item.key();
  }
}
