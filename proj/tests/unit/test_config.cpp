#include <gtest/gtest.h>

#include "mdcl/config.hpp"
#include "mdcl/errors.hpp"
#include "test_util.hpp"

using namespace mdcl;

TEST(KeyValues, ParsesCommentsAndWhitespace) {
  const auto kv = parse_key_values("# header\n  epochs = 12  \n\nseed=3 # trailing\nloss_variant =nce\n");
  ASSERT_EQ(kv.size(), 3u);
  EXPECT_EQ(kv.at("epochs"), "12");
  EXPECT_EQ(kv.at("seed"), "3");
  EXPECT_EQ(kv.at("loss_variant"), "nce");
}

TEST(KeyValues, MalformedLines) {
  EXPECT_THROW(parse_key_values("epochs 12\n"), ConfigError);
  EXPECT_THROW(parse_key_values(" = 12\n"), ConfigError);
}

TEST(KeyValues, FileRoundTrip) {
  mdcl::testing::TempDir dir;
  const KeyValues kv{{"a", "1"}, {"b", "x y"}};
  write_key_values(dir / "kv.txt", kv);
  EXPECT_EQ(read_key_values(dir / "kv.txt"), kv);
  EXPECT_THROW(read_key_values(dir / "missing.txt"), IoFailure);
}

TEST(TrainConfig, DefaultsMatchDocumentedValues) {
  const TrainConfig c;
  EXPECT_EQ(c.epochs, 40);
  EXPECT_EQ(c.decay_start, 30);
  EXPECT_EQ(c.lr0, 2e-4);
  EXPECT_EQ(c.adam_beta1, 0.5);
  EXPECT_EQ(c.adam_beta2, 0.999);
  EXPECT_EQ(c.crop, 64);
  EXPECT_EQ(c.m_patches, 256);
  EXPECT_EQ(c.tau, 0.07);
  EXPECT_EQ(c.lambda_gp, 10.0);
  EXPECT_EQ(c.loss_variant, ContrastiveVariant::kMixDomain);
  EXPECT_TRUE(c.use_gt_branch);
  EXPECT_EQ(c.gp_weights, (std::vector<double>{1, 2, 4, 8}));
  EXPECT_NO_THROW(c.validate());
}

TEST(TrainConfig, KeyValueRoundTripIsExact) {
  TrainConfig c;
  c.lr0 = 1.0 / 3.0;
  c.tau = 0.123456789012345;
  c.seed = 123456789012345ULL;
  c.loss_variant = ContrastiveVariant::kPatchNce;
  c.use_gt_branch = false;
  c.nce_reduction = LossReduction::kMean;
  c.gen_feature_taps = {0, 2, 4};
  c.gp_weights = {0.5, 1.5, 2.5, 3.5};
  const TrainConfig back = train_config_from(parse_key_values(format_key_values(to_key_values(c))));
  EXPECT_EQ(to_key_values(back), to_key_values(c));
  EXPECT_EQ(back.lr0, c.lr0);
  EXPECT_EQ(back.tau, c.tau);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.gen_feature_taps, c.gen_feature_taps);
  EXPECT_EQ(back.gp_weights, c.gp_weights);
}

TEST(TrainConfig, EveryKeyIsListed) {
  const auto kv = to_key_values(TrainConfig{});
  const auto keys = train_config_keys();
  EXPECT_EQ(kv.size(), keys.size());
  for (const auto& k : keys) EXPECT_TRUE(kv.count(k)) << k;
}

TEST(TrainConfig, UnknownKeyListsValidKeys) {
  try {
    train_config_from({{"learning_rate", "1"}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("learning_rate"), std::string::npos);
    for (const auto& k : train_config_keys()) EXPECT_NE(msg.find(k), std::string::npos) << k;
  }
}

TEST(TrainConfig, BadValues) {
  EXPECT_THROW(train_config_from({{"epochs", "ten"}}), ConfigError);
  EXPECT_THROW(train_config_from({{"lr0", "1e-4x"}}), ConfigError);
  EXPECT_THROW(train_config_from({{"use_gt_branch", "maybe"}}), ConfigError);
  EXPECT_THROW(train_config_from({{"loss_variant", "cut"}}), ConfigError);
  EXPECT_THROW(train_config_from({{"seed", "-1"}}), ConfigError);
  EXPECT_EQ(train_config_from({{"loss_variant", "patchnce"}}).loss_variant, ContrastiveVariant::kPatchNce);
  EXPECT_EQ(train_config_from({{"loss_variant", "mix_domain"}}).loss_variant, ContrastiveVariant::kMixDomain);
}

TEST(TrainConfig, ValidationInvariants) {
  auto invalid = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  invalid([](TrainConfig& c) { c.decay_start = 0; });
  invalid([](TrainConfig& c) { c.decay_start = 41; });
  invalid([](TrainConfig& c) { c.lr0 = 0.0; });
  invalid([](TrainConfig& c) { c.m_patches = 0; });
  invalid([](TrainConfig& c) { c.tau = -0.1; });
  invalid([](TrainConfig& c) { c.crop = 62; });
  invalid([](TrainConfig& c) { c.gp_weights = {1, 2}; });
  invalid([](TrainConfig& c) { c.grad_accumulation = 0; });
  TrainConfig edge;
  edge.decay_start = edge.epochs;
  EXPECT_NO_THROW(edge.validate());
}

TEST(MetricConfig, RoundTripAndUnknownKey) {
  MetricConfig c;
  c.extractor_id = "torchscript:/x.pt";
  c.phv_threshold = 0.05;
  c.kid_subsets = 3;
  c.seed = 9;
  const auto back = metric_config_from(to_key_values(c));
  EXPECT_EQ(to_key_values(back), to_key_values(c));
  EXPECT_THROW(metric_config_from({{"threshold", "0.1"}}), ConfigError);
}

TEST(ObjectiveNames, AblationRows) {
  TrainConfig c;
  EXPECT_EQ(he_objective_name(c), "mix_domain");
  EXPECT_EQ(gt_objective_name(c), "mix_domain_weighted");
  c.use_gt_branch = false;
  EXPECT_EQ(gt_objective_name(c), "none");
  c.loss_variant = ContrastiveVariant::kPatchNce;
  EXPECT_EQ(he_objective_name(c), "patchnce");
  c.use_gt_branch = true;
  EXPECT_EQ(gt_objective_name(c), "patchnce_weighted");
}
