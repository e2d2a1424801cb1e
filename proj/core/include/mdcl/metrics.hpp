#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdcl/dataset.hpp"

namespace mdcl {

struct FeatureMatrix {
  Eigen::MatrixXd rows;  // N x F
  std::string extractor_id;
  std::optional<int> layer_id;
};

/// One image's activations at one layer, channel-major (C x H x W).
struct LayerMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;

  /// Per-channel spatial mean.
  std::vector<double> pooled() const;
};

/// Activations of one image at every layer of an extractor, shallowest first.
using ImageActivations = std::vector<LayerMap>;

/// Deterministic image -> multi-layer feature map function.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;

  virtual std::string id() const = 0;
  virtual int n_layers() const = 0;
  virtual ImageActivations activations(const RgbImage& image) const = 0;
};

/// Registry lookup:
///   "tiny-cnn"            four fixed-seed conv stages (16, 32, 64, 128 channels, stride 2);
///   "torchscript:<path>"  a scripted module whose forward returns a tuple/list of feature maps.
/// Throws ExtractorUnavailable for unknown ids or unloadable modules.
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& id);

/// One FeatureMatrix per requested layer (1-based layer ids); row i is the
/// spatially averaged feature of images[i].
std::vector<FeatureMatrix> extract_features(const std::vector<StainedImage>& images, const FeatureExtractor& extractor,
                                            const std::vector<int>& layers);

struct FidResult {
  double value = 0.0;
  /// Negative trace remainder that was clamped to zero (0 when none).
  double clamped_residue = 0.0;
};

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}); covariances use 1/(N-1).
FidResult fid_detailed(const FeatureMatrix& a, const FeatureMatrix& b);
double fid(const FeatureMatrix& a, const FeatureMatrix& b);

/// Unbiased MMD^2 with kernel k(x, y) = (x.y / F + 1)^3 over full matrices.
double mmd2_unbiased(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

/// Mean of unbiased MMD^2 over `n_subsets` random subsets of `subset_size`
/// rows drawn without replacement from each matrix.
double kid(const FeatureMatrix& a, const FeatureMatrix& b, int subset_size, int n_subsets, Rng& rng);

struct PhvResult {
  std::vector<double> layers;
  double average = 0.0;
};

/// Per image pair and layer: both maps are min/max normalized by their joint
/// range, and the layer score is the fraction of elements with |a - b| > T.
/// Scores are averaged over pairs. A pair with zero joint range scores 0.
PhvResult phv(const std::vector<ImageActivations>& a, const std::vector<ImageActivations>& b, double threshold);

struct MetricConfig {
  std::string extractor_id = "tiny-cnn";
  double phv_threshold = 0.01;
  int kid_subset_size = 0;  // 0 selects min(N, 100)
  int kid_subsets = 10;
  std::uint64_t seed = 0;
};

struct MetricReport {
  double fid = 0.0;
  double kid_x1000 = 0.0;
  std::array<double, 4> phv_layers{};
  double phv_average = 0.0;
  int n_images = 0;
  double threshold_T = 0.01;
  std::string extractor_id;
};

/// Scores paired generated / ground-truth images (same order, same sizes).
MetricReport compute_metrics(const std::vector<StainedImage>& generated, const std::vector<StainedImage>& gt,
                             const MetricConfig& config);

/// key=value lines, KID already multiplied by 1000.
std::string serialize_report(const MetricReport& report);
/// Inverse of serialize_report; throws ConfigError on malformed text and
/// PreconditionError when phv_average disagrees with the layer mean.
MetricReport parse_report(const std::string& text);

void write_report(const std::filesystem::path& path, const MetricReport& report);
MetricReport read_report(const std::filesystem::path& path);

/// `FID=<v> KID(x1000)=<v> PHV(avg)=<v>`
std::string summary_line(const MetricReport& report);

}  // namespace mdcl
