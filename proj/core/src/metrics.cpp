#include "mdcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "mdcl/errors.hpp"

namespace mdcl {

std::vector<double> LayerMap::pooled() const {
  std::vector<double> out(channels, 0.0);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  if (plane == 0) return out;
  for (int c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (std::size_t k = 0; k < plane; ++k) sum += values[c * plane + k];
    out[c] = sum / static_cast<double>(plane);
  }
  return out;
}

std::vector<FeatureMatrix> extract_features(const std::vector<StainedImage>& images, const FeatureExtractor& extractor,
                                            const std::vector<int>& layers) {
  for (int layer : layers) {
    if (layer < 1 || layer > extractor.n_layers()) {
      throw PreconditionError("extractor '" + extractor.id() + "' has no layer " + std::to_string(layer));
    }
  }
  std::vector<FeatureMatrix> out(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out[l].extractor_id = extractor.id();
    out[l].layer_id = layers[l];
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto acts = extractor.activations(images[i].pixels);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto pooled = acts[layers[l] - 1].pooled();
      auto& rows = out[l].rows;
      if (i == 0) rows.resize(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(pooled.size()));
      for (std::size_t f = 0; f < pooled.size(); ++f) rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = pooled[f];
    }
  }
  return out;
}

namespace {

void check_distribution(const FeatureMatrix& m, int min_rows, const char* what) {
  if (m.rows.rows() < min_rows) {
    throw InsufficientSamples(std::string(what) + " needs at least " + std::to_string(min_rows) + " rows, got " +
                              std::to_string(m.rows.rows()));
  }
  if (!m.rows.allFinite()) throw PreconditionError(std::string(what) + " received non-finite features");
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& mean) {
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s);
  if (solver.info() != Eigen::Success) throw SqrtmFailure("eigen-decomposition did not converge");
  const Eigen::VectorXd root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * root.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

FidResult fid_detailed(const FeatureMatrix& a, const FeatureMatrix& b) {
  check_distribution(a, 2, "FID");
  check_distribution(b, 2, "FID");
  if (a.rows.cols() != b.rows.cols()) throw PreconditionError("FID feature widths differ");

  const Eigen::RowVectorXd mu_a = a.rows.colwise().mean();
  const Eigen::RowVectorXd mu_b = b.rows.colwise().mean();
  const Eigen::MatrixXd cov_a = covariance(a.rows, mu_a);
  const Eigen::MatrixXd cov_b = covariance(b.rows, mu_b);

  // tr((S_a S_b)^{1/2}) = tr((S_a^{1/2} S_b S_a^{1/2})^{1/2}); the inner product is symmetric PSD.
  const Eigen::MatrixXd root_a = symmetric_sqrt(cov_a);
  Eigen::MatrixXd inner = root_a * cov_b * root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(inner, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw SqrtmFailure("eigen-decomposition did not converge");
  const double trace_sqrt = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double mean_term = (mu_a - mu_b).squaredNorm();
  const double raw = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
  FidResult result;
  result.value = std::max(raw, 0.0);
  result.clamped_residue = std::min(raw, 0.0);
  return result;
}

double fid(const FeatureMatrix& a, const FeatureMatrix& b) {
  const auto result = fid_detailed(a, b);
  if (std::abs(result.clamped_residue) > 1e-6) {
    std::cerr << "warning: FID clamped a negative residue of " << result.clamped_residue << '\n';
  }
  return result.value;
}

double mmd2_unbiased(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const auto m = x.rows();
  const auto n = y.rows();
  if (m < 2 || n < 2) throw InsufficientSamples("unbiased MMD needs at least two rows per set");
  if (x.cols() != y.cols()) throw PreconditionError("MMD feature widths differ");
  const double inv_f = 1.0 / static_cast<double>(x.cols());
  auto kernel = [inv_f](const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
    return ((p * q.transpose()) * inv_f).array().unaryExpr([](double v) { return (v + 1.0) * (v + 1.0) * (v + 1.0); })
        .matrix()
        .eval();
  };
  const Eigen::MatrixXd kxx = kernel(x, x);
  const Eigen::MatrixXd kyy = kernel(y, y);
  const Eigen::MatrixXd kxy = kernel(x, y);
  const double sxx = (kxx.sum() - kxx.trace()) / static_cast<double>(m * (m - 1));
  const double syy = (kyy.sum() - kyy.trace()) / static_cast<double>(n * (n - 1));
  const double sxy = kxy.sum() / static_cast<double>(m * n);
  return sxx + syy - 2.0 * sxy;
}

namespace {

Eigen::MatrixXd sample_rows(const Eigen::MatrixXd& x, int k, Rng& rng) {
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(x.rows()));
  std::iota(pool.begin(), pool.end(), Eigen::Index{0});
  Eigen::MatrixXd out(k, x.cols());
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
    out.row(i) = x.row(pool[i]);
  }
  return out;
}

}  // namespace

double kid(const FeatureMatrix& a, const FeatureMatrix& b, int subset_size, int n_subsets, Rng& rng) {
  if (subset_size < 2) throw InsufficientSamples("KID subset size must be at least 2");
  check_distribution(a, subset_size, "KID");
  check_distribution(b, subset_size, "KID");
  if (n_subsets < 1) throw PreconditionError("KID needs at least one subset");
  double total = 0.0;
  for (int s = 0; s < n_subsets; ++s) {
    const auto xa = sample_rows(a.rows, subset_size, rng);
    const auto xb = sample_rows(b.rows, subset_size, rng);
    total += mmd2_unbiased(xa, xb);
  }
  return total / n_subsets;
}

PhvResult phv(const std::vector<ImageActivations>& a, const std::vector<ImageActivations>& b, double threshold) {
  if (!(threshold > 0.0)) throw PreconditionError("PHV threshold must be positive");
  if (a.size() != b.size()) {
    throw PairMismatch("PHV needs paired inputs, got " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  if (a.empty()) throw InsufficientSamples("PHV needs at least one pair");
  const std::size_t n_layers = a.front().size();
  PhvResult result;
  result.layers.assign(n_layers, 0.0);
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (a[p].size() != n_layers || b[p].size() != n_layers) throw PairMismatch("PHV layer counts differ");
    for (std::size_t l = 0; l < n_layers; ++l) {
      const auto& va = a[p][l].values;
      const auto& vb = b[p][l].values;
      if (va.size() != vb.size() || va.empty()) {
        throw PairMismatch("PHV layer " + std::to_string(l + 1) + " shapes differ for pair " + std::to_string(p));
      }
      const auto [amin, amax] = std::minmax_element(va.begin(), va.end());
      const auto [bmin, bmax] = std::minmax_element(vb.begin(), vb.end());
      const double lo = std::min<double>(*amin, *bmin);
      const double range = std::max<double>(*amax, *bmax) - lo;
      std::size_t differing = 0;
      if (range > 0.0) {
        for (std::size_t k = 0; k < va.size(); ++k) {
          const double na = (va[k] - lo) / range;
          const double nb = (vb[k] - lo) / range;
          if (std::abs(na - nb) > threshold) ++differing;
        }
      }
      result.layers[l] += static_cast<double>(differing) / static_cast<double>(va.size());
    }
  }
  for (double& v : result.layers) v /= static_cast<double>(a.size());
  result.average = std::accumulate(result.layers.begin(), result.layers.end(), 0.0) /
                   static_cast<double>(std::max<std::size_t>(n_layers, 1));
  return result;
}

MetricReport compute_metrics(const std::vector<StainedImage>& generated, const std::vector<StainedImage>& gt,
                             const MetricConfig& config) {
  if (generated.size() != gt.size()) {
    throw PairMismatch(std::to_string(generated.size()) + " generated images vs " + std::to_string(gt.size()) +
                       " ground-truth images");
  }
  for (std::size_t i = 0; i < generated.size(); ++i) {
    if (generated[i].height() != gt[i].height() || generated[i].width() != gt[i].width()) {
      throw PairMismatch("image pair " + std::to_string(i) + " differs in size");
    }
  }
  const int n = static_cast<int>(generated.size());
  if (n < 2) throw InsufficientSamples("evaluation needs at least two image pairs");

  const auto extractor = make_extractor(config.extractor_id);
  if (extractor->n_layers() < 4) throw PreconditionError("extractor must expose at least four layers");

  std::vector<ImageActivations> acts_gen;
  std::vector<ImageActivations> acts_gt;
  FeatureMatrix feats_gen{Eigen::MatrixXd(), extractor->id(), extractor->n_layers()};
  FeatureMatrix feats_gt = feats_gen;
  for (int i = 0; i < n; ++i) {
    acts_gen.push_back(extractor->activations(generated[i].pixels));
    acts_gt.push_back(extractor->activations(gt[i].pixels));
    const auto pg = acts_gen.back().back().pooled();
    const auto pt = acts_gt.back().back().pooled();
    if (i == 0) {
      feats_gen.rows.resize(n, static_cast<Eigen::Index>(pg.size()));
      feats_gt.rows.resize(n, static_cast<Eigen::Index>(pt.size()));
    }
    feats_gen.rows.row(i) = Eigen::Map<const Eigen::RowVectorXd>(pg.data(), static_cast<Eigen::Index>(pg.size()));
    feats_gt.rows.row(i) = Eigen::Map<const Eigen::RowVectorXd>(pt.data(), static_cast<Eigen::Index>(pt.size()));
  }
  for (auto& a : acts_gen) a.resize(4);
  for (auto& a : acts_gt) a.resize(4);

  MetricReport report;
  report.n_images = n;
  report.threshold_T = config.phv_threshold;
  report.extractor_id = extractor->id();
  report.fid = fid(feats_gen, feats_gt);

  Rng rng(config.seed);
  const int subset = config.kid_subset_size > 0 ? config.kid_subset_size : std::min(n, 100);
  report.kid_x1000 = 1000.0 * kid(feats_gen, feats_gt, subset, config.kid_subsets, rng);

  const auto hash = phv(acts_gen, acts_gt, config.phv_threshold);
  std::copy_n(hash.layers.begin(), 4, report.phv_layers.begin());
  report.phv_average = hash.average;
  return report;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string serialize_report(const MetricReport& report) {
  std::ostringstream out;
  out << "format=mdcl-metric-report\n";
  out << "version=1\n";
  out << "extractor_id=" << report.extractor_id << '\n';
  out << "n_images=" << report.n_images << '\n';
  out << "threshold_T=" << format_double(report.threshold_T) << '\n';
  out << "fid=" << format_double(report.fid) << '\n';
  out << "kid_x1000=" << format_double(report.kid_x1000) << '\n';
  for (int l = 0; l < 4; ++l) out << "phv_layer" << l + 1 << '=' << format_double(report.phv_layers[l]) << '\n';
  out << "phv_average=" << format_double(report.phv_average) << '\n';
  return out.str();
}

MetricReport parse_report(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed report line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("report is missing '" + key + "'");
    return it->second;
  };
  auto number = [&](const std::string& key) {
    try {
      return std::stod(get(key));
    } catch (const std::logic_error&) {
      throw ConfigError("report field '" + key + "' is not a number");
    }
  };
  if (get("format") != "mdcl-metric-report") throw ConfigError("not a metric report");
  if (get("version") != "1") throw ConfigError("unsupported metric report version " + get("version"));

  MetricReport report;
  report.extractor_id = get("extractor_id");
  report.n_images = static_cast<int>(number("n_images"));
  report.threshold_T = number("threshold_T");
  report.fid = number("fid");
  report.kid_x1000 = number("kid_x1000");
  for (int l = 0; l < 4; ++l) report.phv_layers[l] = number("phv_layer" + std::to_string(l + 1));
  report.phv_average = number("phv_average");

  const double mean = std::accumulate(report.phv_layers.begin(), report.phv_layers.end(), 0.0) / 4.0;
  if (std::abs(mean - report.phv_average) > 1e-9) {
    throw PreconditionError("phv_average does not equal the mean of the layer values");
  }
  return report;
}

void write_report(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write report " + path.string());
  out << serialize_report(report);
  if (!out) throw IoFailure("cannot write report " + path.string());
}

MetricReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot read report " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_report(buffer.str());
}

std::string summary_line(const MetricReport& report) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "FID=%.4f KID(x1000)=%.4f PHV(avg)=%.4f", report.fid, report.kid_x1000,
                report.phv_average);
  return buf;
}

}  // namespace mdcl
