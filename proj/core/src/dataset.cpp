#include "mdcl/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mdcl/errors.hpp"

namespace fs = std::filesystem;

namespace mdcl {

std::string_view to_string(StainDomain domain) {
  switch (domain) {
    case StainDomain::kHE:
      return "HE";
    case StainDomain::kIhcReal:
      return "IHC_REAL";
    case StainDomain::kIhcVirtual:
      return "IHC_VIRTUAL";
  }
  return "?";
}

std::string_view to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

RgbImage::RgbImage(int height, int width, float fill)
    : height_(height), width_(width), pixels_(static_cast<std::size_t>(height) * width * 3, fill) {
  if (height < 0 || width < 0) throw PreconditionError("negative image dimensions");
}

RgbImage RgbImage::crop(int top, int left, int h, int w) const {
  if (top < 0 || left < 0 || h < 0 || w < 0 || top + h > height_ || left + w > width_) {
    throw CropTooLarge("window " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                       std::to_string(top) + "," + std::to_string(left) + ") exceeds " +
                       std::to_string(height_) + "x" + std::to_string(width_));
  }
  RgbImage out(h, w);
  for (int y = 0; y < h; ++y) {
    const auto* src = &pixels_[index(top + y, left, 0)];
    std::copy(src, src + static_cast<std::size_t>(w) * 3, &out.at(y, 0, 0));
  }
  return out;
}

RgbImage read_rgb(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoFailure("cannot decode image " + path.string());
  RgbImage image(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      image.at(y, x, 0) = row[x][2] / 255.0f;
      image.at(y, x, 1) = row[x][1] / 255.0f;
      image.at(y, x, 2) = row[x][0] / 255.0f;
    }
  }
  return image;
}

namespace {

std::uint8_t quantize(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

}  // namespace

void write_rgb(const fs::path& path, const RgbImage& image) {
  cv::Mat bgr(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      row[x] = cv::Vec3b(quantize(image.at(y, x, 2)), quantize(image.at(y, x, 1)),
                         quantize(image.at(y, x, 0)));
    }
  }
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr);
  } catch (const cv::Exception& e) {
    throw IoFailure("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoFailure("cannot write " + path.string());
}

bool is_image_file(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoFailure("not a directory: " + dir.string());
  std::map<std::string, fs::path> by_stem;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
    const std::string stem = entry.path().stem().string();
    if (!by_stem.emplace(stem, entry.path()).second) {
      throw PreconditionError("duplicate stem '" + stem + "' in " + dir.string());
    }
  }
  std::vector<fs::path> out;
  out.reserve(by_stem.size());
  for (auto& [stem, path] : by_stem) out.push_back(path);
  return out;
}

std::vector<MatchedPair> scan_dataset(const fs::path& root, Split split) {
  const fs::path base = root / std::string(to_string(split));
  const auto he_files = list_images(base / "HE");
  const auto ihc_files = list_images(base / "IHC");

  std::map<std::string, fs::path> ihc_by_stem;
  for (const auto& p : ihc_files) ihc_by_stem.emplace(p.stem().string(), p);

  std::vector<MatchedPair> pairs;
  pairs.reserve(he_files.size());
  for (const auto& he_path : he_files) {
    const std::string stem = he_path.stem().string();
    auto it = ihc_by_stem.find(stem);
    if (it == ihc_by_stem.end()) {
      throw MissingCounterpart("HE image '" + stem + "' has no IHC counterpart under " + base.string());
    }
    MatchedPair pair;
    pair.pair_id = stem;
    pair.he = StainedImage{read_rgb(he_path), StainDomain::kHE, he_path.string()};
    pair.ihc_gt = StainedImage{read_rgb(it->second), StainDomain::kIhcReal, it->second.string()};
    if (pair.he.height() != pair.ihc_gt.height() || pair.he.width() != pair.ihc_gt.width()) {
      throw DimensionMismatch("pair '" + stem + "': HE is " + std::to_string(pair.he.height()) + "x" +
                              std::to_string(pair.he.width()) + ", IHC is " +
                              std::to_string(pair.ihc_gt.height()) + "x" +
                              std::to_string(pair.ihc_gt.width()));
    }
    ihc_by_stem.erase(it);
    pairs.push_back(std::move(pair));
  }
  if (!ihc_by_stem.empty()) {
    throw MissingCounterpart("IHC image '" + ihc_by_stem.begin()->first + "' has no HE counterpart under " +
                             base.string());
  }
  if (pairs.empty()) throw EmptyDataset("no image pairs under " + base.string());
  return pairs;
}

MatchedPair random_crop_pair(const MatchedPair& pair, int size, Rng& rng) {
  const int h = pair.he.height();
  const int w = pair.he.width();
  if (size < 1) throw PreconditionError("crop size must be positive");
  if (size > std::min(h, w)) {
    throw CropTooLarge("crop " + std::to_string(size) + " exceeds " + std::to_string(h) + "x" +
                       std::to_string(w) + " pair '" + pair.pair_id + "'");
  }
  std::uniform_int_distribution<int> dy(0, h - size);
  std::uniform_int_distribution<int> dx(0, w - size);
  const int top = dy(rng);
  const int left = dx(rng);

  auto cut = [&](const StainedImage& src) {
    StainedImage out{src.pixels.crop(top, left, size, size), src.domain, src.source_id};
    out.origin_y = src.origin_y + top;
    out.origin_x = src.origin_x + left;
    return out;
  };
  return MatchedPair{cut(pair.he), cut(pair.ihc_gt), pair.pair_id};
}

RgbImage oracle_recolor(const RgbImage& he) {
  static constexpr std::array<std::array<float, 3>, 3> kMix{{
      {0.20f, 0.90f, -0.30f},
      {0.10f, 0.90f, -0.10f},
      {-0.20f, 0.60f, 0.50f},
  }};
  static constexpr std::array<float, 3> kBias{0.20f, 0.05f, 0.10f};

  RgbImage out(he.height(), he.width());
  for (int y = 0; y < he.height(); ++y) {
    for (int x = 0; x < he.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        float v = kBias[c];
        for (int k = 0; k < 3; ++k) v += kMix[c][k] * he.at(y, x, k);
        out.at(y, x, c) = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

namespace {

RgbImage quantized(const RgbImage& image) {
  RgbImage out = image;
  for (float& v : out.data()) v = quantize(v) / 255.0f;
  return out;
}

RgbImage synth_he(int size, Rng& rng) {
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::uniform_real_distribution<float> speckle(-0.07f, 0.07f);

  const std::array<float, 3> background{0.93f + 0.04f * (unit(rng) - 0.5f), 0.78f, 0.86f};
  RgbImage image(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float shade = speckle(rng);
      for (int c = 0; c < 3; ++c) image.at(y, x, c) = background[c] + shade + 0.3f * speckle(rng);
    }
  }

  // Stroma, nuclei and dense nuclei.
  static constexpr std::array<std::array<float, 3>, 3> kPalette{{
      {0.86f, 0.47f, 0.66f},
      {0.44f, 0.24f, 0.60f},
      {0.30f, 0.14f, 0.44f},
  }};
  std::uniform_int_distribution<int> count(3, 8);
  std::uniform_int_distribution<int> pick(0, 2);
  std::uniform_real_distribution<float> axis(size / 16.0f, size / 5.0f);
  std::uniform_real_distribution<float> angle(0.0f, std::numbers::pi_v<float>);

  const int n_blobs = count(rng);
  for (int b = 0; b < n_blobs; ++b) {
    const float cy = unit(rng) * size;
    const float cx = unit(rng) * size;
    const float ay = axis(rng);
    const float ax = axis(rng);
    const float theta = angle(rng);
    const auto& color = kPalette[pick(rng)];
    const float jitter = 0.08f * (unit(rng) - 0.5f);
    const float ct = std::cos(theta);
    const float st = std::sin(theta);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const float dy = y - cy;
        const float dx = x - cx;
        const float u = (dx * ct + dy * st) / ax;
        const float v = (-dx * st + dy * ct) / ay;
        if (u * u + v * v > 1.0f) continue;
        const float shade = speckle(rng);
        for (int c = 0; c < 3; ++c) image.at(y, x, c) = color[c] + jitter + shade;
      }
    }
  }
  for (float& v : image.data()) v = std::clamp(v, 0.0f, 1.0f);
  return image;
}

}  // namespace

void make_toy_dataset(const fs::path& root, int n, int size, Rng& rng, Split split) {
  if (n < 1) throw PreconditionError("toy dataset needs n >= 1 (got " + std::to_string(n) + ")");
  if (size < 16) throw PreconditionError("toy dataset needs size >= 16 (got " + std::to_string(size) + ")");

  const fs::path base = root / std::string(to_string(split));
  std::error_code ec;
  fs::create_directories(base / "HE", ec);
  fs::create_directories(base / "IHC", ec);
  if (ec) throw IoFailure("cannot create " + base.string() + ": " + ec.message());

  const int digits = std::max(3, static_cast<int>(std::to_string(n - 1).size()));
  for (int i = 0; i < n; ++i) {
    std::string stem = std::to_string(i);
    stem.insert(0, static_cast<std::size_t>(digits) - stem.size(), '0');
    stem = "toy_" + stem;

    const RgbImage he = quantized(synth_he(size, rng));
    write_rgb(base / "HE" / (stem + ".png"), he);
    write_rgb(base / "IHC" / (stem + ".png"), oracle_recolor(he));
  }
}

}  // namespace mdcl
