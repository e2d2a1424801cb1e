#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mdcl {

/// Every stochastic step in the library draws from a caller-owned stream of this type.
using Rng = std::mt19937_64;

enum class StainDomain { kHE, kIhcReal, kIhcVirtual };

std::string_view to_string(StainDomain domain);

/// Dense RGB image, channels-last, values in [0,1].
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int height, int width, float fill = 0.0f);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  bool empty() const noexcept { return pixels_.empty(); }

  float& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }

  std::span<float> data() noexcept { return pixels_; }
  std::span<const float> data() const noexcept { return pixels_; }

  /// Copy of the window [top, top+h) x [left, left+w).
  RgbImage crop(int top, int left, int h, int w) const;

  bool operator==(const RgbImage&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3 + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

struct StainedImage {
  RgbImage pixels;
  StainDomain domain = StainDomain::kHE;
  std::string source_id;
  // Offset of this image inside the frame it was cropped from.
  int origin_y = 0;
  int origin_x = 0;

  int height() const noexcept { return pixels.height(); }
  int width() const noexcept { return pixels.width(); }
};

/// Structurally matching, pixel-misaligned H&E / IHC pair.
struct MatchedPair {
  StainedImage he;
  StainedImage ihc_gt;
  std::string pair_id;
};

enum class Split { kTrain, kTest };

std::string_view to_string(Split split);

// Image I/O. 8-bit RGB is decoded as value / 255; writing rounds to the nearest level.
RgbImage read_rgb(const std::filesystem::path& path);
void write_rgb(const std::filesystem::path& path, const RgbImage& image);

/// True for the file extensions the dataset layout accepts (png, jpg, jpeg).
bool is_image_file(const std::filesystem::path& path);

/// Lists image files of a directory sorted by stem; throws on duplicate stems.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Reads `<root>/<split>/HE/*` and `<root>/<split>/IHC/*`, pairing files by stem.
std::vector<MatchedPair> scan_dataset(const std::filesystem::path& root, Split split);

/// Crops both images of the pair at one shared random offset.
MatchedPair random_crop_pair(const MatchedPair& pair, int size, Rng& rng);

/// Fixed per-pixel H&E -> IHC color remap used to build the toy dataset.
///
///   out = clamp(R * in + b, 0, 1),   in/out as column RGB vectors,
///
///   R = [ 0.20  0.90 -0.30 ]      b = [ 0.20 ]
///       [ 0.10  0.90 -0.10 ]          [ 0.05 ]
///       [-0.20  0.60  0.50 ]          [ 0.10 ]
///
/// Applied to a decoded HE toy image and re-quantized to 8 bits it reproduces
/// the stored IHC image exactly.
RgbImage oracle_recolor(const RgbImage& he);

/// Writes `n` synthetic pairs of `size` x `size` under `<root>/<split>/{HE,IHC}`.
/// HE images are colored ellipses over a speckled pink background; IHC images
/// are `oracle_recolor` of the quantized HE image.
void make_toy_dataset(const std::filesystem::path& root, int n, int size, Rng& rng,
                      Split split = Split::kTrain);

}  // namespace mdcl
