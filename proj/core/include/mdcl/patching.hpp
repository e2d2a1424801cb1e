#pragma once

#include <memory>
#include <vector>

#include <torch/torch.h>

#include "mdcl/dataset.hpp"
#include "mdcl/networks.hpp"

namespace mdcl {

struct TapShape {
  int height = 0;
  int width = 0;

  int sites() const noexcept { return height * width; }
};

struct PatchSite {
  int tap = 0;
  int index = 0;  // row-major flat index into the tap's feature map

  bool operator==(const PatchSite&) const = default;
};

/// Sampled patch sites. `sample_locations` emits them grouped by ascending
/// tap, but consumers accept any row order.
struct PatchLocations {
  std::vector<PatchSite> entries;
  int m_total = 0;

  /// Positions in `entries` that belong to `tap`, ascending.
  std::vector<std::int64_t> rows_of_tap(int tap) const;
  /// Flat site indices of `tap`, in row order.
  std::vector<std::int64_t> sites_of_tap(int tap) const;
  /// One past the largest tap id present.
  int n_taps() const;
};

enum class EmbeddingDomain { kAnchorVirtual, kPositiveHE, kPositiveGT };

/// M x D unit-norm embeddings; row i belongs to `locations->entries[i]`.
struct EmbeddingSet {
  torch::Tensor vectors;
  EmbeddingDomain domain = EmbeddingDomain::kAnchorVirtual;
  std::shared_ptr<const PatchLocations> locations;

  int rows() const { return static_cast<int>(vectors.size(0)); }
  /// Rows of a single tap, in location order (keeps autograd history).
  torch::Tensor tap_rows(int tap) const;
};

std::vector<TapShape> tap_shapes(const GeneratorNetImpl& g, int height, int width);

/// Draws `m` distinct sites. Each tap receives floor(m * sites_t / total) sites;
/// the remainder goes to the tap with the most sites (spilling to the next
/// largest when a tap is full).
PatchLocations sample_locations(const std::vector<TapShape>& shapes, int m, Rng& rng);

struct PatchSets {
  EmbeddingSet anchors;
  EmbeddingSet positives_he;
  EmbeddingSet positives_gt;
};

struct BuildOptions {
  /// The ground-truth branch is a constant target unless this is false.
  bool detach_gt_branch = true;
};

/// Embeds the same sites of the virtual IHC (anchors), the input HE and the
/// real IHC through the generator encoder and the projector heads.
/// Images are model tensors (1x3xHxW, [-1,1]) of identical size.
PatchSets build_sets(GeneratorNet& g, ProjectorNet& p, const torch::Tensor& he, const torch::Tensor& virtual_ihc,
                     const torch::Tensor& ihc_gt, std::shared_ptr<const PatchLocations> locs,
                     BuildOptions options = {});

PatchSets build_sets(GeneratorNet& g, ProjectorNet& p, const StainedImage& he, const StainedImage& virtual_ihc,
                     const StainedImage& ihc_gt, std::shared_ptr<const PatchLocations> locs,
                     BuildOptions options = {});

}  // namespace mdcl
