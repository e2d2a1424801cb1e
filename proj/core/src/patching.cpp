#include "mdcl/patching.hpp"

#include <algorithm>
#include <numeric>

#include "mdcl/errors.hpp"

namespace mdcl {

std::vector<std::int64_t> PatchLocations::rows_of_tap(int tap) const {
  std::vector<std::int64_t> rows;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].tap == tap) rows.push_back(static_cast<std::int64_t>(i));
  }
  return rows;
}

std::vector<std::int64_t> PatchLocations::sites_of_tap(int tap) const {
  std::vector<std::int64_t> sites;
  for (const auto& e : entries) {
    if (e.tap == tap) sites.push_back(e.index);
  }
  return sites;
}

int PatchLocations::n_taps() const {
  int n = 0;
  for (const auto& e : entries) n = std::max(n, e.tap + 1);
  return n;
}

torch::Tensor EmbeddingSet::tap_rows(int tap) const {
  const auto rows = locations->rows_of_tap(tap);
  auto index = torch::tensor(rows, torch::kInt64);
  return vectors.index_select(0, index);
}

std::vector<TapShape> tap_shapes(const GeneratorNetImpl& g, int height, int width) {
  std::vector<TapShape> shapes;
  for (const auto& tap : g.taps()) shapes.push_back({height / tap.downsample, width / tap.downsample});
  return shapes;
}

PatchLocations sample_locations(const std::vector<TapShape>& shapes, int m, Rng& rng) {
  if (m < 1) throw PreconditionError("patch count must be at least 1");
  long long total = 0;
  for (const auto& s : shapes) total += s.sites();
  if (total < m) {
    throw NotEnoughLocations("requested " + std::to_string(m) + " patches but only " + std::to_string(total) +
                             " sites are available");
  }

  std::vector<int> quota(shapes.size());
  int assigned = 0;
  for (std::size_t t = 0; t < shapes.size(); ++t) {
    quota[t] = static_cast<int>(static_cast<long long>(m) * shapes[t].sites() / total);
    assigned += quota[t];
  }
  std::vector<std::size_t> by_size(shapes.size());
  std::iota(by_size.begin(), by_size.end(), 0);
  std::stable_sort(by_size.begin(), by_size.end(),
                   [&](std::size_t a, std::size_t b) { return shapes[a].sites() > shapes[b].sites(); });
  int remainder = m - assigned;
  for (std::size_t t : by_size) {
    const int room = shapes[t].sites() - quota[t];
    const int take = std::min(room, remainder);
    quota[t] += take;
    remainder -= take;
    if (remainder == 0) break;
  }

  PatchLocations locs;
  locs.m_total = m;
  locs.entries.reserve(m);
  std::vector<int> pool;
  for (std::size_t t = 0; t < shapes.size(); ++t) {
    pool.resize(shapes[t].sites());
    std::iota(pool.begin(), pool.end(), 0);
    // Partial Fisher-Yates: the first quota[t] slots become a uniform sample without replacement.
    for (int i = 0; i < quota[t]; ++i) {
      std::uniform_int_distribution<int> pick(i, static_cast<int>(pool.size()) - 1);
      std::swap(pool[i], pool[pick(rng)]);
      locs.entries.push_back({static_cast<int>(t), pool[i]});
    }
  }
  return locs;
}

namespace {

torch::Tensor gather_sites(const torch::Tensor& feature_map, const std::vector<std::int64_t>& sites) {
  // 1 x C x H x W -> M x C
  auto flat = feature_map.flatten(2).squeeze(0);
  auto index = torch::tensor(sites, torch::kInt64);
  return flat.index_select(1, index).t();
}

EmbeddingSet embed(GeneratorNet& g, ProjectorNet& p, const torch::Tensor& image,
                   const std::shared_ptr<const PatchLocations>& locs, EmbeddingDomain domain) {
  const auto features = g->encode(image);
  if (locs->n_taps() > static_cast<int>(features.size())) {
    throw ShapeError("patch locations reference a tap the generator does not expose");
  }
  std::vector<torch::Tensor> blocks;
  std::vector<std::int64_t> order;
  for (int tap = 0; tap < static_cast<int>(features.size()); ++tap) {
    const auto rows = locs->rows_of_tap(tap);
    if (rows.empty()) continue;
    const auto sites = locs->sites_of_tap(tap);
    const auto n_sites = features[tap].size(2) * features[tap].size(3);
    for (auto s : sites) {
      if (s < 0 || s >= n_sites) throw ShapeError("patch site out of range for tap " + std::to_string(tap));
    }
    blocks.push_back(p->forward(gather_sites(features[tap], sites), tap));
    order.insert(order.end(), rows.begin(), rows.end());
  }
  if (static_cast<int>(order.size()) != static_cast<int>(locs->entries.size())) {
    throw ShapeError("patch locations reference unknown taps");
  }
  // blocks are stacked tap by tap; move every row back to its position in `entries`.
  std::vector<std::int64_t> inverse(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) inverse[order[k]] = static_cast<std::int64_t>(k);
  auto stacked = torch::cat(blocks, 0);
  return EmbeddingSet{stacked.index_select(0, torch::tensor(inverse, torch::kInt64)), domain, locs};
}

}  // namespace

PatchSets build_sets(GeneratorNet& g, ProjectorNet& p, const torch::Tensor& he, const torch::Tensor& virtual_ihc,
                     const torch::Tensor& ihc_gt, std::shared_ptr<const PatchLocations> locs,
                     BuildOptions options) {
  if (!locs || locs->entries.empty()) throw PreconditionError("empty patch locations");
  if (he.sizes() != virtual_ihc.sizes() || he.sizes() != ihc_gt.sizes()) {
    throw ShapeError("anchor and positive images must share one shape");
  }
  PatchSets sets;
  sets.anchors = embed(g, p, virtual_ihc, locs, EmbeddingDomain::kAnchorVirtual);
  sets.positives_he = embed(g, p, he, locs, EmbeddingDomain::kPositiveHE);
  if (options.detach_gt_branch) {
    torch::NoGradGuard no_grad;
    sets.positives_gt = embed(g, p, ihc_gt, locs, EmbeddingDomain::kPositiveGT);
  } else {
    sets.positives_gt = embed(g, p, ihc_gt, locs, EmbeddingDomain::kPositiveGT);
  }
  return sets;
}

PatchSets build_sets(GeneratorNet& g, ProjectorNet& p, const StainedImage& he, const StainedImage& virtual_ihc,
                     const StainedImage& ihc_gt, std::shared_ptr<const PatchLocations> locs,
                     BuildOptions options) {
  return build_sets(g, p, to_model_tensor(he), to_model_tensor(virtual_ihc), to_model_tensor(ihc_gt),
                    std::move(locs), options);
}

}  // namespace mdcl
