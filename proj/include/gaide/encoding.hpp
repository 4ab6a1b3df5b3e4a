#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gaide/kinematics.hpp"
#include "gaide/nn.hpp"
#include "gaide/tensor.hpp"

namespace gaide {

// Greedy maximin downsampling: each chosen index maximizes the minimum
// distance to the already chosen set; the first index is given by the caller.
inline std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                                      std::size_t seed_index = 0) {
  const std::size_t n = cloud.size();
  if (k > n)
    throw std::invalid_argument("farthest_point_sample: asked for " + std::to_string(k) +
                                " of " + std::to_string(n) + " points");
  if (seed_index >= n)
    throw std::invalid_argument("farthest_point_sample: seed index out of range");
  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::size_t current = seed_index;
  for (std::size_t round = 0; round < k; ++round) {
    chosen.push_back(current);
    min_d2[current] = -1.0;  // never re-pick, even among coincident points
    std::size_t next = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_d2[i] >= 0.0)
        min_d2[i] = std::min(min_d2[i], cloud.points[i].dist2(cloud.points[current]));
      if (min_d2[i] > best) {
        best = min_d2[i];
        next = i;
      }
    }
    current = next;
  }
  return chosen;
}

// Per-centroid neighbor lists: indices within `radius`, nearest first,
// truncated to max_group. A centroid with no neighbors gets itself.
inline std::vector<std::vector<std::size_t>> ball_group(const PointCloud& cloud,
                                                        const std::vector<std::size_t>& centroids,
                                                        double radius, std::size_t max_group) {
  if (!(radius > 0.0)) throw std::invalid_argument("ball_group: radius must be positive");
  if (max_group < 1) throw std::invalid_argument("ball_group: max_group must be at least 1");
  std::vector<std::vector<std::size_t>> groups;
  groups.reserve(centroids.size());
  const double r2 = radius * radius;
  for (std::size_t c : centroids) {
    std::vector<std::pair<double, std::size_t>> in_ball;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const double d2 = cloud.points[i].dist2(cloud.points[c]);
      if (d2 <= r2) in_ball.emplace_back(d2, i);
    }
    std::sort(in_ball.begin(), in_ball.end());
    std::vector<std::size_t> group;
    for (std::size_t i = 0; i < std::min(max_group, in_ball.size()); ++i)
      group.push_back(in_ball[i].second);
    if (group.empty()) group.push_back(c);
    groups.push_back(std::move(group));
  }
  return groups;
}

// One set-abstraction stage: farthest-point sample K centroids, gather ball
// neighborhoods, embed centroid-relative coordinates pointwise, max-pool.
struct SetAbstractionLayer {
  std::size_t k = 16;
  double radius = 0.4;
  std::size_t max_group = 32;
  Mlp local_mlp;  // 3 -> H -> H

  SetAbstractionLayer() = default;

  SetAbstractionLayer(std::size_t k_, double radius_, std::size_t max_group_, std::size_t h,
                      Rng& rng)
      : k(k_), radius(radius_), max_group(max_group_), local_mlp({3, h, h}, rng) {}

  // Geometry-only precomputation; independent of the learnable weights, so
  // training can cache it per sample and inference per scene.
  struct Prepared {
    std::vector<Vec3> centroids;
    std::vector<int> centroid_link_tags;  // robot clouds only
    std::vector<Tensor> group_coords;     // per centroid: [group x 3] relative coords
  };

  Prepared prepare(const PointCloud& cloud, std::size_t seed_index = 0) const {
    if (cloud.size() < k)
      throw std::invalid_argument("set_abstraction: cloud with " +
                                  std::to_string(cloud.size()) + " points cannot yield " +
                                  std::to_string(k) + " centroids");
    const auto centroid_idx = farthest_point_sample(cloud, k, seed_index);
    const auto groups = ball_group(cloud, centroid_idx, radius, max_group);
    Prepared prep;
    prep.centroids.reserve(k);
    for (std::size_t ci = 0; ci < k; ++ci) {
      const Vec3 center = cloud.points[centroid_idx[ci]];
      prep.centroids.push_back(center);
      if (!cloud.link_tags.empty())
        prep.centroid_link_tags.push_back(cloud.link_tags[centroid_idx[ci]]);
      std::vector<double> rel;
      rel.reserve(groups[ci].size() * 3);
      for (std::size_t pi : groups[ci]) {
        const Vec3 d = cloud.points[pi] - center;
        rel.push_back(d.x);
        rel.push_back(d.y);
        rel.push_back(d.z);
      }
      prep.group_coords.push_back(Tensor::from({groups[ci].size(), 3}, std::move(rel)));
    }
    return prep;
  }

  // [K x H] features, differentiable with respect to the local MLP weights.
  Tensor forward(const Prepared& prep) const {
    std::vector<Tensor> pooled;
    pooled.reserve(prep.group_coords.size());
    for (const auto& coords : prep.group_coords)
      pooled.push_back(max_over_rows(local_mlp.forward(coords)));
    return concat_rows(pooled);
  }

  void collect(const std::string& prefix, NamedParams& out) const {
    local_mlp.collect(prefix + ".local_mlp", out);
  }
};

inline std::pair<SetAbstractionLayer::Prepared, Tensor> set_abstraction(
    const SetAbstractionLayer& layer, const PointCloud& cloud, std::size_t seed_index = 0) {
  auto prep = layer.prepare(cloud, seed_index);
  Tensor features = layer.forward(prep);
  return {std::move(prep), std::move(features)};
}

// Shared configuration embedder: the same MLP maps both the current and the
// goal configuration into the token width.
struct ConfigEmbedder {
  Mlp mlp;  // n -> H -> H -> H

  ConfigEmbedder() = default;

  ConfigEmbedder(std::size_t dof, std::size_t h, Rng& rng) : mlp({dof, h, h, h}, rng) {}

  Tensor forward(const Config& q) const {
    const std::size_t in = mlp.layers.front().w.dim(0);
    if (q.size() != in)
      throw std::invalid_argument("embed_config: config has " + std::to_string(q.size()) +
                                  " joints, embedder expects " + std::to_string(in));
    return mlp.forward(Tensor::from({1, in}, q.q));  // [1 x H]
  }

  void collect(const std::string& prefix, NamedParams& out) const {
    mlp.collect(prefix + ".mlp", out);
  }
};

// z_robot = z_r + z_t broadcast over rows + z_goal broadcast over rows
inline Tensor fuse_robot_tokens(const Tensor& z_r, const Tensor& z_t, const Tensor& z_goal) {
  detail::require_rank(z_r, 2, "fuse_robot_tokens");
  return add_rowvec(add_rowvec(z_r, z_t), z_goal);
}

// Standard sinusoidal positional encoding with the geometric frequency
// ladder on base 10000; [seq_len x H], H even.
inline Tensor sinusoidal_pe(std::size_t seq_len, std::size_t h) {
  if (h % 2 != 0)
    throw std::invalid_argument("sinusoidal_pe: width must be even, got " + std::to_string(h));
  Tensor pe = Tensor::zeros({seq_len, h});
  for (std::size_t pos = 0; pos < seq_len; ++pos)
    for (std::size_t i = 0; i < h / 2; ++i) {
      const double freq =
          std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(h));
      pe.data()[pos * h + 2 * i] = std::sin(static_cast<double>(pos) * freq);
      pe.data()[pos * h + 2 * i + 1] = std::cos(static_cast<double>(pos) * freq);
    }
  return pe;
}

}  // namespace gaide
