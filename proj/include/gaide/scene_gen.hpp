#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gaide/kinematics.hpp"
#include "gaide/random.hpp"
#include "gaide/scene_io.hpp"

namespace gaide {

// Desk-scale analogues of the four held-out environment families, built
// around the 2-DOF planar arm: an open tabletop, a narrow gap through an
// obstacle arc, a cluttered bin, and shelf-like slots.
enum class SceneFamily { kOpen, kGap, kClutter, kShelf };

inline const char* scene_family_name(SceneFamily f) {
  switch (f) {
    case SceneFamily::kOpen: return "open";
    case SceneFamily::kGap: return "gap";
    case SceneFamily::kClutter: return "clutter";
    case SceneFamily::kShelf: return "shelf";
  }
  return "?";
}

inline std::optional<SceneFamily> scene_family_from_name(const std::string& name) {
  for (SceneFamily f :
       {SceneFamily::kOpen, SceneFamily::kGap, SceneFamily::kClutter, SceneFamily::kShelf})
    if (name == scene_family_name(f)) return f;
  return std::nullopt;
}

inline SceneDocument make_family_scene(SceneFamily family, std::uint64_t seed) {
  Rng rng(Rng::derive(0xabcdef12, seed));
  SceneDocument doc;
  doc.chain = make_planar_arm({1.0, 1.0});
  doc.scene.bounds = {{-2.4, -2.4, -0.4}, {2.4, 2.4, 0.4}};

  auto polar_sphere = [&](double radius_from_base, double angle, double r) {
    return SphereObstacle{{radius_from_base * std::cos(angle),
                           radius_from_base * std::sin(angle), 0.0},
                          r};
  };

  switch (family) {
    case SceneFamily::kOpen: {
      const int count = 2 + static_cast<int>(rng.index(2));
      for (int i = 0; i < count; ++i)
        doc.scene.obstacles.push_back(polar_sphere(rng.uniform(1.3, 2.0),
                                                   rng.uniform(-M_PI, M_PI),
                                                   rng.uniform(0.15, 0.25)));
      break;
    }
    case SceneFamily::kGap: {
      // an arc of touching spheres with one passable gap
      const double arc_center = rng.uniform(-M_PI, M_PI);
      const double arc_radius = rng.uniform(1.25, 1.45);
      const double sphere_r = 0.22;
      const double spacing = 2.0 * std::asin(sphere_r / arc_radius) * 1.6;
      const int half = 4;
      const int gap_slot = static_cast<int>(rng.index(3)) - 1;  // keep the gap near the middle
      for (int i = -half; i <= half; ++i) {
        if (i == gap_slot || i == gap_slot + 1) continue;  // a ~2-slot doorway
        doc.scene.obstacles.push_back(
            polar_sphere(arc_radius, arc_center + i * spacing, sphere_r));
      }
      break;
    }
    case SceneFamily::kClutter: {
      const int count = 5 + static_cast<int>(rng.index(3));
      for (int i = 0; i < count; ++i)
        doc.scene.obstacles.push_back(polar_sphere(rng.uniform(0.7, 2.0),
                                                   rng.uniform(-M_PI, M_PI),
                                                   rng.uniform(0.12, 0.2)));
      break;
    }
    case SceneFamily::kShelf: {
      // two radial walls with slots, axis-aligned boxes
      const double x_wall = rng.uniform(1.0, 1.3);
      const double slot_half = rng.uniform(0.28, 0.4);
      const double slot_center = rng.uniform(-0.4, 0.4);
      doc.scene.obstacles.push_back(
          BoxObstacle{{x_wall, slot_center + slot_half, -0.2}, {x_wall + 0.2, 2.2, 0.2}});
      doc.scene.obstacles.push_back(
          BoxObstacle{{x_wall, -2.2, -0.2}, {x_wall + 0.2, slot_center - slot_half, 0.2}});
      const double y_wall = rng.uniform(1.0, 1.3);
      doc.scene.obstacles.push_back(
          BoxObstacle{{-2.2, -y_wall - 0.2, -0.2}, {-0.5, -y_wall, 0.2}});
      break;
    }
  }
  doc.scene.validate();
  return doc;
}

// Start/goal pair with free endpoints, a minimum joint-space separation, and
// optionally a blocked straight-line connection (the interesting case for an
// informed sampler).
inline std::optional<std::pair<Config, Config>> sample_problem_pair(const SceneDocument& doc,
                                                                    Rng& rng, double min_dist,
                                                                    bool require_blocked,
                                                                    double resolution = 0.05,
                                                                    int max_tries = 400) {
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    Config a = doc.chain.sample_config(rng);
    Config b = doc.chain.sample_config(rng);
    if (a.dist(b) < min_dist) continue;
    if (in_collision(doc.chain, doc.scene, a) || in_collision(doc.chain, doc.scene, b)) continue;
    if (require_blocked &&
        edge_collision_free(doc.chain, doc.scene, a, b, resolution))
      continue;
    return std::make_pair(a, b);
  }
  return std::nullopt;
}

}  // namespace gaide
