#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gaide/geometry.hpp"
#include "gaide/random.hpp"

namespace gaide {

// A point in the joint space of the manipulator, radians.
struct Config {
  std::vector<double> q;

  Config() = default;
  explicit Config(std::vector<double> values) : q(std::move(values)) {}

  std::size_t size() const { return q.size(); }
  double& operator[](std::size_t i) { return q[i]; }
  double operator[](std::size_t i) const { return q[i]; }

  double dist(const Config& o) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) acc += (q[i] - o.q[i]) * (q[i] - o.q[i]);
    return std::sqrt(acc);
  }

  bool operator==(const Config& o) const { return q == o.q; }
};

inline Config lerp(const Config& a, const Config& b, double t) {
  Config c;
  c.q.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c.q[i] = a.q[i] + t * (b.q[i] - a.q[i]);
  return c;
}

struct JointLimits {
  double lower = -M_PI;
  double upper = M_PI;
};

// Revolute joint: rotation about `axis` after translating by `origin` from
// the parent link frame.
struct Joint {
  Vec3 axis{0, 0, 1};
  Vec3 origin{0, 0, 0};
  JointLimits limits;
};

struct CollisionSphere {
  Vec3 center;  // link frame, meters
  double radius = 0.0;
};

struct Link {
  std::vector<CollisionSphere> spheres;

  double surface_area() const {
    double acc = 0.0;
    for (const auto& s : spheres) acc += 4.0 * M_PI * s.radius * s.radius;
    return acc;
  }
};

struct KinematicChain {
  std::vector<Joint> joints;
  std::vector<Link> links;  // links[i] is rigidly attached to joints[i]
  Vec3 tip{0, 0, 0};        // end-effector point in the last link frame

  std::size_t dof() const { return joints.size(); }

  bool within_limits(const Config& q) const {
    if (q.size() != dof()) return false;
    for (std::size_t i = 0; i < dof(); ++i)
      if (q[i] < joints[i].limits.lower || q[i] > joints[i].limits.upper) return false;
    return true;
  }

  Config clamp_to_limits(Config q) const {
    for (std::size_t i = 0; i < dof(); ++i)
      q[i] = std::clamp(q[i], joints[i].limits.lower, joints[i].limits.upper);
    return q;
  }

  Config sample_config(Rng& rng) const {
    Config q;
    q.q.resize(dof());
    for (std::size_t i = 0; i < dof(); ++i)
      q[i] = rng.uniform(joints[i].limits.lower, joints[i].limits.upper);
    return q;
  }

  void validate() const {
    if (joints.empty()) throw std::invalid_argument("chain: needs at least one joint");
    if (links.size() != joints.size())
      throw std::invalid_argument("chain: " + std::to_string(links.size()) + " links for " +
                                  std::to_string(joints.size()) + " joints");
    for (const auto& j : joints) {
      if (std::fabs(j.axis.norm() - 1.0) > 1e-9)
        throw std::invalid_argument("chain: joint axis must be a unit vector");
      if (!(j.limits.lower < j.limits.upper))
        throw std::invalid_argument("chain: empty joint limit interval");
    }
    for (const auto& l : links)
      for (const auto& s : l.spheres)
        if (!(s.radius > 0.0))
          throw std::invalid_argument("chain: collision sphere radius must be positive");
  }
};

// Pose of every link for configuration q; link i depends on q[0..i] only.
inline std::vector<Pose> forward_kinematics(const KinematicChain& chain, const Config& q) {
  if (q.size() != chain.dof())
    throw std::domain_error("forward_kinematics: config has " + std::to_string(q.size()) +
                            " joints, chain has " + std::to_string(chain.dof()));
  if (!chain.within_limits(q))
    throw std::domain_error("forward_kinematics: configuration outside joint limits");
  std::vector<Pose> poses(chain.dof());
  Pose acc{Mat3::identity(), {0, 0, 0}};
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const Joint& j = chain.joints[i];
    acc = acc.compose({Mat3::axis_angle(j.axis, q[i]), j.origin});
    poses[i] = acc;
  }
  return poses;
}

inline Vec3 end_effector(const KinematicChain& chain, const Config& q) {
  return forward_kinematics(chain, q).back().apply(chain.tip);
}

struct SphereObstacle {
  Vec3 center;
  double radius = 0.0;
};

struct BoxObstacle {
  Vec3 min;
  Vec3 max;

  bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
           p.z <= max.z;
  }

  Vec3 clamp(const Vec3& p) const {
    return {std::clamp(p.x, min.x, max.x), std::clamp(p.y, min.y, max.y),
            std::clamp(p.z, min.z, max.z)};
  }

  double surface_area() const {
    const Vec3 e = max - min;
    return 2.0 * (e.x * e.y + e.y * e.z + e.z * e.x);
  }
};

using Obstacle = std::variant<SphereObstacle, BoxObstacle>;

struct Scene {
  std::vector<Obstacle> obstacles;
  BoxObstacle bounds;

  void validate() const {
    if (!(bounds.min.x <= bounds.max.x && bounds.min.y <= bounds.max.y &&
          bounds.min.z <= bounds.max.z))
      throw std::invalid_argument("scene: bounds min must not exceed max");
    for (const auto& obs : obstacles) {
      if (const auto* s = std::get_if<SphereObstacle>(&obs)) {
        if (!(s->radius > 0.0))
          throw std::invalid_argument("scene: sphere obstacle radius must be positive");
        if (!bounds.contains(s->center))
          throw std::invalid_argument("scene: obstacle outside workspace bounds");
      } else {
        const auto& b = std::get<BoxObstacle>(obs);
        if (!(b.min.x <= b.max.x && b.min.y <= b.max.y && b.min.z <= b.max.z))
          throw std::invalid_argument("scene: box obstacle min must not exceed max");
        if (!bounds.contains(b.min) || !bounds.contains(b.max))
          throw std::invalid_argument("scene: obstacle outside workspace bounds");
      }
    }
  }
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<int> link_tags;  // robot clouds only: source link per point
  bool obstacle_free = false;  // set when sampled from an empty scene

  std::size_t size() const { return points.size(); }
};

namespace detail {

// Largest-remainder allocation of n samples proportional to weights, with an
// optional floor of one sample per positive-weight bucket.
inline std::vector<std::size_t> allocate_proportional(const std::vector<double>& weights,
                                                      std::size_t n, bool floor_one) {
  const std::size_t k = weights.size();
  std::vector<std::size_t> counts(k, 0);
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (k == 0 || total <= 0.0) return counts;
  std::size_t assigned = 0;
  if (floor_one) {
    for (std::size_t i = 0; i < k; ++i)
      if (weights[i] > 0.0 && assigned < n) {
        counts[i] = 1;
        ++assigned;
      }
  }
  std::vector<std::pair<double, std::size_t>> remainders;
  for (std::size_t i = 0; i < k; ++i) {
    const double ideal = weights[i] / total * static_cast<double>(n);
    const auto extra = static_cast<std::size_t>(ideal);
    const std::size_t grant = std::min(extra > counts[i] ? extra - counts[i] : 0,
                                       n - assigned);
    counts[i] += grant;
    assigned += grant;
    remainders.emplace_back(ideal - std::floor(ideal), i);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t r = 0; assigned < n; r = (r + 1) % k) {
    counts[remainders[r].second] += 1;
    ++assigned;
  }
  return counts;
}

inline Vec3 sample_sphere_surface(const Vec3& center, double radius, Rng& rng) {
  const auto d = rng.unit_vector3();
  return center + Vec3{d[0], d[1], d[2]} * radius;
}

inline Vec3 sample_box_surface(const BoxObstacle& box, Rng& rng) {
  const Vec3 e = box.max - box.min;
  // face order: x-min, x-max, y-min, y-max, z-min, z-max
  const double areas[6] = {e.y * e.z, e.y * e.z, e.x * e.z, e.x * e.z, e.x * e.y, e.x * e.y};
  double total = 0.0;
  for (double a : areas) total += a;
  double pick = rng.uniform() * total;
  int face = 0;
  for (; face < 5; ++face) {
    if (pick < areas[face]) break;
    pick -= areas[face];
  }
  const double u = rng.uniform(), v = rng.uniform();
  switch (face) {
    case 0: return {box.min.x, box.min.y + u * e.y, box.min.z + v * e.z};
    case 1: return {box.max.x, box.min.y + u * e.y, box.min.z + v * e.z};
    case 2: return {box.min.x + u * e.x, box.min.y, box.min.z + v * e.z};
    case 3: return {box.min.x + u * e.x, box.max.y, box.min.z + v * e.z};
    case 4: return {box.min.x + u * e.x, box.min.y + v * e.y, box.min.z};
    default: return {box.min.x + u * e.x, box.min.y + v * e.y, box.max.z};
  }
}

}  // namespace detail

// N points drawn uniformly from the link sphere surfaces at configuration q,
// allocated across links proportional to surface area with a floor of one
// point per link. Each point carries its source link index.
inline PointCloud sample_robot_pointcloud(const KinematicChain& chain, const Config& q,
                                          std::size_t n_points, Rng& rng) {
  const auto poses = forward_kinematics(chain, q);
  std::vector<double> link_areas(chain.links.size());
  for (std::size_t i = 0; i < chain.links.size(); ++i)
    link_areas[i] = chain.links[i].surface_area();
  const auto per_link = detail::allocate_proportional(link_areas, n_points, true);

  PointCloud cloud;
  cloud.points.reserve(n_points);
  cloud.link_tags.reserve(n_points);
  for (std::size_t li = 0; li < chain.links.size(); ++li) {
    const Link& link = chain.links[li];
    std::vector<double> sphere_areas(link.spheres.size());
    for (std::size_t si = 0; si < link.spheres.size(); ++si)
      sphere_areas[si] = 4.0 * M_PI * link.spheres[si].radius * link.spheres[si].radius;
    const auto per_sphere = detail::allocate_proportional(sphere_areas, per_link[li], false);
    for (std::size_t si = 0; si < link.spheres.size(); ++si) {
      const auto& s = link.spheres[si];
      for (std::size_t k = 0; k < per_sphere[si]; ++k) {
        const Vec3 local = detail::sample_sphere_surface(s.center, s.radius, rng);
        cloud.points.push_back(poses[li].apply(local));
        cloud.link_tags.push_back(static_cast<int>(li));
      }
    }
  }
  return cloud;
}

// N points uniform over obstacle surfaces, allocated proportional to area.
// An empty scene yields an empty cloud flagged obstacle_free.
inline PointCloud sample_scene_pointcloud(const Scene& scene, std::size_t n_points, Rng& rng) {
  PointCloud cloud;
  if (scene.obstacles.empty()) {
    cloud.obstacle_free = true;
    return cloud;
  }
  std::vector<double> areas(scene.obstacles.size());
  for (std::size_t i = 0; i < scene.obstacles.size(); ++i)
    areas[i] = std::visit(
        [](const auto& o) {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, SphereObstacle>)
            return 4.0 * M_PI * o.radius * o.radius;
          else
            return o.surface_area();
        },
        scene.obstacles[i]);
  const auto per_obstacle = detail::allocate_proportional(areas, n_points, false);
  cloud.points.reserve(n_points);
  for (std::size_t i = 0; i < scene.obstacles.size(); ++i)
    for (std::size_t k = 0; k < per_obstacle[i]; ++k)
      cloud.points.push_back(std::visit(
          [&rng](const auto& o) {
            using T = std::decay_t<decltype(o)>;
            if constexpr (std::is_same_v<T, SphereObstacle>)
              return detail::sample_sphere_surface(o.center, o.radius, rng);
            else
              return detail::sample_box_surface(o, rng);
          },
          scene.obstacles[i]));
  return cloud;
}

// True iff any link sphere intersects any obstacle primitive, or two spheres
// on links separated by at least two joints intersect.
inline bool in_collision(const KinematicChain& chain, const Scene& scene, const Config& q) {
  const auto poses = forward_kinematics(chain, q);
  std::vector<std::pair<Vec3, double>> world;  // (center, radius) with link index below
  std::vector<int> world_link;
  for (std::size_t li = 0; li < chain.links.size(); ++li)
    for (const auto& s : chain.links[li].spheres) {
      world.emplace_back(poses[li].apply(s.center), s.radius);
      world_link.push_back(static_cast<int>(li));
    }

  for (const auto& [c, r] : world) {
    for (const auto& obs : scene.obstacles) {
      if (const auto* so = std::get_if<SphereObstacle>(&obs)) {
        const double rr = r + so->radius;
        if (c.dist2(so->center) < rr * rr) return true;
      } else {
        const auto& bo = std::get<BoxObstacle>(obs);
        if (c.dist2(bo.clamp(c)) < r * r) return true;
      }
    }
  }

  // self collision; adjacent links legitimately touch
  for (std::size_t a = 0; a < world.size(); ++a)
    for (std::size_t b = a + 1; b < world.size(); ++b) {
      if (std::abs(world_link[a] - world_link[b]) < 2) continue;
      const double rr = world[a].second + world[b].second;
      if (world[a].first.dist2(world[b].first) < rr * rr) return true;
    }
  return false;
}

// True iff every interpolated configuration at joint-space spacing at most
// `resolution` (endpoints included) is collision free.
inline bool edge_collision_free(const KinematicChain& chain, const Scene& scene,
                                const Config& qa, const Config& qb, double resolution) {
  if (!(resolution > 0.0))
    throw std::invalid_argument("edge_collision_free: resolution must be positive");
  const double length = qa.dist(qb);
  const auto steps = static_cast<std::size_t>(std::ceil(length / resolution));
  for (std::size_t k = 0; k <= steps; ++k) {
    // exact endpoints; interior points re-clamped (lerp may overshoot a limit
    // by one ulp when an endpoint sits on it)
    Config q;
    if (k == 0) q = qa;
    else if (k == steps) q = qb;
    else
      q = chain.clamp_to_limits(
          lerp(qa, qb, static_cast<double>(k) / static_cast<double>(steps)));
    if (in_collision(chain, scene, q)) return false;
  }
  return true;
}

struct PlanningProblem {
  KinematicChain chain;
  Scene scene;
  Config q_start;
  Config q_goal;

  void validate() const {
    chain.validate();
    scene.validate();
    if (q_start.size() != chain.dof() || q_goal.size() != chain.dof())
      throw std::invalid_argument("problem: endpoint dimension does not match chain DOF");
    if (in_collision(chain, scene, q_start))
      throw std::invalid_argument("problem: start configuration is in collision");
    if (in_collision(chain, scene, q_goal))
      throw std::invalid_argument("problem: goal configuration is in collision");
  }
};

// ---------------------------------------------------------------------------
// stock embodiments used by tests, data generation, and benchmarks
// ---------------------------------------------------------------------------

// Planar arm in the z = 0 plane: every joint rotates about +z, link i is a
// chain of spheres along its local x axis.
inline KinematicChain make_planar_arm(const std::vector<double>& link_lengths,
                                      double link_radius = 0.11,
                                      std::size_t spheres_per_link = 4) {
  KinematicChain chain;
  for (std::size_t i = 0; i < link_lengths.size(); ++i) {
    Joint j;
    j.axis = {0, 0, 1};
    j.origin = i == 0 ? Vec3{0, 0, 0} : Vec3{link_lengths[i - 1], 0, 0};
    j.limits = {-M_PI, M_PI};
    chain.joints.push_back(j);

    Link link;
    for (std::size_t k = 0; k < spheres_per_link; ++k) {
      const double frac = (static_cast<double>(k) + 0.5) / static_cast<double>(spheres_per_link);
      link.spheres.push_back({{frac * link_lengths[i], 0, 0}, link_radius});
    }
    chain.links.push_back(link);
  }
  chain.tip = {link_lengths.back(), 0, 0};
  chain.validate();
  return chain;
}

// Six-revolute chain with mixed axes, matching the DOF count of a tabletop
// manipulator at desk scale.
inline KinematicChain make_synthetic_6dof() {
  KinematicChain chain;
  const Vec3 axes[6] = {{0, 0, 1}, {0, 1, 0}, {0, 1, 0}, {1, 0, 0}, {0, 1, 0}, {1, 0, 0}};
  const Vec3 origins[6] = {{0, 0, 0.15}, {0, 0, 0.15}, {0.25, 0, 0},
                           {0.2, 0, 0},  {0.15, 0, 0}, {0.1, 0, 0}};
  const double reach[6] = {0.15, 0.25, 0.2, 0.15, 0.1, 0.08};
  for (int i = 0; i < 6; ++i) {
    Joint j;
    j.axis = axes[i];
    j.origin = origins[i];
    j.limits = {-2.9, 2.9};
    chain.joints.push_back(j);
    Link link;
    const int n_spheres = 2;
    for (int k = 0; k < n_spheres; ++k) {
      const double frac = (k + 0.5) / n_spheres;
      link.spheres.push_back({{frac * reach[i], 0, 0}, 0.05});
    }
    chain.links.push_back(link);
  }
  chain.tip = {0.08, 0, 0};
  chain.validate();
  return chain;
}

}  // namespace gaide
