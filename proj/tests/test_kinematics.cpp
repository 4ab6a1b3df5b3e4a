#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gaide/kinematics.hpp"
#include "gaide/scene_io.hpp"

using namespace gaide;

namespace {

// Independent FK oracle: 4x4 homogeneous matrices with rotations built from
// quaternions instead of Rodrigues.
struct Mat4 {
  double m[16] = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  static Mat4 translation(const Vec3& t) {
    Mat4 r;
    r.m[3] = t.x;
    r.m[7] = t.y;
    r.m[11] = t.z;
    return r;
  }

  static Mat4 rotation(const Vec3& axis, double angle) {
    const double hw = std::cos(angle / 2.0), hs = std::sin(angle / 2.0);
    const double qx = axis.x * hs, qy = axis.y * hs, qz = axis.z * hs, qw = hw;
    Mat4 r;
    r.m[0] = 1 - 2 * (qy * qy + qz * qz);
    r.m[1] = 2 * (qx * qy - qz * qw);
    r.m[2] = 2 * (qx * qz + qy * qw);
    r.m[4] = 2 * (qx * qy + qz * qw);
    r.m[5] = 1 - 2 * (qx * qx + qz * qz);
    r.m[6] = 2 * (qy * qz - qx * qw);
    r.m[8] = 2 * (qx * qz - qy * qw);
    r.m[9] = 2 * (qy * qz + qx * qw);
    r.m[10] = 1 - 2 * (qx * qx + qy * qy);
    return r;
  }

  Mat4 operator*(const Mat4& o) const {
    Mat4 r;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += m[i * 4 + k] * o.m[k * 4 + j];
        r.m[i * 4 + j] = acc;
      }
    return r;
  }

  Vec3 apply(const Vec3& p) const {
    return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
            m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
            m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
  }
};

Vec3 oracle_end_effector(const KinematicChain& chain, const Config& q) {
  Mat4 acc;
  for (std::size_t i = 0; i < chain.dof(); ++i)
    acc = acc * Mat4::translation(chain.joints[i].origin) *
          Mat4::rotation(chain.joints[i].axis, q[i]);
  return acc.apply(chain.tip);
}

bool point_inside_obstacle(const Scene& scene, const Vec3& p) {
  for (const auto& obs : scene.obstacles) {
    if (const auto* s = std::get_if<SphereObstacle>(&obs)) {
      if (p.dist(s->center) < s->radius) return true;
    } else if (std::get<BoxObstacle>(obs).contains(p)) {
      return true;
    }
  }
  return false;
}

// Dense surface-point containment oracle for the collision checker: a
// configuration is flagged iff some densely sampled link surface point lies
// inside an obstacle, some obstacle surface point lies inside a link sphere,
// or surface points of two far-apart links interpenetrate.
bool oracle_in_collision(const KinematicChain& chain, const Scene& scene, const Config& q,
                         Rng& rng, int points_per_sphere = 600) {
  const auto poses = forward_kinematics(chain, q);
  std::vector<std::pair<Vec3, double>> world;
  std::vector<int> link_of;
  for (std::size_t li = 0; li < chain.links.size(); ++li)
    for (const auto& s : chain.links[li].spheres) {
      world.emplace_back(poses[li].apply(s.center), s.radius);
      link_of.push_back(static_cast<int>(li));
    }
  auto inside_far_link_sphere = [&](const Vec3& p, int from_link) {
    for (std::size_t i = 0; i < world.size(); ++i) {
      if (from_link >= 0 && std::abs(link_of[i] - from_link) < 2) continue;
      if (p.dist(world[i].first) < world[i].second) return true;
    }
    return false;
  };
  for (std::size_t i = 0; i < world.size(); ++i)
    for (int k = 0; k < points_per_sphere; ++k) {
      const auto d = rng.unit_vector3();
      const Vec3 p = world[i].first + Vec3{d[0], d[1], d[2]} * world[i].second;
      if (point_inside_obstacle(scene, p)) return true;
      if (inside_far_link_sphere(p, link_of[i])) return true;
    }
  for (const auto& obs : scene.obstacles)
    for (int k = 0; k < points_per_sphere; ++k) {
      Vec3 p;
      if (const auto* s = std::get_if<SphereObstacle>(&obs)) {
        const auto d = rng.unit_vector3();
        p = s->center + Vec3{d[0], d[1], d[2]} * s->radius;
      } else {
        p = detail::sample_box_surface(std::get<BoxObstacle>(obs), rng);
      }
      if (inside_far_link_sphere(p, -1)) return true;
    }
  return false;
}

Scene empty_scene(double extent = 5.0) {
  Scene s;
  s.bounds = {{-extent, -extent, -extent}, {extent, extent, extent}};
  return s;
}

}  // namespace

TEST_CASE("fk at zero configuration reproduces home poses") {
  auto chain = make_planar_arm({1.0, 1.0});
  const auto poses = forward_kinematics(chain, Config({0.0, 0.0}));
  CHECK(poses[0].t.dist({0, 0, 0}) < 1e-15);
  CHECK(poses[1].t.dist({1, 0, 0}) < 1e-15);
  CHECK(end_effector(chain, Config({0.0, 0.0})).dist({2, 0, 0}) < 1e-15);
}

TEST_CASE("fk matches hand trigonometry on a 2-link arm") {
  auto chain = make_planar_arm({1.0, 1.0});
  const Vec3 ee = end_effector(chain, Config({M_PI / 2.0, 0.0}));
  CHECK(ee.dist({0, 2, 0}) < 1e-12);
}

TEST_CASE("fk matches the homogeneous-matrix oracle on random configs") {
  Rng rng(101);
  for (const auto& chain : {make_planar_arm({1.0, 0.8, 0.6}), make_synthetic_6dof()}) {
    for (int trial = 0; trial < 50; ++trial) {
      const Config q = chain.sample_config(rng);
      CHECK(end_effector(chain, q).dist(oracle_end_effector(chain, q)) < 1e-12);
    }
  }
}

TEST_CASE("fk rejects out-of-limit configurations") {
  auto chain = make_planar_arm({1.0, 1.0});
  CHECK_THROWS_AS(forward_kinematics(chain, Config({4.0, 0.0})), std::domain_error);
}

TEST_CASE("link pose depends only on the joints at or before it") {
  auto chain = make_planar_arm({1.0, 0.8, 0.6});
  Rng rng(7);
  const Config q = chain.sample_config(rng);
  Config q2 = q;
  q2[2] = rng.uniform(-3.0, 3.0);
  const auto pa = forward_kinematics(chain, q);
  const auto pb = forward_kinematics(chain, q2);
  CHECK(pa[0].t.dist(pb[0].t) == 0.0);
  CHECK(pa[1].t.dist(pb[1].t) == 0.0);
}

TEST_CASE("robot point cloud lies on transformed sphere surfaces") {
  auto chain = make_planar_arm({1.0, 1.0});
  Rng rng(5);
  const Config q = chain.sample_config(rng);
  const auto poses = forward_kinematics(chain, q);
  const auto cloud = sample_robot_pointcloud(chain, q, 64, rng);
  REQUIRE(cloud.size() == 64);
  REQUIRE(cloud.link_tags.size() == 64);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double best = 1e9;
    for (std::size_t li = 0; li < chain.links.size(); ++li)
      for (const auto& s : chain.links[li].spheres)
        best = std::min(best,
                        std::fabs(cloud.points[i].dist(poses[li].apply(s.center)) - s.radius));
    CHECK(best < 1e-9);
  }
}

TEST_CASE("every link contributes points when the budget allows") {
  auto chain = make_planar_arm({1.0, 0.7, 0.5});
  Rng rng(6);
  const Config q = chain.sample_config(rng);
  const auto cloud = sample_robot_pointcloud(chain, q, 4 * 3, rng);
  std::vector<int> counts(chain.links.size(), 0);
  for (int tag : cloud.link_tags) counts[static_cast<std::size_t>(tag)]++;
  for (int c : counts) CHECK(c >= 1);
}

TEST_CASE("robot cloud sampling is deterministic per seed") {
  auto chain = make_planar_arm({1.0, 1.0});
  const Config q{{0.3, -0.2}};
  Rng r1(42), r2(42);
  const auto a = sample_robot_pointcloud(chain, q, 128, r1);
  const auto b = sample_robot_pointcloud(chain, q, 128, r2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.points[i].dist(b.points[i]) == 0.0);
  CHECK(a.link_tags == b.link_tags);
}

TEST_CASE("scene cloud from a unit sphere sits on its surface") {
  Scene scene = empty_scene();
  scene.obstacles.push_back(SphereObstacle{{0, 0, 0}, 1.0});
  Rng rng(8);
  const auto cloud = sample_scene_pointcloud(scene, 200, rng);
  REQUIRE(cloud.size() == 200);
  CHECK_FALSE(cloud.obstacle_free);
  for (const auto& p : cloud.points) CHECK(std::fabs(p.norm() - 1.0) < 1e-9);
}

TEST_CASE("scene cloud from a box sits on its faces") {
  Scene scene = empty_scene();
  scene.obstacles.push_back(BoxObstacle{{0, 0, 0}, {1, 1, 1}});
  Rng rng(9);
  const auto cloud = sample_scene_pointcloud(scene, 200, rng);
  for (const auto& p : cloud.points) {
    const bool on_face = p.x == 0.0 || p.x == 1.0 || p.y == 0.0 || p.y == 1.0 || p.z == 0.0 ||
                         p.z == 1.0;
    CHECK(on_face);
    CHECK((p.x >= 0 && p.x <= 1 && p.y >= 0 && p.y <= 1 && p.z >= 0 && p.z <= 1));
  }
}

TEST_CASE("scene cloud allocation follows surface area") {
  Scene scene = empty_scene(10.0);
  scene.obstacles.push_back(SphereObstacle{{-3, 0, 0}, 1.0});
  scene.obstacles.push_back(SphereObstacle{{3, 0, 0}, 2.0});
  Rng rng(10);
  const auto cloud = sample_scene_pointcloud(scene, 2000, rng);
  std::size_t near_small = 0, near_big = 0;
  for (const auto& p : cloud.points)
    (p.x < 0 ? near_small : near_big)++;
  const double ratio = static_cast<double>(near_big) / static_cast<double>(near_small);
  CHECK(ratio == Catch::Approx(4.0).epsilon(0.10));
}

TEST_CASE("empty scene yields an obstacle-free flagged cloud") {
  Rng rng(11);
  const auto cloud = sample_scene_pointcloud(empty_scene(), 100, rng);
  CHECK(cloud.obstacle_free);
  CHECK(cloud.size() == 0);
}

TEST_CASE("no collision in an empty scene without self overlap") {
  auto chain = make_planar_arm({1.0, 1.0});
  CHECK_FALSE(in_collision(chain, empty_scene(), Config({0.3, 0.4})));
}

TEST_CASE("obstacle centered on a link sphere collides") {
  auto chain = make_planar_arm({1.0, 1.0});
  const Config q{{0.0, 0.0}};
  const auto poses = forward_kinematics(chain, q);
  Scene scene = empty_scene();
  scene.obstacles.push_back(
      SphereObstacle{poses[0].apply(chain.links[0].spheres[0].center), 0.05});
  CHECK(in_collision(chain, scene, q));
}

TEST_CASE("collision checker agrees with the surface containment oracle") {
  auto chain = make_planar_arm({1.0, 1.0});
  Scene scene = empty_scene();
  scene.obstacles.push_back(SphereObstacle{{1.3, 0.6, 0}, 0.35});
  scene.obstacles.push_back(BoxObstacle{{-1.2, -1.4, -0.2}, {-0.4, -0.6, 0.2}});
  Rng rng(12);
  int agree = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const Config q = chain.sample_config(rng);
    const bool fast = in_collision(chain, scene, q);
    const bool oracle = oracle_in_collision(chain, scene, q, rng);
    if (fast == oracle) ++agree;
  }
  CHECK(static_cast<double>(agree) / trials >= 0.999);
}

TEST_CASE("collision result is invariant to obstacle order") {
  auto chain = make_planar_arm({1.0, 1.0});
  Scene scene = empty_scene();
  scene.obstacles.push_back(SphereObstacle{{1.3, 0.6, 0}, 0.35});
  scene.obstacles.push_back(BoxObstacle{{-1.2, -1.4, -0.2}, {-0.4, -0.6, 0.2}});
  Scene reversed = scene;
  std::reverse(reversed.obstacles.begin(), reversed.obstacles.end());
  Rng rng(13);
  for (int t = 0; t < 200; ++t) {
    const Config q = chain.sample_config(rng);
    CHECK(in_collision(chain, scene, q) == in_collision(chain, reversed, q));
  }
}

TEST_CASE("degenerate edge at a free configuration is free") {
  auto chain = make_planar_arm({1.0, 1.0});
  const Config q{{0.2, 0.1}};
  CHECK(edge_collision_free(chain, empty_scene(), q, q, 0.05));
}

TEST_CASE("edge with a blocked midpoint is rejected") {
  auto chain = make_planar_arm({1.0, 1.0});
  const Config qa{{-0.4, 0.0}};
  const Config qb{{0.4, 0.0}};
  const Config mid = lerp(qa, qb, 0.5);
  Scene scene = empty_scene();
  scene.obstacles.push_back(SphereObstacle{end_effector(chain, mid), 0.15});
  REQUIRE_FALSE(in_collision(chain, scene, qa));
  REQUIRE_FALSE(in_collision(chain, scene, qb));
  CHECK_FALSE(edge_collision_free(chain, scene, qa, qb, 0.05));
}

TEST_CASE("edge checks agree with a 10x finer resolution almost always") {
  auto chain = make_planar_arm({1.0, 1.0});
  Scene scene = empty_scene();
  scene.obstacles.push_back(SphereObstacle{{1.2, 0.9, 0}, 0.3});
  scene.obstacles.push_back(SphereObstacle{{-0.9, -1.1, 0}, 0.4});
  Rng rng(14);
  int agree = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    Config qa = chain.sample_config(rng);
    Config qb = chain.sample_config(rng);
    if (edge_collision_free(chain, scene, qa, qb, 0.05) ==
        edge_collision_free(chain, scene, qa, qb, 0.005))
      ++agree;
  }
  CHECK(static_cast<double>(agree) / trials >= 0.99);
}

TEST_CASE("edge check is symmetric") {
  auto chain = make_planar_arm({1.0, 1.0});
  Scene scene = empty_scene();
  scene.obstacles.push_back(SphereObstacle{{1.1, 0.4, 0}, 0.3});
  Rng rng(15);
  for (int t = 0; t < 100; ++t) {
    Config qa = chain.sample_config(rng);
    Config qb = chain.sample_config(rng);
    CHECK(edge_collision_free(chain, scene, qa, qb, 0.05) ==
          edge_collision_free(chain, scene, qb, qa, 0.05));
  }
}

TEST_CASE("planning problem validation requires free endpoints") {
  PlanningProblem prob;
  prob.chain = make_planar_arm({1.0, 1.0});
  prob.scene = empty_scene();
  prob.scene.obstacles.push_back(SphereObstacle{end_effector(prob.chain, Config({0, 0})), 0.2});
  prob.q_start = Config({0.0, 0.0});
  prob.q_goal = Config({1.0, 1.0});
  CHECK_THROWS_WITH(prob.validate(), Catch::Matchers::ContainsSubstring("start"));
}

TEST_CASE("scene document round-trips through json") {
  SceneDocument doc;
  doc.chain = make_planar_arm({1.0, 0.8});
  doc.scene = empty_scene(3.0);
  doc.scene.obstacles.push_back(SphereObstacle{{1.0, 0.5, 0}, 0.25});
  doc.scene.obstacles.push_back(BoxObstacle{{-1, -1, -0.1}, {-0.5, -0.5, 0.1}});

  const auto path = std::filesystem::temp_directory_path() / "gaide_scene_roundtrip.json";
  save_scene_file(doc, path.string());
  const auto loaded = load_scene_file(path.string());
  CHECK(scene_document_to_json(loaded) == scene_document_to_json(doc));
  std::filesystem::remove(path);
}

TEST_CASE("scene document rejects unknown fields and bad versions") {
  SceneDocument doc;
  doc.chain = make_planar_arm({1.0});
  doc.scene = empty_scene(2.0);
  json j = scene_document_to_json(doc);

  json with_extra = j;
  with_extra["surprise"] = 1;
  CHECK_THROWS_WITH(scene_document_from_json(with_extra),
                    Catch::Matchers::ContainsSubstring("unknown field"));

  json bad_version = j;
  bad_version["version"] = 2;
  CHECK_THROWS_WITH(scene_document_from_json(bad_version),
                    Catch::Matchers::ContainsSubstring("version"));

  json nested_extra = j;
  nested_extra["chain"]["joints"][0]["weird"] = true;
  CHECK_THROWS_WITH(scene_document_from_json(nested_extra),
                    Catch::Matchers::ContainsSubstring("unknown field"));
}

TEST_CASE("scene validation rejects obstacles outside bounds") {
  Scene scene;
  scene.bounds = {{-1, -1, -1}, {1, 1, 1}};
  scene.obstacles.push_back(SphereObstacle{{5, 0, 0}, 0.1});
  CHECK_THROWS_WITH(scene.validate(), Catch::Matchers::ContainsSubstring("outside"));
}

TEST_CASE("chain hash distinguishes chains and is stable") {
  const auto a1 = chain_hash(make_planar_arm({1.0, 1.0}));
  const auto a2 = chain_hash(make_planar_arm({1.0, 1.0}));
  const auto b = chain_hash(make_planar_arm({1.0, 0.9}));
  CHECK(a1 == a2);
  CHECK(a1 != b);
}
