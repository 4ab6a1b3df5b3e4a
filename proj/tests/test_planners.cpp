#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gaide/planners.hpp"

using namespace gaide;

namespace {

Scene empty_scene(double extent = 5.0) {
  Scene s;
  s.bounds = {{-extent, -extent, -extent}, {extent, extent, extent}};
  return s;
}

PlanningProblem open_problem() {
  PlanningProblem p;
  p.chain = make_planar_arm({1.0, 1.0});
  p.scene = empty_scene();
  p.q_start = Config({-1.0, 0.5});
  p.q_goal = Config({1.2, -0.8});
  return p;
}

// Two obstacles pinching the first joint at +-pi/2 split the configuration
// space into components that cannot be bridged within the joint-limit box.
PlanningProblem walled_problem() {
  PlanningProblem p;
  p.chain = make_planar_arm({1.0, 1.0});
  p.scene = empty_scene();
  p.scene.obstacles.push_back(SphereObstacle{{0, 0.5, 0}, 0.2});
  p.scene.obstacles.push_back(SphereObstacle{{0, -0.5, 0}, 0.2});
  p.q_start = Config({0.0, 0.0});
  p.q_goal = Config({3.1, 0.0});
  p.validate();
  return p;
}

PlanningProblem gap_problem() {
  PlanningProblem p;
  p.chain = make_planar_arm({1.0, 1.0});
  p.scene = empty_scene();
  p.scene.obstacles.push_back(SphereObstacle{{0, 1.4, 0}, 0.25});
  p.scene.obstacles.push_back(SphereObstacle{{0.9, 1.1, 0}, 0.25});
  p.q_start = Config({-0.3, 0.4});
  p.q_goal = Config({2.2, -0.5});
  p.validate();
  return p;
}

GaideModel tiny_model(std::uint64_t seed = 1) {
  GaideHyper h;
  h.dof = 2;
  h.h = 8;
  h.heads = 2;
  h.enc_layers = 2;
  h.dec_layers = 1;
  h.k_r = 3;
  h.k_w = 3;
  h.n_r = 24;
  h.n_w = 24;
  h.sa_radius_robot = 0.6;
  h.sa_radius_scene = 0.8;
  h.sa_max_group = 8;
  Rng rng(seed);
  return GaideModel::init(h, rng);
}

}  // namespace

TEST_CASE("birrt on a trivial problem succeeds immediately") {
  PlanningProblem p = open_problem();
  p.q_goal = p.q_start;
  Rng rng(1);
  const auto result = birrt_plan(p, {}, rng);
  CHECK(result.success);
  CHECK(result.cost == 0.0);
}

TEST_CASE("birrt succeeds on all seeded runs in an empty scene") {
  const PlanningProblem p = open_problem();
  ClassicalParams params;
  params.time_budget = 5.0;
  for (int seed = 0; seed < 50; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    const auto result = birrt_plan(p, params, rng);
    CHECK(result.success);
    CHECK(validate_result(p, result, params.resolution));
  }
}

TEST_CASE("birrt fails cleanly on a walled-off goal") {
  const PlanningProblem p = walled_problem();
  ClassicalParams params;
  params.time_budget = 0.5;
  Rng rng(3);
  const auto result = birrt_plan(p, params, rng);
  CHECK_FALSE(result.success);
  CHECK_FALSE(result.path.has_value());
  CHECK(result.stats.samples_drawn > 0);
  CHECK(result.planning_time >= params.time_budget);
}

TEST_CASE("birrt is reproducible for a fixed seed") {
  const PlanningProblem p = gap_problem();
  ClassicalParams params;
  params.time_budget = 2.0;
  Rng r1(7), r2(7);
  const auto a = birrt_plan(p, params, r1);
  const auto b = birrt_plan(p, params, r2);
  REQUIRE(a.success == b.success);
  CHECK(a.cost == b.cost);
  CHECK(a.planning_time == b.planning_time);
  CHECK(a.stats.collision_checks == b.stats.collision_checks);
}

TEST_CASE("rrt-star best-cost trace is non-increasing and cost re-computes") {
  const PlanningProblem p = gap_problem();
  ClassicalParams params;
  params.time_budget = 1.0;
  for (int seed = 0; seed < 5; ++seed) {
    Rng rng(static_cast<std::uint64_t>(100 + seed));
    std::vector<double> trace;
    const auto result = rrt_star_plan(p, params, rng, &trace);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1]);
    if (result.success) {
      CHECK(std::fabs(path_cost(*result.path) - result.cost) < 1e-9);
      CHECK(validate_result(p, result, params.resolution));
    }
  }
}

TEST_CASE("rrt-star approaches the straight line in an empty scene") {
  const PlanningProblem p = open_problem();
  const double straight = p.q_start.dist(p.q_goal);
  ClassicalParams params;
  params.time_budget = 2.0;
  int good = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    const auto result = rrt_star_plan(p, params, rng);
    if (result.success && result.cost <= 1.05 * straight) ++good;
  }
  CHECK(good >= 18);
}

TEST_CASE("informed sample degenerates to the segment when c_best equals c_min") {
  const auto chain = make_planar_arm({1.0, 1.0});
  const Config a{{-1.0, 0.2}};
  const Config b{{0.8, -0.6}};
  const double c_min = a.dist(b);
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Config s = informed_sample(a, b, c_min, chain, rng);
    // distance from s to the segment [a, b]
    double t_num = 0.0, t_den = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
      t_num += (s[j] - a[j]) * (b[j] - a[j]);
      t_den += (b[j] - a[j]) * (b[j] - a[j]);
    }
    const double t = std::clamp(t_num / t_den, 0.0, 1.0);
    CHECK(s.dist(lerp(a, b, t)) < 1e-9);
  }
}

TEST_CASE("informed samples satisfy the focal-sum inequality") {
  const auto chain = make_planar_arm({1.0, 1.0});
  const Config a{{-1.0, 0.2}};
  const Config b{{0.8, -0.6}};
  const double c_best = a.dist(b) * 1.4;
  Rng rng(6);
  for (int i = 0; i < 2000; ++i) {
    const Config s = informed_sample(a, b, c_best, chain, rng);
    CHECK(s.dist(a) + s.dist(b) <= c_best + 1e-9);
  }
}

TEST_CASE("informed sampling is uniform over the ellipse") {
  const auto chain = make_planar_arm({1.0, 1.0});
  const Config a{{-1.0, 0.0}};
  const Config b{{1.0, 0.0}};
  const double c_min = 2.0, c_best = 2.5;
  const double r0 = c_best / 2.0;
  const double r1 = std::sqrt(c_best * c_best - c_min * c_min) / 2.0;
  Rng rng(7);
  // 5 radial (area-equal) x 4 angular bins in the pulled-back unit disk
  std::vector<int> bins(20, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Config s = informed_sample(a, b, c_best, chain, rng);
    const double u0 = s[0] / r0;          // transverse axis is x here
    const double u1 = s[1] / r1;
    const double rr = u0 * u0 + u1 * u1;
    REQUIRE(rr <= 1.0 + 1e-9);
    const int radial = std::min(4, static_cast<int>(rr * 5.0));
    const double theta = std::atan2(u1, u0);
    const int angular = std::min(3, static_cast<int>((theta + M_PI) / (M_PI / 2.0)));
    bins[radial * 4 + angular]++;
  }
  const double expected = n / 20.0;
  double stat = 0.0;
  for (int c : bins) stat += (c - expected) * (c - expected) / expected;
  // chi-square critical value at p = 0.01 with 19 degrees of freedom
  CHECK(stat < 36.191);
}

TEST_CASE("informed sample rejects c_best below the focal distance") {
  const auto chain = make_planar_arm({1.0, 1.0});
  Rng rng(8);
  CHECK_THROWS_AS(informed_sample(Config({0, 0}), Config({1, 1}), 0.5, chain, rng),
                  std::invalid_argument);
}

TEST_CASE("informed rrt-star still plans and validates") {
  const PlanningProblem p = gap_problem();
  ClassicalParams params;
  params.time_budget = 2.0;
  Rng rng(9);
  const auto result = irrt_star_plan(p, params, rng);
  if (result.success) CHECK(validate_result(p, result, params.resolution));
}

TEST_CASE("neural planner connects directly reachable endpoints at iteration one") {
  PlanningProblem p = open_problem();
  p.scene.obstacles.push_back(SphereObstacle{{3.0, 3.0, 0}, 0.3});  // out of the way
  const GaideModel model = tiny_model();
  NeuralParams params;
  params.steps = 50;
  Rng rng(10);
  const auto result = neural_plan(p, model, params, rng);
  CHECK(result.success);
  CHECK(result.stats.samples_drawn == 1);
  CHECK(validate_result(p, result, params.resolution));
}

TEST_CASE("neural planner reports failure with populated stats on hard scenes") {
  const PlanningProblem p = walled_problem();
  const GaideModel model = tiny_model();
  NeuralParams params;
  params.steps = 8;
  Rng rng(11);
  const auto result = neural_plan(p, model, params, rng);
  CHECK_FALSE(result.success);
  CHECK(result.stats.samples_drawn == 8);
  CHECK(result.stats.model_queries >= 8);
  CHECK(result.stats.collision_checks > 0);
  CHECK(result.planning_time > 0.0);
}

TEST_CASE("neural planner is deterministic with zero dropout and a fixed seed") {
  const PlanningProblem p = gap_problem();
  GaideModel model = tiny_model();
  model.hyper.dropout_p = 0.0;
  NeuralParams params;
  params.steps = 30;
  Rng r1(12), r2(12);
  const auto a = neural_plan(p, model, params, r1);
  const auto b = neural_plan(p, model, params, r2);
  CHECK(a.success == b.success);
  CHECK(a.cost == b.cost);
  CHECK(a.planning_time == b.planning_time);
}

TEST_CASE("neural planner rejects a model of the wrong DOF") {
  PlanningProblem p;
  p.chain = make_planar_arm({1.0, 0.8, 0.6});
  p.scene = empty_scene();
  p.q_start = Config({0, 0, 0});
  p.q_goal = Config({1, 0, 0});
  const GaideModel model = tiny_model();
  NeuralParams params;
  Rng rng(13);
  CHECK_THROWS_WITH(neural_plan(p, model, params, rng),
                    Catch::Matchers::ContainsSubstring("DOF") ||
                        Catch::Matchers::ContainsSubstring("2-DOF"));
}

TEST_CASE("two-node paths pass through contraction unchanged") {
  const auto chain = make_planar_arm({1.0, 1.0});
  const Scene scene = empty_scene();
  const std::vector<Config> path{Config({0, 0}), Config({1, 1})};
  CHECK(path_contraction(path, chain, scene, 0.05) == path);
}

TEST_CASE("collinear redundant waypoints collapse to the endpoints") {
  const auto chain = make_planar_arm({1.0, 1.0});
  const Scene scene = empty_scene();
  std::vector<Config> path;
  for (double t = 0.0; t <= 1.0001; t += 0.125) path.push_back(lerp(Config({-1, -1}), Config({1, 1}), t));
  const auto contracted = path_contraction(path, chain, scene, 0.05);
  REQUIRE(contracted.size() == 2);
  CHECK(contracted.front() == path.front());
  CHECK(contracted.back() == path.back());
}

TEST_CASE("contraction never raises cost and keeps feasible paths feasible") {
  PlanningProblem p = gap_problem();
  Rng rng(14);
  ClassicalParams params;
  params.time_budget = 2.0;
  for (int trial = 0; trial < 10; ++trial) {
    Rng seed_rng(static_cast<std::uint64_t>(200 + trial));
    const auto result = birrt_plan(p, params, seed_rng);
    if (!result.success) continue;
    const auto contracted = path_contraction(*result.path, p.chain, p.scene, params.resolution);
    CHECK(path_cost(contracted) <= path_cost(*result.path) + 1e-12);
    for (std::size_t i = 1; i < contracted.size(); ++i)
      CHECK(edge_collision_free(p.chain, p.scene, contracted[i - 1], contracted[i],
                                params.resolution));
    CHECK(contracted.front() == result.path->front());
    CHECK(contracted.back() == result.path->back());
    // idempotence
    CHECK(path_contraction(contracted, p.chain, p.scene, params.resolution) == contracted);
  }
}

TEST_CASE("replanning returns clean paths unchanged") {
  PlanningProblem p = open_problem();
  const std::vector<Config> path{p.q_start, lerp(p.q_start, p.q_goal, 0.5), p.q_goal};
  NeuralParams params;
  Rng rng(15);
  const auto repaired = replanning(path, nullptr, nullptr, p, params, rng);
  REQUIRE(repaired.has_value());
  CHECK(*repaired == path);
}

TEST_CASE("replanning repairs a single colliding edge around a feasible detour") {
  PlanningProblem p = gap_problem();
  // find free endpoints whose straight edge collides
  Rng search(16);
  Config a, b;
  bool found = false;
  for (int tries = 0; tries < 2000 && !found; ++tries) {
    a = p.chain.sample_config(search);
    b = p.chain.sample_config(search);
    found = !in_collision(p.chain, p.scene, a) && !in_collision(p.chain, p.scene, b) &&
            !edge_collision_free(p.chain, p.scene, a, b, 0.05);
  }
  REQUIRE(found);
  p.q_start = a;
  p.q_goal = b;
  const std::vector<Config> path{a, b};
  NeuralParams params;
  Rng rng(17);
  const auto repaired = replanning(path, nullptr, nullptr, p, params, rng);
  REQUIRE(repaired.has_value());
  CHECK(repaired->front() == a);
  CHECK(repaired->back() == b);
  for (std::size_t i = 1; i < repaired->size(); ++i)
    CHECK(edge_collision_free(p.chain, p.scene, (*repaired)[i - 1], (*repaired)[i], 0.05));
}

TEST_CASE("replanning propagates failure for a walled segment") {
  const PlanningProblem p = walled_problem();
  const std::vector<Config> path{p.q_start, p.q_goal};
  NeuralParams params;
  params.replan_birrt_budget = 0.3;
  Rng rng(17);
  CHECK_FALSE(replanning(path, nullptr, nullptr, p, params, rng).has_value());
}

TEST_CASE("every successful path from every planner re-validates") {
  const PlanningProblem problems[] = {open_problem(), gap_problem()};
  ClassicalParams cparams;
  cparams.time_budget = 1.0;
  NeuralParams nparams;
  nparams.steps = 60;
  const GaideModel model = tiny_model(2);
  for (const auto& p : problems) {
    for (int seed = 0; seed < 5; ++seed) {
      Rng r1(static_cast<std::uint64_t>(seed));
      Rng r2(static_cast<std::uint64_t>(seed));
      Rng r3(static_cast<std::uint64_t>(seed));
      Rng r4(static_cast<std::uint64_t>(seed));
      CHECK(validate_result(p, birrt_plan(p, cparams, r1), cparams.resolution));
      CHECK(validate_result(p, rrt_star_plan(p, cparams, r2), cparams.resolution));
      CHECK(validate_result(p, irrt_star_plan(p, cparams, r3), cparams.resolution));
      CHECK(validate_result(p, neural_plan(p, model, nparams, r4), nparams.resolution));
    }
  }
}
