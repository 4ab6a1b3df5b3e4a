#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "gaide/scene_gen.hpp"
#include "gaide/training.hpp"

using namespace gaide;

namespace {

Scene empty_scene(double extent = 5.0) {
  Scene s;
  s.bounds = {{-extent, -extent, -extent}, {extent, extent, extent}};
  return s;
}

GaideHyper small_hyper() {
  GaideHyper h;
  h.dof = 2;
  h.h = 16;
  h.heads = 2;
  h.enc_layers = 2;
  h.dec_layers = 1;
  h.dropout_p = 0.1;
  h.k_r = 4;
  h.k_w = 4;
  h.n_r = 32;
  h.n_w = 32;
  h.sa_radius_robot = 0.6;
  h.sa_radius_scene = 0.8;
  h.sa_max_group = 8;
  return h;
}

}  // namespace

TEST_CASE("mse of a perfect prediction is zero") {
  Rng rng(1);
  Tensor t = Tensor::uniform({4, 2}, rng, -1, 1);
  CHECK(mse_loss(t, t).value() == 0.0);
}

TEST_CASE("mse of a unit residual is one") {
  Tensor pred = Tensor::from({1, 3}, {1, 0, 0});
  Tensor target = Tensor::zeros({1, 3});
  CHECK(mse_loss(pred, target).value() == 1.0);
}

TEST_CASE("mse matches an independent scalar loop") {
  Rng rng(2);
  Tensor pred = Tensor::uniform({8, 3}, rng, -1, 1);
  Tensor target = Tensor::uniform({8, 3}, rng, -1, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = pred.data()[i] - target.data()[i];
    acc += d * d;
  }
  acc /= 8.0;
  CHECK(std::fabs(mse_loss(pred, target).value() - acc) < 1e-12);
}

TEST_CASE("mse rejects shape mismatches") {
  CHECK_THROWS_WITH(mse_loss(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})),
                    Catch::Matchers::ContainsSubstring("[2x3]") &&
                        Catch::Matchers::ContainsSubstring("[3x2]"));
}

TEST_CASE("oracle on a free straight line is near the geodesic") {
  PlanningProblem p;
  p.chain = make_planar_arm({1.0, 1.0});
  p.scene = empty_scene();
  p.q_start = Config({-1.2, 0.3});
  p.q_goal = Config({0.9, -0.8});
  OracleParams params;
  Rng rng(3);
  const auto rec = generate_oracle_path(p, "scene", params, rng);
  REQUIRE(rec.has_value());
  const double straight = p.q_start.dist(p.q_goal);
  CHECK(path_cost(rec->configs) <= 1.05 * straight);
  CHECK(rec->configs.front() == p.q_start);
  CHECK(rec->configs.back() == p.q_goal);
}

TEST_CASE("oracle on a degenerate problem returns a single configuration") {
  PlanningProblem p;
  p.chain = make_planar_arm({1.0, 1.0});
  p.scene = empty_scene();
  p.q_start = Config({0.5, 0.5});
  p.q_goal = p.q_start;
  OracleParams params;
  Rng rng(4);
  const auto rec = generate_oracle_path(p, "scene", params, rng);
  REQUIRE(rec.has_value());
  CHECK(rec->configs.size() == 1);
  CHECK(path_cost(rec->configs) == 0.0);
}

TEST_CASE("oracle paths respect the per-step magnitude bound and re-validate") {
  const auto doc = make_family_scene(SceneFamily::kGap, 11);
  OracleParams params;
  Rng rng(5);
  int produced = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto pair = sample_problem_pair(doc, rng, 1.0, false);
    REQUIRE(pair.has_value());
    PlanningProblem p{doc.chain, doc.scene, pair->first, pair->second};
    const auto rec = generate_oracle_path(p, "scene", params, rng);
    if (!rec) continue;
    ++produced;
    for (std::size_t i = 1; i < rec->configs.size(); ++i) {
      CHECK(rec->configs[i - 1].dist(rec->configs[i]) <= params.max_delta + 1e-12);
      CHECK(edge_collision_free(p.chain, p.scene, rec->configs[i - 1], rec->configs[i],
                                params.resolution));
    }
    // reconstruction: summed deltas reproduce the endpoint difference
    std::vector<double> acc(p.chain.dof(), 0.0);
    for (std::size_t i = 1; i < rec->configs.size(); ++i)
      for (std::size_t d = 0; d < acc.size(); ++d)
        acc[d] += rec->configs[i][d] - rec->configs[i - 1][d];
    for (std::size_t d = 0; d < acc.size(); ++d)
      CHECK(std::fabs(acc[d] - (p.q_goal[d] - p.q_start[d])) < 1e-12);
  }
  CHECK(produced >= 8);
}

TEST_CASE("grid oracle beats or matches birrt with shortcutting") {
  // one blocking obstacle between start and goal
  PlanningProblem p;
  p.chain = make_planar_arm({1.0, 1.0});
  p.scene = empty_scene();
  p.scene.obstacles.push_back(SphereObstacle{{1.55, 0.4, 0}, 0.3});
  p.q_start = Config({-0.2, 0.1});
  p.q_goal = Config({0.8, -0.3});
  p.validate();
  REQUIRE_FALSE(edge_collision_free(p.chain, p.scene, p.q_start, p.q_goal, 0.05));

  OracleParams params;
  Rng grid_rng(6);
  const auto grid_rec = generate_oracle_path(p, "scene", params, grid_rng);
  REQUIRE(grid_rec.has_value());
  const double grid_cost = path_cost(grid_rec->configs);

  int grid_wins = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(static_cast<std::uint64_t>(700 + seed));
    const auto birrt_path = detail::birrt_shortcut_path(p, params, rng);
    if (!birrt_path) continue;
    if (grid_cost <= path_cost(*birrt_path) + 1e-9) ++grid_wins;
  }
  CHECK(grid_wins >= 95);
}

TEST_CASE("dataset files round-trip") {
  Dataset ds;
  ds.chain_hash = 0xdeadbeef;
  ds.master_seed = 42;
  ds.scenes_dir = "scenes";
  PathRecord rec;
  rec.scene_id = "gap_000.json";
  rec.cloud_seed = 7;
  rec.configs = {Config({0.0, 0.1}), Config({0.2, 0.3}), Config({0.4, 0.2})};
  ds.records.push_back(rec);

  const auto path = std::filesystem::temp_directory_path() / "gaide_dataset_test.jsonl";
  save_dataset(ds, path.string());
  const Dataset loaded = load_dataset(path.string());
  CHECK(loaded.chain_hash == ds.chain_hash);
  CHECK(loaded.master_seed == ds.master_seed);
  CHECK(loaded.scenes_dir == ds.scenes_dir);
  REQUIRE(loaded.records.size() == 1);
  CHECK(loaded.records[0].scene_id == rec.scene_id);
  CHECK(loaded.records[0].cloud_seed == rec.cloud_seed);
  CHECK(loaded.records[0].configs == rec.configs);
  std::filesystem::remove(path);
}

TEST_CASE("single-sample training memorizes the target") {
  const auto doc = make_family_scene(SceneFamily::kOpen, 3);
  SceneMap scenes{{"s", doc.scene}};
  PathRecord rec;
  rec.scene_id = "s";
  rec.cloud_seed = 99;
  rec.configs = {Config({-0.5, 0.2}), Config({-0.25, 0.05})};
  Rng init_rng(7);
  GaideModel model = GaideModel::init(small_hyper(), init_rng);
  model.hyper.dropout_p = 0.0;  // pure memorization
  TrainParams params;
  params.steps = 500;
  params.batch_size = 1;
  params.lr = 3e-3;
  params.val_fraction = 0.0;
  params.val_every = 0;
  params.checkpoint_every = 0;
  Rng rng(8);
  const auto report = train(model, doc.chain, {rec}, scenes, params, rng);
  REQUIRE_FALSE(report.diverged);
  REQUIRE(report.loss_curve.size() == 500);
  CHECK(report.loss_curve.back() < 1e-3);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto doc = make_family_scene(SceneFamily::kOpen, 4);
  SceneMap scenes{{"s", doc.scene}};
  PathRecord rec;
  rec.scene_id = "s";
  rec.cloud_seed = 1;
  rec.configs = {Config({0.0, 0.0}), Config({0.2, -0.1})};
  Rng init_rng(9);
  GaideModel model = GaideModel::init(small_hyper(), init_rng);
  const NamedParams before_params = model.named_parameters();
  std::vector<std::vector<double>> before;
  for (const auto& [name, p] : before_params) before.push_back(p.data());
  TrainParams params;
  params.steps = 10;
  params.batch_size = 2;
  params.lr = 0.0;
  params.val_fraction = 0.0;
  params.val_every = 0;
  params.checkpoint_every = 0;
  Rng rng(10);
  train(model, doc.chain, {rec}, scenes, params, rng);
  const NamedParams after_params = model.named_parameters();
  for (std::size_t i = 0; i < after_params.size(); ++i)
    CHECK(after_params[i].second.data() == before[i]);
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
  const auto doc = make_family_scene(SceneFamily::kClutter, 5);
  SceneMap scenes{{"s", doc.scene}};
  OracleParams oracle;
  Rng gen_rng(11);
  std::vector<PathRecord> records;
  while (records.size() < 3) {
    const auto pair = sample_problem_pair(doc, gen_rng, 1.0, false);
    REQUIRE(pair.has_value());
    PlanningProblem p{doc.chain, doc.scene, pair->first, pair->second};
    auto rec = generate_oracle_path(p, "s", oracle, gen_rng);
    if (rec) records.push_back(std::move(*rec));
  }

  auto run = [&](std::uint64_t seed) {
    Rng init_rng(12);
    GaideModel model = GaideModel::init(small_hyper(), init_rng);
    TrainParams params;
    params.steps = 20;
    params.batch_size = 2;
    params.val_fraction = 0.0;
    params.val_every = 0;
    params.checkpoint_every = 0;
    Rng rng(seed);
    return train(model, doc.chain, records, scenes, params, rng).loss_curve;
  };
  CHECK(run(77) == run(77));
}

TEST_CASE("divergence aborts and restores the last good snapshot") {
  const auto doc = make_family_scene(SceneFamily::kOpen, 6);
  SceneMap scenes{{"s", doc.scene}};
  PathRecord rec;
  rec.scene_id = "s";
  rec.cloud_seed = 2;
  rec.configs = {Config({0.0, 0.0}), Config({0.2, -0.1})};
  Rng init_rng(13);
  GaideModel model = GaideModel::init(small_hyper(), init_rng);
  // poison one weight so the forward pass produces non-finite values
  model.output_head.b.data()[0] = std::numeric_limits<double>::quiet_NaN();
  TrainParams params;
  params.steps = 5;
  params.batch_size = 1;
  params.val_fraction = 0.0;
  params.val_every = 0;
  Rng rng(14);
  const auto report = train(model, doc.chain, {rec}, scenes, params, rng);
  CHECK(report.diverged);
  CHECK(report.steps_completed == 0);
}
