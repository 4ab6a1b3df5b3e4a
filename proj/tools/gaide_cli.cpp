// gaide: neural informed sampling for sampling-based motion planning.
// Subcommands: gen-scenes, gen-data, train, plan, bench, report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gaide/bench.hpp"
#include "gaide/model.hpp"
#include "gaide/planners.hpp"
#include "gaide/scene_gen.hpp"
#include "gaide/scene_io.hpp"
#include "gaide/training.hpp"

namespace fs = std::filesystem;
using namespace gaide;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Config parse_config_csv(const std::string& s) {
  Config q;
  for (const auto& field : split_csv(s)) q.q.push_back(std::stod(field));
  if (q.q.empty()) throw CLI::ValidationError("expected a comma-separated list of joint angles");
  return q;
}

std::vector<std::string> list_scene_files(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json" && entry.path().filename().string().rfind("suite", 0) != 0)
      files.push_back(entry.path().filename().string());
  std::sort(files.begin(), files.end());
  return files;
}

MaskSchedule parse_schedule(const std::string& name) {
  if (name == "interleaved") return MaskSchedule::kInterleaved;
  if (name == "none") return MaskSchedule::kNoneMask;
  if (name == "all") return MaskSchedule::kAllMask;
  throw CLI::ValidationError("schedule must be one of interleaved|none|all");
}

// --------------------------------------------------------------------------

int cmd_gen_scenes(const std::string& out_dir, const std::string& families_csv,
                   std::size_t per_family, std::uint64_t seed, std::size_t problems_per_scene,
                   std::size_t trials, const std::string& suite_name) {
  fs::create_directories(out_dir);
  std::vector<SceneFamily> families;
  for (const auto& name : split_csv(families_csv)) {
    const auto f = scene_family_from_name(name);
    if (!f) {
      std::cerr << "unknown scene family: " << name << "\n";
      return 1;
    }
    families.push_back(*f);
  }

  BenchmarkSuite suite;
  suite.name = suite_name;
  suite.scenes_dir = ".";  // scene files sit beside the suite json
  suite.master_seed = seed;
  suite.trials_per_problem = trials;

  std::size_t written = 0;
  for (const auto family : families) {
    for (std::size_t i = 0; i < per_family; ++i) {
      const std::uint64_t scene_seed = Rng::derive(seed, written);
      const SceneDocument doc = make_family_scene(family, scene_seed);
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%03zu.json", scene_family_name(family), i);
      save_scene_file(doc, (fs::path(out_dir) / name).string());

      SuiteScene scene;
      scene.file = name;
      scene.task = scene_family_name(family);
      Rng prob_rng(Rng::derive(scene_seed, 0xb10cced));
      for (std::size_t p = 0; p < problems_per_scene; ++p) {
        // half the problems require a blocked straight line, the informed
        // sampler's interesting case
        const bool blocked = p % 2 == 0;
        auto pair = sample_problem_pair(doc, prob_rng, 1.0, blocked);
        if (!pair) pair = sample_problem_pair(doc, prob_rng, 1.0, false);
        if (!pair) continue;
        scene.problems.push_back({pair->first, pair->second});
      }
      suite.scenes.push_back(std::move(scene));
      ++written;
    }
  }
  const auto suite_path = fs::path(out_dir) / "suite.json";
  save_suite_file(suite, suite_path.string());
  std::cout << "wrote " << written << " scenes and " << suite_path.string() << "\n";
  return 0;
}

int cmd_gen_data(const std::string& scenes_dir, std::size_t paths_per_scene,
                 const std::string& out_file, std::uint64_t seed, std::size_t workers) {
  const auto files = list_scene_files(scenes_dir);
  if (files.empty()) {
    std::cerr << "no scene files under " << scenes_dir << "\n";
    return 1;
  }
  std::vector<SceneDocument> docs(files.size());
  for (std::size_t i = 0; i < files.size(); ++i)
    docs[i] = load_scene_file((fs::path(scenes_dir) / files[i]).string());
  const std::uint64_t hash0 = chain_hash(docs[0].chain);
  for (std::size_t i = 1; i < docs.size(); ++i)
    if (chain_hash(docs[i].chain) != hash0) {
      std::cerr << "scene " << files[i] << " embeds a different chain\n";
      return 1;
    }

  OracleParams oracle;
  std::vector<std::vector<PathRecord>> per_scene(files.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failures{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t si = next.fetch_add(1);
      if (si >= files.size()) return;
      Rng rng(Rng::derive(seed, si));
      std::size_t produced = 0, attempts = 0;
      while (produced < paths_per_scene && attempts < paths_per_scene * 8) {
        ++attempts;
        const bool blocked = attempts % 2 == 0;
        auto pair = sample_problem_pair(docs[si], rng, 1.0, blocked);
        if (!pair) continue;
        PlanningProblem problem{docs[si].chain, docs[si].scene, pair->first, pair->second};
        auto rec = generate_oracle_path(problem, files[si], oracle, rng);
        if (!rec) {
          ++failures;
          continue;
        }
        per_scene[si].push_back(std::move(*rec));
        ++produced;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::max<std::size_t>(1, workers); ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  Dataset ds;
  ds.chain_hash = hash0;
  ds.master_seed = seed;
  ds.scenes_dir = scenes_dir;
  for (auto& bucket : per_scene)
    for (auto& rec : bucket) ds.records.push_back(std::move(rec));
  save_dataset(ds, out_file);
  std::size_t samples = 0;
  for (const auto& rec : ds.records) samples += rec.configs.size() - 1;
  std::cout << "wrote " << ds.records.size() << " paths (" << samples << " samples, "
            << failures.load() << " oracle failures) to " << out_file << "\n";
  return 0;
}

int cmd_train(const std::string& data_file, const std::string& scenes_override,
              const std::string& out_ckpt, const TrainParams& tparams, GaideHyper hyper,
              std::uint64_t seed) {
  const Dataset ds = load_dataset(data_file);
  const std::string scenes_dir = scenes_override.empty() ? ds.scenes_dir : scenes_override;
  SceneMap scenes;
  KinematicChain chain;
  bool have_chain = false;
  for (const auto& rec : ds.records) {
    if (scenes.count(rec.scene_id)) continue;
    const auto doc = load_scene_file((fs::path(scenes_dir) / rec.scene_id).string());
    scenes.emplace(rec.scene_id, doc.scene);
    if (!have_chain) {
      chain = doc.chain;
      have_chain = true;
    }
  }
  if (!have_chain) {
    std::cerr << "dataset has no records\n";
    return 1;
  }
  if (chain_hash(chain) != ds.chain_hash) {
    std::cerr << "dataset chain hash does not match the scene files\n";
    return 1;
  }
  hyper.dof = chain.dof();

  Rng init_rng(Rng::derive(seed, 0x1417));
  GaideModel model = GaideModel::init(hyper, init_rng);
  TrainParams params = tparams;
  params.checkpoint_path = out_ckpt;
  Rng rng(seed);
  const TrainReport report = train(model, chain, ds.records, scenes, params, rng);

  std::ofstream curve(out_ckpt + ".loss.csv");
  curve << "step,loss\n";
  for (std::size_t i = 0; i < report.loss_curve.size(); ++i)
    curve << (i + 1) << "," << report.loss_curve[i] << "\n";
  std::ofstream val(out_ckpt + ".val.csv");
  val << "step,val_loss\n";
  for (const auto& [step, loss] : report.val_curve) val << step << "," << loss << "\n";

  if (report.diverged) {
    std::cerr << "training diverged at step " << report.steps_completed
              << "; last good checkpoint kept\n";
    return 1;
  }
  std::cout << "trained " << report.steps_completed << " steps; final loss "
            << (report.loss_curve.empty() ? 0.0 : report.loss_curve.back()) << "; checkpoint "
            << out_ckpt << "\n";
  return 0;
}

int cmd_plan(const std::string& scene_file, const std::string& start_csv,
             const std::string& goal_csv, const std::string& planner, const std::string& ckpt,
             std::uint64_t seed, double budget, std::size_t neural_steps,
             const std::string& dump_graph) {
  if (!planner_id_known(planner)) {
    std::cerr << "unknown planner: " << planner << "\n";
    return 1;
  }
  const SceneDocument doc = load_scene_file(scene_file);
  PlanningProblem problem{doc.chain, doc.scene, parse_config_csv(start_csv),
                          parse_config_csv(goal_csv)};
  problem.validate();

  Rng rng(seed);
  PlanResult result;
  const double resolution = 0.05;
  if (planner_is_neural(planner)) {
    if (ckpt.empty()) {
      std::cerr << "planner " << planner << " needs --ckpt\n";
      return 1;
    }
    std::optional<MaskSchedule> override;
    if (planner == "gaide-v") override = MaskSchedule::kNoneMask;
    if (planner == "gaide-h") override = MaskSchedule::kAllMask;
    const GaideModel model = load_checkpoint(ckpt, override);
    NeuralParams params;
    params.steps = neural_steps;
    params.resolution = resolution;
    Rng scene_rng(Rng::derive(seed, 0x5ce11e));
    const auto scene_prep = prepare_scene_tokens(model, problem.scene, scene_rng);
    if (!dump_graph.empty()) {
      Rng cloud_rng(Rng::derive(seed, 0xc10d));
      const PointCloud robot_cloud =
          sample_robot_pointcloud(problem.chain, problem.q_start, model.hyper.n_r, cloud_rng);
      const auto robot_prep = model.robot_sa.prepare(robot_cloud);
      const auto graph = build_structure_graph(robot_prep.centroid_link_tags,
                                               scene_prep.group_coords.size());
      std::ofstream out(dump_graph);
      out << dump_adjacency(graph);
    }
    result = neural_plan(problem, model, scene_prep, params, rng);
  } else if (planner == "random") {
    NeuralParams params;
    params.steps = neural_steps;
    params.resolution = resolution;
    result = random_delta_plan(problem, 0.3, params, rng);
  } else {
    ClassicalParams params;
    params.time_budget = budget;
    params.resolution = resolution;
    if (planner == "birrt")
      result = birrt_plan(problem, params, rng);
    else if (planner == "rrtstar")
      result = rrt_star_plan(problem, params, rng);
    else
      result = irrt_star_plan(problem, params, rng);
  }

  json out;
  out["planner"] = planner;
  out["seed"] = seed;
  out["resolution"] = resolution;
  out["success"] = result.success;
  out["planning_time"] = result.planning_time;  // virtual seconds, deterministic
  out["cost"] = result.success ? json(result.cost) : json(nullptr);
  out["stats"] = {{"samples_drawn", result.stats.samples_drawn},
                  {"collision_checks", result.stats.collision_checks},
                  {"model_queries", result.stats.model_queries},
                  {"replanning_invoked", result.stats.replanning_invoked}};
  if (result.path) {
    json path = json::array();
    for (const auto& q : *result.path) path.push_back(q.q);
    out["path"] = path;
  } else {
    out["path"] = json(nullptr);
  }
  std::cout << out.dump(2) << "\n";
  return result.success ? 0 : 2;
}

int cmd_bench(const std::string& suite_file, const std::string& planners_csv,
              const std::string& default_ckpt, const std::string& out_dir, std::size_t workers) {
  BenchmarkSuite suite = load_suite_file(suite_file);
  if (suite.scenes_dir.empty() || !fs::path(suite.scenes_dir).is_absolute())
    suite.scenes_dir = (fs::path(suite_file).parent_path() / suite.scenes_dir).string();

  std::vector<PlannerSpec> specs;
  for (const auto& entry : split_csv(planners_csv)) {
    PlannerSpec spec;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) {
      spec.id = entry;
      if (planner_is_neural(spec.id)) spec.checkpoint = default_ckpt;
    } else {
      spec.id = entry.substr(0, eq);
      spec.checkpoint = entry.substr(eq + 1);
    }
    specs.push_back(std::move(spec));
  }

  const SuiteRun run = run_suite(suite, specs, workers);
  report(run, out_dir);
  std::cout << metrics_to_csv(run.metrics);
  std::cout << "report written to " << out_dir << "\n";
  return 0;
}

int cmd_report(const std::string& in_dir) {
  std::ifstream in(fs::path(in_dir) / "costs.csv");
  if (!in) {
    std::cerr << "no costs.csv under " << in_dir << "\n";
    return 1;
  }
  std::vector<TrialRecord> records;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    while (f.size() < 12) f.emplace_back();
    TrialRecord r;
    r.planner = f[0];
    r.task = f[1];
    r.scene = f[2];
    r.problem = std::stoull(f[3]);
    r.trial = std::stoull(f[4]);
    r.seed = std::stoull(f[5]);
    r.success = f[6] == "1";
    r.cost = f[7].empty() ? 0.0 : std::stod(f[7]);
    r.time = std::stod(f[8]);
    r.collision_checks = std::stoull(f[9]);
    r.model_queries = std::stoull(f[10]);
    r.replanned = f[11] == "1";
    records.push_back(std::move(r));
  }
  if (records.empty()) {
    std::cerr << "costs.csv holds no records\n";
    return 1;
  }
  // budgets from the previous results.csv, when available
  std::map<std::pair<std::string, std::string>, double> budgets;
  std::ifstream prior(fs::path(in_dir) / "results.csv");
  if (prior) {
    std::string csv((std::istreambuf_iterator<char>(prior)), std::istreambuf_iterator<char>());
    for (const auto& row : metrics_from_csv(csv))
      if (row.budget) budgets[{row.planner, row.task}] = *row.budget;
  }
  SuiteRun run;
  run.records = std::move(records);
  run.budgets = std::move(budgets);
  run.metrics = aggregate(run.records, &run.budgets);
  report(run, in_dir);
  std::cout << metrics_to_csv(run.metrics);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph-masked attention informed sampling for motion planning"};
  app.require_subcommand(1);

  // gen-scenes
  auto* gen_scenes = app.add_subcommand("gen-scenes", "generate scene families and a suite file");
  std::string gs_out = "scenes";
  std::string gs_families = "open,gap,clutter,shelf";
  std::size_t gs_count = 4, gs_problems = 25, gs_trials = 4;
  std::uint64_t gs_seed = 1;
  std::string gs_name = "desk";
  gen_scenes->add_option("--out", gs_out, "output directory");
  gen_scenes->add_option("--families", gs_families, "comma-separated family list");
  gen_scenes->add_option("--count", gs_count, "scenes per family");
  gen_scenes->add_option("--problems", gs_problems, "problems per scene");
  gen_scenes->add_option("--trials", gs_trials, "trials per problem in the suite");
  gen_scenes->add_option("--seed", gs_seed, "master seed");
  gen_scenes->add_option("--name", gs_name, "suite name");

  // gen-data
  auto* gen_data = app.add_subcommand("gen-data", "generate oracle paths for training");
  std::string gd_scenes, gd_out = "dataset.jsonl";
  std::size_t gd_paths = 10, gd_workers = 1;
  std::uint64_t gd_seed = 1;
  gen_data->add_option("--scenes", gd_scenes, "scene directory")->required();
  gen_data->add_option("--paths-per-scene", gd_paths, "oracle paths per scene");
  gen_data->add_option("--out", gd_out, "dataset file");
  gen_data->add_option("--seed", gd_seed, "master seed");
  gen_data->add_option("--workers", gd_workers, "parallel scene workers");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the neural sampler");
  std::string tr_data, tr_out = "gaide.ckpt", tr_scenes, tr_schedule = "interleaved";
  TrainParams tr_params;
  GaideHyper tr_hyper;
  std::uint64_t tr_seed = 1;
  train_cmd->add_option("--data", tr_data, "dataset file")->required();
  train_cmd->add_option("--steps", tr_params.steps, "gradient steps");
  train_cmd->add_option("--out", tr_out, "checkpoint path");
  train_cmd->add_option("--scenes", tr_scenes, "override the dataset's scene directory");
  train_cmd->add_option("--batch-size", tr_params.batch_size, "mini-batch size");
  train_cmd->add_option("--lr", tr_params.lr, "learning rate");
  train_cmd->add_option("--seed", tr_seed, "training seed");
  train_cmd->add_option("--width", tr_hyper.h, "token width H");
  train_cmd->add_option("--heads", tr_hyper.heads, "attention heads");
  train_cmd->add_option("--enc-layers", tr_hyper.enc_layers, "encoder layers");
  train_cmd->add_option("--dec-layers", tr_hyper.dec_layers, "decoder layers");
  train_cmd->add_option("--kr", tr_hyper.k_r, "robot centroids");
  train_cmd->add_option("--kw", tr_hyper.k_w, "workspace centroids");
  train_cmd->add_option("--nr", tr_hyper.n_r, "robot cloud points");
  train_cmd->add_option("--nw", tr_hyper.n_w, "workspace cloud points");
  train_cmd->add_option("--dropout", tr_hyper.dropout_p, "dropout probability");
  train_cmd->add_option("--schedule", tr_schedule, "mask schedule: interleaved|none|all");

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "plan one problem");
  std::string pl_scene, pl_start, pl_goal, pl_planner = "birrt", pl_ckpt, pl_dump;
  std::uint64_t pl_seed = 1;
  double pl_budget = 1.0;
  std::size_t pl_steps = 150;
  plan_cmd->add_option("--scene", pl_scene, "scene file")->required();
  plan_cmd->add_option("--start", pl_start, "start config, comma-separated radians")->required();
  plan_cmd->add_option("--goal", pl_goal, "goal config, comma-separated radians")->required();
  plan_cmd->add_option("--planner", pl_planner,
                       "birrt|rrtstar|irrtstar|gaide|gaide-v|gaide-h|random");
  plan_cmd->add_option("--ckpt", pl_ckpt, "checkpoint for neural planners");
  plan_cmd->add_option("--seed", pl_seed, "rng seed");
  plan_cmd->add_option("--budget", pl_budget, "classical budget, virtual seconds");
  plan_cmd->add_option("--steps", pl_steps, "neural planner step budget");
  plan_cmd->add_option("--dump-graph", pl_dump, "write the adjacency grid to this file");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "run a benchmark suite");
  std::string be_suite, be_planners = "gaide,birrt,rrtstar,irrtstar", be_ckpt, be_out = "bench_out";
  std::size_t be_workers = 1;
  bench_cmd->add_option("--suite", be_suite, "suite json")->required();
  bench_cmd->add_option("--planners", be_planners, "planner list; id or id=ckpt entries");
  bench_cmd->add_option("--ckpt", be_ckpt, "default checkpoint for neural planners");
  bench_cmd->add_option("--out", be_out, "output directory");
  bench_cmd->add_option("--workers", be_workers, "concurrent trials");

  // report
  auto* report_cmd = app.add_subcommand("report", "re-aggregate a benchmark output directory");
  std::string re_in;
  report_cmd->add_option("--in", re_in, "directory with costs.csv")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_scenes->parsed())
      return cmd_gen_scenes(gs_out, gs_families, gs_count, gs_seed, gs_problems, gs_trials,
                            gs_name);
    if (gen_data->parsed()) return cmd_gen_data(gd_scenes, gd_paths, gd_out, gd_seed, gd_workers);
    if (train_cmd->parsed()) {
      tr_hyper.schedule = parse_schedule(tr_schedule);
      return cmd_train(tr_data, tr_scenes, tr_out, tr_params, tr_hyper, tr_seed);
    }
    if (plan_cmd->parsed())
      return cmd_plan(pl_scene, pl_start, pl_goal, pl_planner, pl_ckpt, pl_seed, pl_budget,
                      pl_steps, pl_dump);
    if (bench_cmd->parsed()) return cmd_bench(be_suite, be_planners, be_ckpt, be_out, be_workers);
    if (report_cmd->parsed()) return cmd_report(re_in);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
