#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gaide/model.hpp"
#include "gaide/planners.hpp"
#include "gaide/scene_io.hpp"

namespace gaide {

// One benchmark suite: scenes grouped into named tasks, per-scene start/goal
// pairs, trial fan-out, and planner settings.
struct SuiteProblem {
  Config start;
  Config goal;
};

struct SuiteScene {
  std::string file;   // scene document, relative to scenes_dir
  std::string task;   // environment family label for aggregation
  std::vector<SuiteProblem> problems;
};

struct BenchmarkSuite {
  std::string name;
  std::string scenes_dir;
  std::vector<SuiteScene> scenes;
  std::size_t trials_per_problem = 4;
  std::uint64_t master_seed = 1;
  double default_budget = 1.0;        // classical budget if no neural phase ran
  double step_size = 0.2;
  double resolution = 0.05;
  std::size_t neural_steps = 150;
  double max_step_norm = 0.5;
  double random_delta_magnitude = 0.3;
};

inline json suite_to_json(const BenchmarkSuite& s) {
  json j;
  j["version"] = 1;
  j["name"] = s.name;
  j["scenes_dir"] = s.scenes_dir;
  j["trials_per_problem"] = s.trials_per_problem;
  j["master_seed"] = s.master_seed;
  j["default_budget"] = s.default_budget;
  j["step_size"] = s.step_size;
  j["resolution"] = s.resolution;
  j["neural_steps"] = s.neural_steps;
  j["max_step_norm"] = s.max_step_norm;
  j["random_delta_magnitude"] = s.random_delta_magnitude;
  json scenes = json::array();
  for (const auto& scene : s.scenes) {
    json problems = json::array();
    for (const auto& p : scene.problems)
      problems.push_back({{"start", p.start.q}, {"goal", p.goal.q}});
    scenes.push_back({{"file", scene.file}, {"task", scene.task}, {"problems", problems}});
  }
  j["scenes"] = scenes;
  return j;
}

inline BenchmarkSuite suite_from_json(const json& j) {
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw std::invalid_argument("suite: missing or unsupported version (expect 1)");
  BenchmarkSuite s;
  s.name = j.at("name").get<std::string>();
  s.scenes_dir = j.value("scenes_dir", "");
  s.trials_per_problem = j.value("trials_per_problem", std::size_t{4});
  s.master_seed = j.value("master_seed", std::uint64_t{1});
  s.default_budget = j.value("default_budget", 1.0);
  s.step_size = j.value("step_size", 0.2);
  s.resolution = j.value("resolution", 0.05);
  s.neural_steps = j.value("neural_steps", std::size_t{150});
  s.max_step_norm = j.value("max_step_norm", 0.5);
  s.random_delta_magnitude = j.value("random_delta_magnitude", 0.3);
  for (const auto& scene_json : j.at("scenes")) {
    SuiteScene scene;
    scene.file = scene_json.at("file").get<std::string>();
    scene.task = scene_json.value("task", scene.file);
    for (const auto& p : scene_json.at("problems"))
      scene.problems.push_back(
          {Config(p.at("start").get<std::vector<double>>()),
           Config(p.at("goal").get<std::vector<double>>())});
    s.scenes.push_back(std::move(scene));
  }
  if (s.scenes.empty()) throw std::invalid_argument("suite: no scenes");
  return s;
}

inline BenchmarkSuite load_suite_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read suite file: " + path);
  json j;
  in >> j;
  return suite_from_json(j);
}

inline void save_suite_file(const BenchmarkSuite& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write suite file: " + path);
  out << suite_to_json(s).dump(2) << "\n";
}

// Planner selection: classical ids need no checkpoint, neural ids load one
// (gaide-v / gaide-h override the stored mask schedule).
struct PlannerSpec {
  std::string id;
  std::string checkpoint;  // neural planners only
};

inline bool planner_is_neural(const std::string& id) {
  return id == "gaide" || id == "gaide-v" || id == "gaide-h";
}

inline bool planner_id_known(const std::string& id) {
  return id == "birrt" || id == "rrtstar" || id == "irrtstar" || id == "random" ||
         planner_is_neural(id);
}

struct TrialRecord {
  std::string planner;
  std::string task;
  std::string scene;
  std::size_t problem = 0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  bool success = false;
  double cost = 0.0;
  double time = 0.0;  // virtual seconds
  std::size_t collision_checks = 0;
  std::size_t model_queries = 0;
  bool replanned = false;
  double wall_ms = 0.0;  // logged separately, never in the deterministic CSVs
};

struct MetricsRow {
  std::string planner;
  std::string task;
  std::size_t trials = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;  // percent
  double mean_time = 0.0;
  double std_time = 0.0;
  std::optional<double> mean_cost;  // absent without successes
  std::optional<double> std_cost;
  std::optional<double> budget;  // classical rows: assigned budget
};

namespace detail {

// population std: {1, 3} -> mean 2, std 1
inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

}  // namespace detail

// Per-planner per-task statistics plus a cross-task "all" row per planner.
// Cost statistics are computed over successful trials only.
inline std::vector<MetricsRow> aggregate(const std::vector<TrialRecord>& records,
                                         const std::map<std::pair<std::string, std::string>,
                                                        double>* budgets = nullptr) {
  if (records.empty()) throw std::invalid_argument("aggregate: no records");
  std::vector<std::string> planner_order, task_order;
  for (const auto& r : records) {
    if (std::find(planner_order.begin(), planner_order.end(), r.planner) == planner_order.end())
      planner_order.push_back(r.planner);
    if (std::find(task_order.begin(), task_order.end(), r.task) == task_order.end())
      task_order.push_back(r.task);
  }
  std::vector<MetricsRow> rows;
  for (const auto& planner : planner_order) {
    for (const auto& task : task_order) {
      MetricsRow row;
      row.planner = planner;
      row.task = task;
      std::vector<double> times, costs;
      for (const auto& r : records) {
        if (r.planner != planner || r.task != task) continue;
        ++row.trials;
        times.push_back(r.time);
        if (r.success) {
          ++row.successes;
          costs.push_back(r.cost);
        }
      }
      if (row.trials == 0) continue;
      row.success_rate = 100.0 * static_cast<double>(row.successes) /
                         static_cast<double>(row.trials);
      std::tie(row.mean_time, row.std_time) = detail::mean_std(times);
      if (!costs.empty()) {
        const auto [mc, sc] = detail::mean_std(costs);
        row.mean_cost = mc;
        row.std_cost = sc;
      }
      if (budgets) {
        const auto it = budgets->find({planner, task});
        if (it != budgets->end()) row.budget = it->second;
      }
      rows.push_back(std::move(row));
    }
    // cross-task summary
    MetricsRow all;
    all.planner = planner;
    all.task = "all";
    std::vector<double> times, costs;
    for (const auto& r : records) {
      if (r.planner != planner) continue;
      ++all.trials;
      times.push_back(r.time);
      if (r.success) {
        ++all.successes;
        costs.push_back(r.cost);
      }
    }
    all.success_rate =
        100.0 * static_cast<double>(all.successes) / static_cast<double>(all.trials);
    std::tie(all.mean_time, all.std_time) = detail::mean_std(times);
    if (!costs.empty()) {
      const auto [mc, sc] = detail::mean_std(costs);
      all.mean_cost = mc;
      all.std_cost = sc;
    }
    rows.push_back(std::move(all));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// suite execution
// ---------------------------------------------------------------------------

struct SuiteRun {
  std::vector<TrialRecord> records;
  std::vector<MetricsRow> metrics;
  std::map<std::pair<std::string, std::string>, double> budgets;  // (planner, task) -> s
};

// Two-phase protocol: neural planners run first and their per-task mean
// (virtual) planning time becomes the classical planners' budget, mirroring
// the paper's time-matching. GAIDE_SEED, when set, overrides the suite seed.
inline SuiteRun run_suite(const BenchmarkSuite& suite, const std::vector<PlannerSpec>& planners,
                          std::size_t workers = 1) {
  for (const auto& spec : planners) {
    if (!planner_id_known(spec.id))
      throw std::invalid_argument("run_suite: unknown planner id \"" + spec.id + "\"");
  }

  std::uint64_t master_seed = suite.master_seed;
  if (const char* env = std::getenv("GAIDE_SEED")) master_seed = std::strtoull(env, nullptr, 10);

  // configuration errors (missing checkpoints) must precede any trial
  std::map<std::string, GaideModel> models;
  for (const auto& spec : planners) {
    if (!planner_is_neural(spec.id)) continue;
    if (spec.checkpoint.empty() || !std::filesystem::exists(spec.checkpoint))
      throw std::invalid_argument("run_suite: planner " + spec.id +
                                  " needs an existing checkpoint, got \"" + spec.checkpoint +
                                  "\"");
    std::optional<MaskSchedule> override;
    if (spec.id == "gaide-v") override = MaskSchedule::kNoneMask;
    if (spec.id == "gaide-h") override = MaskSchedule::kAllMask;
    models.emplace(spec.id, load_checkpoint(spec.checkpoint, override));
  }

  // load scenes once; precompute workspace tokens per neural planner
  struct LoadedScene {
    SceneDocument doc;
    std::map<std::string, SetAbstractionLayer::Prepared> scene_preps;  // per neural planner
  };
  std::vector<LoadedScene> loaded(suite.scenes.size());
  for (std::size_t i = 0; i < suite.scenes.size(); ++i) {
    const auto path = std::filesystem::path(suite.scenes_dir) / suite.scenes[i].file;
    loaded[i].doc = load_scene_file(path.string());
    for (const auto& [id, model] : models) {
      Rng scene_rng(Rng::derive(master_seed, 0xc10d ^ splitmix64(i)));
      loaded[i].scene_preps.emplace(id,
                                    prepare_scene_tokens(model, loaded[i].doc.scene, scene_rng));
    }
  }

  struct TrialTask {
    std::size_t planner_index;
    std::size_t scene_index;
    std::size_t problem_index;
    std::size_t trial_index;
    std::uint64_t counter;  // global, for seed derivation
  };

  std::size_t max_problems = 1;
  for (const auto& scene : suite.scenes)
    max_problems = std::max(max_problems, scene.problems.size());

  auto enumerate_trials = [&](const std::vector<std::size_t>& planner_indices) {
    std::vector<TrialTask> tasks;
    for (std::size_t pi : planner_indices)
      for (std::size_t si = 0; si < suite.scenes.size(); ++si)
        for (std::size_t qi = 0; qi < suite.scenes[si].problems.size(); ++qi)
          for (std::size_t ti = 0; ti < suite.trials_per_problem; ++ti) {
            const std::uint64_t counter =
                ((pi * suite.scenes.size() + si) * max_problems + qi) *
                    suite.trials_per_problem +
                ti;
            tasks.push_back({pi, si, qi, ti, counter});
          }
    return tasks;
  };

  SuiteRun run;
  auto execute = [&](const std::vector<TrialTask>& tasks,
                     const std::map<std::pair<std::string, std::string>, double>& budgets) {
    std::vector<TrialRecord> records(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      while (true) {
        const std::size_t idx = next.fetch_add(1);
        if (idx >= tasks.size()) return;
        const TrialTask& t = tasks[idx];
        const PlannerSpec& spec = planners[t.planner_index];
        const SuiteScene& scene = suite.scenes[t.scene_index];
        const LoadedScene& ls = loaded[t.scene_index];
        PlanningProblem problem{ls.doc.chain, ls.doc.scene,
                                scene.problems[t.problem_index].start,
                                scene.problems[t.problem_index].goal};
        TrialRecord rec;
        rec.planner = spec.id;
        rec.task = scene.task;
        rec.scene = scene.file;
        rec.problem = t.problem_index;
        rec.trial = t.trial_index;
        rec.seed = Rng::derive(master_seed, t.counter);
        Rng rng(rec.seed);

        const auto wall_start = std::chrono::steady_clock::now();
        PlanResult result;
        if (planner_is_neural(spec.id)) {
          NeuralParams params;
          params.steps = suite.neural_steps;
          params.max_step_norm = suite.max_step_norm;
          params.resolution = suite.resolution;
          result = neural_plan(problem, models.at(spec.id), ls.scene_preps.at(spec.id), params,
                               rng);
        } else if (spec.id == "random") {
          NeuralParams params;
          params.steps = suite.neural_steps;
          params.max_step_norm = suite.max_step_norm;
          params.resolution = suite.resolution;
          result = random_delta_plan(problem, suite.random_delta_magnitude, params, rng);
        } else {
          ClassicalParams params;
          params.step_size = suite.step_size;
          params.resolution = suite.resolution;
          const auto it = budgets.find({spec.id, scene.task});
          params.time_budget = it != budgets.end() ? it->second : suite.default_budget;
          if (spec.id == "birrt")
            result = birrt_plan(problem, params, rng);
          else if (spec.id == "rrtstar")
            result = rrt_star_plan(problem, params, rng);
          else
            result = irrt_star_plan(problem, params, rng);
        }
        const auto wall_end = std::chrono::steady_clock::now();

        rec.success = result.success;
        rec.cost = result.success ? result.cost : 0.0;
        rec.time = result.planning_time;
        rec.collision_checks = result.stats.collision_checks;
        rec.model_queries = result.stats.model_queries;
        rec.replanned = result.stats.replanning_invoked;
        rec.wall_ms =
            std::chrono::duration<double, std::milli>(wall_end - wall_start).count();
        records[idx] = std::move(rec);
      }
    };
    std::vector<std::thread> pool;
    const std::size_t n_workers = std::max<std::size_t>(1, workers);
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    return records;
  };

  std::vector<std::size_t> neural_indices, classical_indices;
  for (std::size_t i = 0; i < planners.size(); ++i)
    (planner_is_neural(planners[i].id) || planners[i].id == "random" ? neural_indices
                                                                     : classical_indices)
        .push_back(i);

  // phase 1: sampler-driven planners
  const auto neural_records = execute(enumerate_trials(neural_indices), {});
  run.records.insert(run.records.end(), neural_records.begin(), neural_records.end());

  // per-task budget = mean gaide time (fall back to any neural planner mean)
  for (const auto& scene : suite.scenes) {
    std::vector<double> gaide_times, any_neural_times;
    for (const auto& r : neural_records) {
      if (r.task != scene.task) continue;
      if (r.planner == "gaide") gaide_times.push_back(r.time);
      if (planner_is_neural(r.planner)) any_neural_times.push_back(r.time);
    }
    const auto& source = gaide_times.empty() ? any_neural_times : gaide_times;
    double budget = suite.default_budget;
    if (!source.empty()) budget = detail::mean_std(source).first;
    for (const auto& spec : planners)
      if (!planner_is_neural(spec.id) && spec.id != "random")
        run.budgets[{spec.id, scene.task}] = budget;
  }

  // phase 2: classical planners under matched budgets
  const auto classical_records = execute(enumerate_trials(classical_indices), run.budgets);
  run.records.insert(run.records.end(), classical_records.begin(), classical_records.end());

  run.metrics = aggregate(run.records, &run.budgets);
  return run;
}

// ---------------------------------------------------------------------------
// reporting
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::string out =
      "planner,task,trials,successes,success_rate,mean_time,std_time,mean_cost,std_cost,budget\n";
  for (const auto& r : rows) {
    out += r.planner + "," + r.task + "," + std::to_string(r.trials) + "," +
           std::to_string(r.successes) + "," + detail::fmt_double(r.success_rate) + "," +
           detail::fmt_double(r.mean_time) + "," + detail::fmt_double(r.std_time) + ",";
    out += r.mean_cost ? detail::fmt_double(*r.mean_cost) : "";
    out += ",";
    out += r.std_cost ? detail::fmt_double(*r.std_cost) : "";
    out += ",";
    out += r.budget ? detail::fmt_double(*r.budget) : "";
    out += "\n";
  }
  return out;
}

inline std::vector<MetricsRow> metrics_from_csv(const std::string& csv) {
  std::vector<MetricsRow> rows;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    while (fields.size() < 10) fields.emplace_back();
    MetricsRow r;
    r.planner = fields[0];
    r.task = fields[1];
    r.trials = std::stoull(fields[2]);
    r.successes = std::stoull(fields[3]);
    r.success_rate = std::stod(fields[4]);
    r.mean_time = std::stod(fields[5]);
    r.std_time = std::stod(fields[6]);
    if (!fields[7].empty()) r.mean_cost = std::stod(fields[7]);
    if (!fields[8].empty()) r.std_cost = std::stod(fields[8]);
    if (!fields[9].empty()) r.budget = std::stod(fields[9]);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string trials_to_csv(const std::vector<TrialRecord>& records) {
  std::string out =
      "planner,task,scene,problem,trial,seed,success,cost,time,collision_checks,model_queries,"
      "replanned\n";
  for (const auto& r : records) {
    out += r.planner + "," + r.task + "," + r.scene + "," + std::to_string(r.problem) + "," +
           std::to_string(r.trial) + "," + std::to_string(r.seed) + "," +
           (r.success ? "1" : "0") + ",";
    out += r.success ? detail::fmt_double(r.cost) : "";
    out += "," + detail::fmt_double(r.time) + "," + std::to_string(r.collision_checks) + "," +
           std::to_string(r.model_queries) + "," + (r.replanned ? "1" : "0") + "\n";
  }
  return out;
}

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

inline const char* planner_color(std::size_t i) {
  static const char* colors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52",
                                 "#8172b3", "#937860", "#da8bc3", "#8c8c8c"};
  return colors[i % 8];
}

// Grouped bar chart; value_of returns the bar height or nullopt to skip.
inline std::string grouped_bar_svg(
    const std::vector<MetricsRow>& rows, const std::string& title, double value_cap,
    const std::function<std::optional<double>(const MetricsRow&)>& value_of) {
  std::vector<std::string> tasks, planners;
  for (const auto& r : rows) {
    if (r.task == "all") continue;
    if (std::find(tasks.begin(), tasks.end(), r.task) == tasks.end()) tasks.push_back(r.task);
    if (std::find(planners.begin(), planners.end(), r.planner) == planners.end())
      planners.push_back(r.planner);
  }
  const double plot_w = 640.0, plot_h = 300.0, margin = 60.0;
  const double width = plot_w + 2 * margin, height = plot_h + 2 * margin;
  double max_v = 0.0;
  for (const auto& r : rows)
    if (r.task != "all")
      if (const auto v = value_of(r)) max_v = std::max(max_v, *v);
  if (max_v <= 0.0) max_v = 1.0;
  max_v = std::min(max_v, value_cap);

  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_double(width) +
         "\" height=\"" + fmt_double(height) + "\">\n";
  svg += "<text x=\"" + fmt_double(width / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" + svg_escape(title) +
         "</text>\n";
  svg += "<line x1=\"" + fmt_double(margin) + "\" y1=\"" + fmt_double(margin + plot_h) +
         "\" x2=\"" + fmt_double(margin + plot_w) + "\" y2=\"" + fmt_double(margin + plot_h) +
         "\" stroke=\"black\"/>\n";
  const double group_w = plot_w / static_cast<double>(tasks.size());
  const double bar_w = group_w * 0.8 / static_cast<double>(planners.size());
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    svg += "<text x=\"" + fmt_double(margin + group_w * (ti + 0.5)) + "\" y=\"" +
           fmt_double(margin + plot_h + 20) + "\" text-anchor=\"middle\" font-size=\"12\">" +
           svg_escape(tasks[ti]) + "</text>\n";
    for (std::size_t pi = 0; pi < planners.size(); ++pi) {
      std::optional<double> v;
      for (const auto& r : rows)
        if (r.task == tasks[ti] && r.planner == planners[pi]) v = value_of(r);
      if (!v) continue;
      const double h = std::min(*v, value_cap) / max_v * plot_h;
      const double x = margin + group_w * ti + group_w * 0.1 + bar_w * pi;
      svg += "<rect x=\"" + fmt_double(x) + "\" y=\"" + fmt_double(margin + plot_h - h) +
             "\" width=\"" + fmt_double(bar_w * 0.9) + "\" height=\"" + fmt_double(h) +
             "\" fill=\"" + planner_color(pi) + "\"/>\n";
    }
  }
  for (std::size_t pi = 0; pi < planners.size(); ++pi) {
    const double y = margin + 16.0 * pi;
    svg += "<rect x=\"" + fmt_double(margin + plot_w + 8) + "\" y=\"" + fmt_double(y - 9) +
           "\" width=\"10\" height=\"10\" fill=\"" + std::string(planner_color(pi)) + "\"/>\n";
    svg += "<text x=\"" + fmt_double(margin + plot_w + 22) + "\" y=\"" + fmt_double(y) +
           "\" font-size=\"11\">" + svg_escape(planners[pi]) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace detail

// Writes results.csv, costs.csv, success/cost plots, and the wall-clock side
// log. Everything except timing.log is byte-deterministic given seeds.
inline void report(const SuiteRun& run, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);
  auto write_file = [](const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("report: cannot write " + path.string());
    out << content;
  };
  write_file(dir / "results.csv", metrics_to_csv(run.metrics));
  write_file(dir / "costs.csv", trials_to_csv(run.records));
  write_file(dir / "success.svg",
             detail::grouped_bar_svg(run.metrics, "Success rate [%]", 100.0,
                                     [](const MetricsRow& r) -> std::optional<double> {
                                       return r.success_rate;
                                     }));
  write_file(dir / "cost.svg",
             detail::grouped_bar_svg(run.metrics, "Planning cost (successes)", 1e9,
                                     [](const MetricsRow& r) { return r.mean_cost; }));
  std::string timing = "planner,task,scene,problem,trial,wall_ms\n";
  for (const auto& r : run.records)
    timing += r.planner + "," + r.task + "," + r.scene + "," + std::to_string(r.problem) + "," +
              std::to_string(r.trial) + "," + detail::fmt_double(r.wall_ms) + "\n";
  write_file(dir / "timing.log", timing);
}

}  // namespace gaide
