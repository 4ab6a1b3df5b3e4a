#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaide/model.hpp"
#include "gaide/nn.hpp"
#include "gaide/planners.hpp"
#include "gaide/scene_io.hpp"

namespace gaide {

// One supervised demonstration: a collision-free path whose consecutive
// deltas become regression targets. Clouds are regenerated from cloud_seed,
// keeping records small and provenance exact.
struct PathRecord {
  std::string scene_id;
  std::uint64_t cloud_seed = 0;
  std::vector<Config> configs;
};

struct OracleParams {
  double grid_step = 0.1;          // rad, joint-space cell edge
  double resolution = 0.05;        // rad, edge validation
  double max_delta = 0.3;          // rad, per-step magnitude bound
  double birrt_budget = 3.0;       // virtual seconds, DOF > 3 fallback
  std::size_t shortcut_iters = 200;
};

namespace detail {

inline std::vector<Config> resample_max_step(const std::vector<Config>& path, double max_delta) {
  std::vector<Config> out;
  out.push_back(path.front());
  for (std::size_t i = 1; i < path.size(); ++i) {
    const double d = path[i - 1].dist(path[i]);
    const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(d / max_delta)));
    for (std::size_t k = 1; k < steps; ++k)
      out.push_back(lerp(path[i - 1], path[i],
                         static_cast<double>(k) / static_cast<double>(steps)));
    out.push_back(path[i]);  // exact waypoint, not a lerp reconstruction
  }
  return out;
}

inline bool revalidate_path(const PlanningProblem& problem, const std::vector<Config>& path,
                            double resolution) {
  if (path.empty()) return false;
  if (!(path.front() == problem.q_start) || !(path.back() == problem.q_goal)) return false;
  for (std::size_t i = 1; i < path.size(); ++i)
    if (!edge_collision_free(problem.chain, problem.scene, path[i - 1], path[i], resolution))
      return false;
  return true;
}

// Shortest path over a uniform joint-space grid, 3^d - 1 neighborhood, edge
// cost equal to joint-space distance. Midpoints of diagonal moves are also
// checked to avoid corner cutting through thin obstacles.
inline std::optional<std::vector<Config>> grid_shortest_path(const PlanningProblem& problem,
                                                             double grid_step) {
  const std::size_t dof = problem.chain.dof();
  std::vector<std::size_t> cells(dof);
  std::vector<double> lo(dof), width(dof);
  std::size_t total = 1;
  for (std::size_t i = 0; i < dof; ++i) {
    lo[i] = problem.chain.joints[i].limits.lower;
    const double span = problem.chain.joints[i].limits.upper - lo[i];
    cells[i] = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(span / grid_step)));
    width[i] = span / static_cast<double>(cells[i]);
    total *= cells[i];
  }

  auto cell_center = [&](const std::vector<std::size_t>& idx) {
    Config q;
    q.q.resize(dof);
    for (std::size_t i = 0; i < dof; ++i)
      q[i] = lo[i] + (static_cast<double>(idx[i]) + 0.5) * width[i];
    return q;
  };
  auto flat = [&](const std::vector<std::size_t>& idx) {
    std::size_t f = 0;
    for (std::size_t i = 0; i < dof; ++i) f = f * cells[i] + idx[i];
    return f;
  };
  auto unflat = [&](std::size_t f) {
    std::vector<std::size_t> idx(dof);
    for (std::size_t i = dof; i-- > 0;) {
      idx[i] = f % cells[i];
      f /= cells[i];
    }
    return idx;
  };
  auto containing_cell = [&](const Config& q) {
    std::vector<std::size_t> idx(dof);
    for (std::size_t i = 0; i < dof; ++i) {
      const double rel = (q[i] - lo[i]) / width[i];
      idx[i] = std::min(cells[i] - 1,
                        static_cast<std::size_t>(std::max(0.0, std::floor(rel))));
    }
    return idx;
  };

  std::vector<std::int8_t> free_cache(total, -1);  // -1 unknown, 0 colliding, 1 free
  auto cell_free = [&](std::size_t f) {
    if (free_cache[f] == -1)
      free_cache[f] = in_collision(problem.chain, problem.scene, cell_center(unflat(f))) ? 0 : 1;
    return free_cache[f] == 1;
  };

  // snap an endpoint to a free cell, searching outward a little if the
  // containing cell center happens to collide
  auto snap = [&](const Config& q) -> std::optional<std::size_t> {
    const auto base = containing_cell(q);
    if (cell_free(flat(base))) return flat(base);
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx(dof);
    std::function<void(std::size_t)> visit = [&](std::size_t dim) {
      if (dim == dof) {
        const std::size_t f = flat(idx);
        if (!cell_free(f)) return;
        const double d = q.dist(cell_center(idx));
        if (d < best_d) {
          best_d = d;
          best = f;
        }
        return;
      }
      const long b = static_cast<long>(base[dim]);
      for (long off = -2; off <= 2; ++off) {
        const long v = b + off;
        if (v < 0 || v >= static_cast<long>(cells[dim])) continue;
        idx[dim] = static_cast<std::size_t>(v);
        visit(dim + 1);
      }
    };
    visit(0);
    return best;
  };

  const auto start_cell = snap(problem.q_start);
  const auto goal_cell = snap(problem.q_goal);
  if (!start_cell || !goal_cell) return std::nullopt;

  // Dijkstra over the implicit grid graph
  std::vector<double> dist(total, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> prev(total, SIZE_MAX);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  dist[*start_cell] = 0.0;
  queue.push({0.0, *start_cell});
  std::vector<long> offsets(dof, -1);
  while (!queue.empty()) {
    const auto [d, f] = queue.top();
    queue.pop();
    if (d > dist[f]) continue;
    if (f == *goal_cell) break;
    const auto idx = unflat(f);
    const Config center = cell_center(idx);
    // enumerate the 3^d - 1 neighborhood
    std::fill(offsets.begin(), offsets.end(), -1);
    while (true) {
      bool all_zero = true;
      std::vector<std::size_t> nidx(dof);
      bool valid = true;
      for (std::size_t i = 0; i < dof && valid; ++i) {
        if (offsets[i] != 0) all_zero = false;
        const long v = static_cast<long>(idx[i]) + offsets[i];
        if (v < 0 || v >= static_cast<long>(cells[i])) valid = false;
        else nidx[i] = static_cast<std::size_t>(v);
      }
      if (valid && !all_zero) {
        const std::size_t nf = flat(nidx);
        if (cell_free(nf)) {
          const Config ncenter = cell_center(nidx);
          bool edge_ok = true;
          std::size_t moved = 0;
          for (std::size_t i = 0; i < dof; ++i)
            if (offsets[i] != 0) ++moved;
          if (moved > 1)
            edge_ok = !in_collision(problem.chain, problem.scene, lerp(center, ncenter, 0.5));
          if (edge_ok) {
            const double nd = d + center.dist(ncenter);
            if (nd < dist[nf]) {
              dist[nf] = nd;
              prev[nf] = f;
              queue.push({nd, nf});
            }
          }
        }
      }
      // increment the mixed-radix offset vector over {-1, 0, 1}^d
      std::size_t dim = 0;
      while (dim < dof) {
        if (offsets[dim] < 1) {
          ++offsets[dim];
          break;
        }
        offsets[dim] = -1;
        ++dim;
      }
      if (dim == dof) break;
    }
  }
  if (!std::isfinite(dist[*goal_cell])) return std::nullopt;

  std::vector<Config> path;
  path.push_back(problem.q_goal);
  for (std::size_t f = *goal_cell; f != SIZE_MAX; f = prev[f]) path.push_back(cell_center(unflat(f)));
  path.push_back(problem.q_start);
  std::reverse(path.begin(), path.end());
  return path;
}

inline std::optional<std::vector<Config>> birrt_shortcut_path(const PlanningProblem& problem,
                                                              const OracleParams& params,
                                                              Rng& rng) {
  ClassicalParams birrt;
  birrt.time_budget = params.birrt_budget;
  birrt.resolution = params.resolution;
  PlanResult result = birrt_plan(problem, birrt, rng);
  if (!result.success) return std::nullopt;
  std::vector<Config> path = std::move(*result.path);
  for (std::size_t iter = 0; iter < params.shortcut_iters && path.size() > 2; ++iter) {
    const std::size_t i = rng.index(path.size() - 2);
    const std::size_t j = i + 2 + rng.index(path.size() - i - 2);
    if (edge_collision_free(problem.chain, problem.scene, path[i], path[j], params.resolution))
      path.erase(path.begin() + static_cast<long>(i) + 1, path.begin() + static_cast<long>(j));
  }
  return path;
}

}  // namespace detail

// Desk-scale oracle: grid-search shortest path for low-DOF chains, Bi-RRT
// plus shortcutting otherwise. The result is contraction-smoothed, resampled
// to the per-step magnitude bound, and re-validated edge by edge.
inline std::optional<PathRecord> generate_oracle_path(const PlanningProblem& problem,
                                                      const std::string& scene_id,
                                                      const OracleParams& params, Rng& rng) {
  if (problem.q_start == problem.q_goal) {
    PathRecord rec;
    rec.scene_id = scene_id;
    rec.cloud_seed = rng.next_u64();
    rec.configs = {problem.q_start};
    return rec;
  }
  std::optional<std::vector<Config>> raw;
  if (problem.chain.dof() <= 3)
    raw = detail::grid_shortest_path(problem, params.grid_step);
  else
    raw = detail::birrt_shortcut_path(problem, params, rng);
  if (!raw) return std::nullopt;

  std::vector<Config> path =
      path_contraction(*raw, problem.chain, problem.scene, params.resolution);
  path = detail::resample_max_step(path, params.max_delta);
  if (!detail::revalidate_path(problem, path, params.resolution)) return std::nullopt;

  PathRecord rec;
  rec.scene_id = scene_id;
  rec.cloud_seed = rng.next_u64();
  rec.configs = std::move(path);
  return rec;
}

// Mean over the batch of summed squared per-joint errors (the double-sum MSE
// with the batch normalizer).
inline Tensor mse_loss(const Tensor& predicted, const Tensor& target) {
  detail::require_same_shape(predicted, target, "mse_loss");
  const Tensor diff = sub(predicted, target);
  return scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(predicted.dim(0)));
}

// ---------------------------------------------------------------------------
// dataset container (line-delimited records with a versioned header)
// ---------------------------------------------------------------------------

struct Dataset {
  std::uint64_t chain_hash = 0;
  std::uint64_t master_seed = 0;
  std::string scenes_dir;
  std::vector<PathRecord> records;
};

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  json header;
  header["version"] = 1;
  header["chain_hash"] = ds.chain_hash;
  header["master_seed"] = ds.master_seed;
  header["scenes_dir"] = ds.scenes_dir;
  out << header.dump() << "\n";
  for (const auto& rec : ds.records) {
    json line;
    line["scene"] = rec.scene_id;
    line["cloud_seed"] = rec.cloud_seed;
    json configs = json::array();
    for (const auto& q : rec.configs) configs.push_back(q.q);
    line["configs"] = configs;
    out << line.dump() << "\n";
  }
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("dataset: missing header line");
  json header = json::parse(line);
  if (!header.contains("version") || header["version"].get<int>() != 1)
    throw std::invalid_argument("dataset: missing or unsupported version (expect 1)");
  Dataset ds;
  ds.chain_hash = header.at("chain_hash").get<std::uint64_t>();
  ds.master_seed = header.at("master_seed").get<std::uint64_t>();
  ds.scenes_dir = header.value("scenes_dir", "");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    PathRecord rec;
    rec.scene_id = j.at("scene").get<std::string>();
    rec.cloud_seed = j.at("cloud_seed").get<std::uint64_t>();
    for (const auto& cfg : j.at("configs")) rec.configs.emplace_back(cfg.get<std::vector<double>>());
    if (rec.configs.empty()) throw std::invalid_argument("dataset: record with no configs");
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// supervised training
// ---------------------------------------------------------------------------

struct TrainParams {
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::size_t checkpoint_every = 500;
  std::string checkpoint_path;   // empty: keep snapshots in memory only
  double val_fraction = 0.1;     // split by scene
  std::size_t val_sample_cap = 128;
  std::size_t val_every = 200;
};

struct TrainReport {
  std::vector<double> loss_curve;
  std::vector<std::pair<std::size_t, double>> val_curve;  // (step, loss)
  bool diverged = false;
  std::size_t steps_completed = 0;
};

using SceneMap = std::map<std::string, Scene>;

namespace detail {

struct SampleRef {
  std::size_t record = 0;
  std::size_t step = 0;  // t within the record; target is configs[t+1] - configs[t]
};

struct SampleCache {
  std::vector<SetAbstractionLayer::Prepared> robot_preps;
  std::map<std::string, SetAbstractionLayer::Prepared> scene_preps;
  std::vector<std::size_t> robot_prep_index;  // per flattened sample
};

}  // namespace detail

// Supervised training with Adam on the double-sum MSE. Point-cloud geometry
// (sampling, FPS, grouping) is weight-independent, so it is precomputed once
// per sample; only the differentiable parts rerun per step.
inline TrainReport train(GaideModel& model, const KinematicChain& chain,
                         const std::vector<PathRecord>& dataset, const SceneMap& scenes,
                         const TrainParams& params, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");

  // split scenes 90/10, stable order
  std::vector<std::string> scene_ids;
  for (const auto& [id, scene] : scenes) scene_ids.push_back(id);
  std::set<std::string> val_scenes;
  if (params.val_fraction > 0.0 && scene_ids.size() >= 2) {
    const auto stride =
        static_cast<std::size_t>(std::max(2.0, std::round(1.0 / params.val_fraction)));
    for (std::size_t i = stride - 1; i < scene_ids.size(); i += stride)
      val_scenes.insert(scene_ids[i]);
  }

  std::vector<detail::SampleRef> train_samples, val_samples;
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    const auto& rec = dataset[r];
    if (!scenes.count(rec.scene_id))
      throw std::invalid_argument("train: record references unknown scene " + rec.scene_id);
    auto& bucket = val_scenes.count(rec.scene_id) ? val_samples : train_samples;
    for (std::size_t t = 0; t + 1 < rec.configs.size(); ++t) bucket.push_back({r, t});
  }
  if (train_samples.empty()) throw std::invalid_argument("train: no training samples");
  if (val_samples.size() > params.val_sample_cap) val_samples.resize(params.val_sample_cap);

  // geometry caches
  detail::SampleCache cache;
  for (const auto& [id, scene] : scenes) {
    Rng scene_rng(Rng::derive(0x5ce5e5e5, chain_hash(chain) ^ splitmix64(std::hash<std::string>{}(id))));
    cache.scene_preps.emplace(id, prepare_scene_tokens(model, scene, scene_rng));
  }
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> robot_prep_by_sample;
  auto robot_prep_for = [&](std::size_t record, std::size_t t) -> std::size_t {
    const auto key = std::make_pair(record, t);
    auto it = robot_prep_by_sample.find(key);
    if (it != robot_prep_by_sample.end()) return it->second;
    const auto& rec = dataset[record];
    Rng cloud_rng(Rng::derive(rec.cloud_seed, t));
    const PointCloud cloud =
        sample_robot_pointcloud(chain, rec.configs[t], model.hyper.n_r, cloud_rng);
    cache.robot_preps.push_back(model.robot_sa.prepare(cloud));
    robot_prep_by_sample.emplace(key, cache.robot_preps.size() - 1);
    return cache.robot_preps.size() - 1;
  };

  auto sample_loss = [&](const detail::SampleRef& ref, const ForwardCtx& ctx) {
    const auto& rec = dataset[ref.record];
    const Config& q_t = rec.configs[ref.step];
    const Config& q_next = rec.configs[ref.step + 1];
    const Config& q_goal = rec.configs.back();
    std::vector<double> target(chain.dof());
    for (std::size_t i = 0; i < chain.dof(); ++i) target[i] = q_next[i] - q_t[i];
    const auto& robot_prep = cache.robot_preps[robot_prep_for(ref.record, ref.step)];
    const auto& scene_prep = cache.scene_preps.at(rec.scene_id);
    Tensor pred = model.forward_delta(q_t, q_goal, robot_prep, scene_prep, ctx);
    return std::make_pair(pred, Tensor::from({1, chain.dof()}, std::move(target)));
  };

  auto eval_val_loss = [&]() {
    if (val_samples.empty()) return std::numeric_limits<double>::quiet_NaN();
    ForwardCtx ctx;  // eval mode
    double acc = 0.0;
    for (const auto& ref : val_samples) {
      auto [pred, target] = sample_loss(ref, ctx);
      acc += mse_loss(pred, target).value();
    }
    return acc / static_cast<double>(val_samples.size());
  };

  NamedParams parameters = model.named_parameters();
  AdamState adam;
  TrainReport report;

  // snapshot for divergence recovery
  std::vector<std::vector<double>> snapshot;
  auto take_snapshot = [&]() {
    snapshot.clear();
    for (auto& [name, p] : parameters) snapshot.push_back(p.data());
  };
  auto restore_snapshot = [&]() {
    for (std::size_t i = 0; i < parameters.size(); ++i)
      parameters[i].second.data() = snapshot[i];
  };
  take_snapshot();

  for (std::size_t step = 0; step < params.steps; ++step) {
    Tape tape;
    double loss_value = 0.0;
    {
      TapeScope scope(tape);
      ForwardCtx ctx;
      ctx.mode = DropoutMode::kTrain;
      ctx.p = model.hyper.dropout_p;
      ctx.rng = &rng;
      std::vector<Tensor> preds, targets;
      preds.reserve(params.batch_size);
      for (std::size_t b = 0; b < params.batch_size; ++b) {
        const auto& ref = train_samples[rng.index(train_samples.size())];
        auto [pred, target] = sample_loss(ref, ctx);
        preds.push_back(pred);
        targets.push_back(target);
      }
      const Tensor loss = mse_loss(concat_rows(preds), concat_rows(targets));
      loss_value = loss.value();
      if (!std::isfinite(loss_value)) {
        restore_snapshot();
        report.diverged = true;
        report.steps_completed = step;
        return report;
      }
      zero_grads(parameters);
      tape.backward(loss);
    }
    adam_step(parameters, adam, params.lr);
    model.train_steps += 1;
    report.loss_curve.push_back(loss_value);

    if (params.val_every > 0 && (step + 1) % params.val_every == 0)
      report.val_curve.emplace_back(step + 1, eval_val_loss());
    if (params.checkpoint_every > 0 && (step + 1) % params.checkpoint_every == 0) {
      take_snapshot();
      if (!params.checkpoint_path.empty()) save_checkpoint(model, params.checkpoint_path);
    }
  }
  report.steps_completed = params.steps;
  if (!params.checkpoint_path.empty()) save_checkpoint(model, params.checkpoint_path);
  return report;
}

}  // namespace gaide
