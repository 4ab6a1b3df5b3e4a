#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <vector>

#include "gaide/kinematics.hpp"
#include "gaide/model.hpp"
#include "gaide/random.hpp"

namespace gaide {

// Deterministic time source. Wall-clock timing cannot reproduce byte-for-byte
// benchmark outputs, so planners charge fixed representative costs per
// elementary operation and budgets are expressed in these virtual seconds.
// Wall-clock is still measured by the benchmark harness, into a side log.
struct VirtualClock {
  static constexpr double kConfigCheckCost = 2e-5;  // one collision query
  static constexpr double kModelQueryCost = 2e-3;   // one neural forward incl. cloud prep

  double seconds = 0.0;
};

struct PlannerStats {
  std::size_t samples_drawn = 0;
  std::size_t collision_checks = 0;
  std::size_t model_queries = 0;
  bool replanning_invoked = false;
};

struct PlanResult {
  std::optional<std::vector<Config>> path;
  double planning_time = 0.0;  // virtual seconds
  double cost = 0.0;           // configuration-space length over the path
  bool success = false;
  PlannerStats stats;
};

inline double path_cost(const std::vector<Config>& path) {
  double acc = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) acc += path[i - 1].dist(path[i]);
  return acc;
}

namespace detail {

// Shared counting/charging context for one planning attempt.
struct PlanContext {
  const KinematicChain* chain = nullptr;
  const Scene* scene = nullptr;
  double resolution = 0.05;
  VirtualClock clock;
  PlannerStats stats;

  bool collides(const Config& q) {
    ++stats.collision_checks;
    clock.seconds += VirtualClock::kConfigCheckCost;
    return in_collision(*chain, *scene, q);
  }

  // Mirrors edge_collision_free's spacing rule while charging per check.
  bool edge_free(const Config& qa, const Config& qb) {
    const double length = qa.dist(qb);
    const auto steps = static_cast<std::size_t>(std::ceil(length / resolution));
    for (std::size_t k = 0; k <= steps; ++k) {
      Config q;
      if (k == 0) q = qa;
      else if (k == steps) q = qb;
      else
        q = chain->clamp_to_limits(
            lerp(qa, qb, static_cast<double>(k) / static_cast<double>(steps)));
      if (collides(q)) return false;
    }
    return true;
  }

  bool path_free(const std::vector<Config>& path) {
    for (std::size_t i = 1; i < path.size(); ++i)
      if (!edge_free(path[i - 1], path[i])) return false;
    return true;
  }
};

// Greedy lazy shortcutting: connect the earliest node to the farthest later
// node reachable by a verified straight edge; consecutive edges inherited
// from the input are kept without re-checking (they are the lazy part).
inline std::vector<Config> contract_path(
    const std::vector<Config>& path,
    const std::function<bool(const Config&, const Config&)>& edge_free) {
  if (path.size() <= 2) return path;
  std::vector<Config> out;
  out.push_back(path.front());
  std::size_t i = 0;
  while (i + 1 < path.size()) {
    std::size_t advanced = i + 1;
    for (std::size_t j = path.size() - 1; j >= i + 2; --j) {
      if (edge_free(path[i], path[j])) {
        advanced = j;
        break;
      }
    }
    out.push_back(path[advanced]);
    i = advanced;
  }
  return out;
}

}  // namespace detail

// Lazy path contraction over verified shortcut edges. Inherited consecutive
// edges are not re-verified; callers re-validate the full path when needed.
inline std::vector<Config> path_contraction(const std::vector<Config>& path,
                                            const KinematicChain& chain, const Scene& scene,
                                            double resolution) {
  return detail::contract_path(path, [&](const Config& a, const Config& b) {
    return edge_collision_free(chain, scene, a, b, resolution);
  });
}

// ---------------------------------------------------------------------------
// classical baselines
// ---------------------------------------------------------------------------

struct ClassicalParams {
  double step_size = 0.2;       // rad, per extension
  double time_budget = 1.0;     // virtual seconds
  double resolution = 0.05;     // rad, edge checking
};

namespace detail {

struct TreeNode {
  Config q;
  std::size_t parent = SIZE_MAX;
  double cost = 0.0;  // from root; maintained by RRT* only
};

inline std::size_t nearest_node(const std::vector<TreeNode>& tree, const Config& q) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const double d = tree[i].q.dist(q);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

inline Config steer(const Config& from, const Config& to, double step) {
  const double d = from.dist(to);
  if (d <= step) return to;
  return lerp(from, to, step / d);
}

inline std::vector<Config> trace_to_root(const std::vector<TreeNode>& tree, std::size_t leaf) {
  std::vector<Config> out;
  for (std::size_t i = leaf; i != SIZE_MAX; i = tree[i].parent) out.push_back(tree[i].q);
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace detail

// Bidirectional RRT (RRT-Connect): alternate extending one tree toward a
// uniform sample and greedily connecting the other tree to the new node.
inline PlanResult birrt_plan(const PlanningProblem& problem, const ClassicalParams& params,
                             Rng& rng) {
  detail::PlanContext ctx;
  ctx.chain = &problem.chain;
  ctx.scene = &problem.scene;
  ctx.resolution = params.resolution;

  PlanResult result;
  if (problem.q_start == problem.q_goal) {
    result.success = true;
    result.path = std::vector<Config>{problem.q_start};
    result.cost = 0.0;
    return result;
  }

  std::vector<detail::TreeNode> tree_a{{problem.q_start, SIZE_MAX, 0.0}};
  std::vector<detail::TreeNode> tree_b{{problem.q_goal, SIZE_MAX, 0.0}};
  bool a_rooted_at_start = true;

  auto extend = [&](std::vector<detail::TreeNode>& tree, const Config& target,
                    std::size_t* new_index) {
    const std::size_t near = detail::nearest_node(tree, target);
    const Config q_new = detail::steer(tree[near].q, target, params.step_size);
    if (!ctx.edge_free(tree[near].q, q_new)) return false;
    tree.push_back({q_new, near, 0.0});
    *new_index = tree.size() - 1;
    return true;
  };

  while (ctx.clock.seconds < params.time_budget) {
    ++ctx.stats.samples_drawn;
    const Config q_rand = problem.chain.sample_config(rng);
    std::size_t a_new = SIZE_MAX;
    if (extend(tree_a, q_rand, &a_new)) {
      // connect: repeat extensions of the other tree toward the new node
      const Config& target = tree_a[a_new].q;
      std::size_t b_new = SIZE_MAX;
      bool advanced = true;
      while (advanced && ctx.clock.seconds < params.time_budget) {
        advanced = extend(tree_b, target, &b_new);
        if (advanced && tree_b[b_new].q == target) {
          auto path_a = detail::trace_to_root(tree_a, a_new);
          auto path_b = detail::trace_to_root(tree_b, b_new);
          std::reverse(path_b.begin(), path_b.end());
          path_b.erase(path_b.begin());  // joint node appears in both traces
          path_a.insert(path_a.end(), path_b.begin(), path_b.end());
          if (!a_rooted_at_start) std::reverse(path_a.begin(), path_a.end());
          result.success = true;
          result.path = std::move(path_a);
          result.cost = path_cost(*result.path);
          result.planning_time = ctx.clock.seconds;
          result.stats = ctx.stats;
          return result;
        }
      }
    }
    std::swap(tree_a, tree_b);
    a_rooted_at_start = !a_rooted_at_start;
  }
  result.planning_time = ctx.clock.seconds;
  result.stats = ctx.stats;
  return result;
}

// Uniform sample inside the prolate hyperspheroid with foci q_start, q_goal
// and transverse diameter c_best, rejected against joint limits.
inline Config informed_sample(const Config& q_start, const Config& q_goal, double c_best,
                              const KinematicChain& chain, Rng& rng) {
  const std::size_t n = q_start.size();
  const double c_min = q_start.dist(q_goal);
  if (c_best < c_min)
    throw std::invalid_argument("informed_sample: c_best " + std::to_string(c_best) +
                                " below the focal distance " + std::to_string(c_min));
  // rotation-to-world: first column along the transverse axis, completed to
  // an orthonormal basis by Gram-Schmidt over the standard basis
  std::vector<std::vector<double>> basis;
  if (c_min > 1e-12) {
    std::vector<double> a1(n);
    for (std::size_t i = 0; i < n; ++i) a1[i] = (q_goal[i] - q_start[i]) / c_min;
    basis.push_back(a1);
  }
  for (std::size_t e = 0; e < n && basis.size() < n; ++e) {
    std::vector<double> v(n, 0.0);
    v[e] = 1.0;
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += v[i] * b[i];
      for (std::size_t i = 0; i < n; ++i) v[i] -= dot * b[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 1e-8) {
      for (auto& x : v) x /= norm;
      basis.push_back(std::move(v));
    }
  }

  std::vector<double> radii(n, 0.0);
  radii[0] = c_best / 2.0;
  const double r_rest = std::sqrt(std::max(0.0, c_best * c_best - c_min * c_min)) / 2.0;
  for (std::size_t i = 1; i < n; ++i) radii[i] = r_rest;

  for (int attempt = 0; attempt < 1024; ++attempt) {
    // uniform point in the unit n-ball
    std::vector<double> u(n);
    double norm = 0.0;
    for (auto& x : u) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) continue;
    const double radius_frac = std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
    for (auto& x : u) x = x / norm * radius_frac;

    Config q;
    q.q.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      q[i] = (q_start[i] + q_goal[i]) / 2.0;
      for (std::size_t b = 0; b < basis.size(); ++b) q[i] += basis[b][i] * radii[b] * u[b];
    }
    if (chain.within_limits(q)) return q;
  }
  // the spheroid barely intersects the limit box; fall back to its center
  Config center;
  center.q.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) center[i] = (q_start[i] + q_goal[i]) / 2.0;
  return chain.clamp_to_limits(center);
}

namespace detail {

// RRT* / Informed RRT* share everything except the sampling rule.
inline PlanResult rrt_star_impl(const PlanningProblem& problem, const ClassicalParams& params,
                                Rng& rng, bool informed, std::vector<double>* best_cost_trace) {
  PlanContext ctx;
  ctx.chain = &problem.chain;
  ctx.scene = &problem.scene;
  ctx.resolution = params.resolution;

  const std::size_t dim = problem.chain.dof();
  // gamma = 2 ((1 + 1/d) mu_free / zeta_d)^(1/d), with mu_free the limit-box
  // volume and zeta_d the unit-ball volume; near radius additionally capped
  // at 4 * step_size
  double mu_free = 1.0;
  for (const auto& j : problem.chain.joints) mu_free *= j.limits.upper - j.limits.lower;
  const double zeta_d = std::pow(M_PI, dim / 2.0) / std::tgamma(dim / 2.0 + 1.0);
  const double gamma =
      2.0 * std::pow((1.0 + 1.0 / static_cast<double>(dim)) * mu_free / zeta_d,
                     1.0 / static_cast<double>(dim));

  std::vector<TreeNode> tree{{problem.q_start, SIZE_MAX, 0.0}};
  std::vector<std::vector<std::size_t>> children{{}};
  std::size_t best_goal_parent = SIZE_MAX;
  double best_cost = std::numeric_limits<double>::infinity();

  auto update_subtree_costs = [&](std::size_t root) {
    std::queue<std::size_t> work;
    work.push(root);
    while (!work.empty()) {
      const std::size_t i = work.front();
      work.pop();
      for (std::size_t c : children[i]) {
        tree[c].cost = tree[i].cost + tree[i].q.dist(tree[c].q);
        work.push(c);
      }
    }
  };

  PlanResult result;
  while (ctx.clock.seconds < params.time_budget) {
    ++ctx.stats.samples_drawn;
    Config q_rand;
    if (informed && best_goal_parent != SIZE_MAX)
      q_rand = informed_sample(problem.q_start, problem.q_goal, best_cost, problem.chain, rng);
    else
      q_rand = problem.chain.sample_config(rng);

    const std::size_t near_idx = nearest_node(tree, q_rand);
    const Config q_new = steer(tree[near_idx].q, q_rand, params.step_size);
    if (!ctx.edge_free(tree[near_idx].q, q_new)) {
      if (best_cost_trace) best_cost_trace->push_back(best_cost);
      continue;
    }

    const double n_nodes = static_cast<double>(tree.size());
    const double r_n = std::min(
        gamma * std::pow(std::log(n_nodes + 1.0) / (n_nodes + 1.0), 1.0 / static_cast<double>(dim)),
        4.0 * params.step_size);

    std::vector<std::size_t> near_set;
    for (std::size_t i = 0; i < tree.size(); ++i)
      if (tree[i].q.dist(q_new) <= r_n) near_set.push_back(i);

    // choose parent
    std::size_t parent = near_idx;
    double new_cost = tree[near_idx].cost + tree[near_idx].q.dist(q_new);
    for (std::size_t i : near_set) {
      const double c = tree[i].cost + tree[i].q.dist(q_new);
      if (c < new_cost && ctx.edge_free(tree[i].q, q_new)) {
        parent = i;
        new_cost = c;
      }
    }
    tree.push_back({q_new, parent, new_cost});
    children.emplace_back();
    children[parent].push_back(tree.size() - 1);
    const std::size_t new_idx = tree.size() - 1;

    // rewire
    for (std::size_t i : near_set) {
      const double through = new_cost + q_new.dist(tree[i].q);
      if (through + 1e-12 < tree[i].cost && ctx.edge_free(q_new, tree[i].q)) {
        auto& old_children = children[tree[i].parent];
        old_children.erase(std::find(old_children.begin(), old_children.end(), i));
        tree[i].parent = new_idx;
        tree[i].cost = through;
        children[new_idx].push_back(i);
        update_subtree_costs(i);
        if (best_goal_parent != SIZE_MAX) {
          // goal connection cost may have improved through the rewire
          best_cost = tree[best_goal_parent].cost +
                      tree[best_goal_parent].q.dist(problem.q_goal);
        }
      }
    }

    // try the goal connection
    if (q_new.dist(problem.q_goal) <= params.step_size &&
        new_cost + q_new.dist(problem.q_goal) < best_cost &&
        ctx.edge_free(q_new, problem.q_goal)) {
      best_goal_parent = new_idx;
      best_cost = new_cost + q_new.dist(problem.q_goal);
    }
    if (best_cost_trace) best_cost_trace->push_back(best_cost);
  }

  result.planning_time = ctx.clock.seconds;
  result.stats = ctx.stats;
  if (best_goal_parent != SIZE_MAX) {
    auto path = trace_to_root(tree, best_goal_parent);
    path.push_back(problem.q_goal);
    result.success = true;
    result.cost = path_cost(path);
    result.path = std::move(path);
  }
  return result;
}

}  // namespace detail

inline PlanResult rrt_star_plan(const PlanningProblem& problem, const ClassicalParams& params,
                                Rng& rng, std::vector<double>* best_cost_trace = nullptr) {
  return detail::rrt_star_impl(problem, params, rng, false, best_cost_trace);
}

inline PlanResult irrt_star_plan(const PlanningProblem& problem, const ClassicalParams& params,
                                 Rng& rng, std::vector<double>* best_cost_trace = nullptr) {
  return detail::rrt_star_impl(problem, params, rng, true, best_cost_trace);
}

// ---------------------------------------------------------------------------
// neural bidirectional planner
// ---------------------------------------------------------------------------

struct NeuralParams {
  std::size_t steps = 150;          // outer iterations of the bidirectional loop
  double max_step_norm = 0.5;       // rad, per-extension clamp
  double resolution = 0.05;
  bool stochastic = true;
  std::size_t replan_steps = 40;    // neural budget per colliding edge
  double replan_birrt_budget = 0.5; // virtual seconds for the classical fallback
  double birrt_step_size = 0.2;
};

namespace detail {

// delta proposal: (current end, other tree end, rng) -> raw delta
using DeltaSampler = std::function<std::vector<double>(const Config&, const Config&, Rng&)>;

inline Config apply_delta(const KinematicChain& chain, const Config& q,
                          const std::vector<double>& delta, double max_norm) {
  double norm = 0.0;
  for (double d : delta) norm += d * d;
  norm = std::sqrt(norm);
  const double scale_factor = norm > max_norm ? max_norm / norm : 1.0;
  Config out = q;
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = q[i] + delta[i] * scale_factor;
  return chain.clamp_to_limits(out);
}

// Algorithm core shared by the neural sampler and the uniform-random
// baseline: grow two node chains toward each other with sampled deltas,
// testing a straight connection between the ends every iteration. The
// pseudocode's immediate empty return on a failed connection would make its
// own loop unreachable; iterating until the step budget is spent is the
// reading implemented here.
inline PlanResult bidirectional_delta_plan(const PlanningProblem& problem,
                                           const DeltaSampler& sampler,
                                           const NeuralParams& params, Rng& rng,
                                           const GaideModel* replan_model,
                                           const SetAbstractionLayer::Prepared* scene_prep,
                                           bool allow_replanning);

inline std::optional<std::vector<Config>> replan_segments(
    const std::vector<Config>& path, const PlanningProblem& problem, const NeuralParams& params,
    Rng& rng, const GaideModel* model, const SetAbstractionLayer::Prepared* scene_prep,
    PlanContext& ctx) {
  // lazy states removal: interior vertices were never collision checked
  // during tree growth; drop the colliding ones before repairing edges
  std::vector<Config> pruned{path.front()};
  for (std::size_t i = 1; i + 1 < path.size(); ++i)
    if (!ctx.collides(path[i])) pruned.push_back(path[i]);
  pruned.push_back(path.back());

  std::vector<Config> out{pruned.front()};
  for (std::size_t i = 1; i < pruned.size(); ++i) {
    const Config& a = pruned[i - 1];
    const Config& b = pruned[i];
    if (ctx.edge_free(a, b)) {
      out.push_back(b);
      continue;
    }
    ctx.stats.replanning_invoked = true;
    PlanningProblem segment = problem;
    segment.q_start = a;
    segment.q_goal = b;

    std::optional<std::vector<Config>> repaired;
    if (model) {
      NeuralParams sub = params;
      sub.steps = params.replan_steps;
      DeltaSampler neural = [&](const Config& cur, const Config& other, Rng& r) {
        SamplerInput input;
        input.q_t = cur;
        input.q_goal = other;
        Rng cloud_rng(Rng::derive(0x9e3779b9, r.next_u64()));
        const PointCloud robot_cloud =
            sample_robot_pointcloud(problem.chain, cur, model->hyper.n_r, cloud_rng);
        const auto robot_prep = model->robot_sa.prepare(robot_cloud);
        ForwardCtx fctx;
        fctx.mode = params.stochastic ? DropoutMode::kStochasticInfer : DropoutMode::kEval;
        fctx.p = params.stochastic ? model->hyper.dropout_p : 0.0;
        fctx.rng = &r;
        ctx.stats.model_queries++;
        ctx.clock.seconds += VirtualClock::kModelQueryCost;
        return model->forward_delta(cur, other, robot_prep, *scene_prep, fctx).data();
      };
      PlanResult sub_result = bidirectional_delta_plan(segment, neural, sub, rng, nullptr,
                                                       scene_prep, false);
      ctx.clock.seconds += sub_result.planning_time;
      ctx.stats.collision_checks += sub_result.stats.collision_checks;
      ctx.stats.model_queries += sub_result.stats.model_queries;
      if (sub_result.success) repaired = std::move(sub_result.path);
    }
    if (!repaired) {
      ClassicalParams fallback;
      fallback.step_size = params.birrt_step_size;
      fallback.time_budget = params.replan_birrt_budget;
      fallback.resolution = params.resolution;
      PlanResult sub_result = birrt_plan(segment, fallback, rng);
      ctx.clock.seconds += sub_result.planning_time;
      ctx.stats.collision_checks += sub_result.stats.collision_checks;
      if (sub_result.success) repaired = std::move(sub_result.path);
    }
    if (!repaired) return std::nullopt;  // segment unplannable within budgets
    out.insert(out.end(), repaired->begin() + 1, repaired->end());
  }
  return out;
}

inline PlanResult bidirectional_delta_plan(const PlanningProblem& problem,
                                           const DeltaSampler& sampler,
                                           const NeuralParams& params, Rng& rng,
                                           const GaideModel* replan_model,
                                           const SetAbstractionLayer::Prepared* scene_prep,
                                           bool allow_replanning) {
  PlanContext ctx;
  ctx.chain = &problem.chain;
  ctx.scene = &problem.scene;
  ctx.resolution = params.resolution;

  PlanResult result;
  std::vector<Config> chain_a{problem.q_start};
  std::vector<Config> chain_b{problem.q_goal};
  bool a_rooted_at_start = true;
  bool complete = false;

  for (std::size_t i = 0; i < params.steps; ++i) {
    ++ctx.stats.samples_drawn;
    const std::vector<double> delta = sampler(chain_a.back(), chain_b.back(), rng);
    // lazy insertion: vertices are not collision checked here; the repair
    // pass prunes colliding ones after a connection is found
    chain_a.push_back(apply_delta(problem.chain, chain_a.back(), delta, params.max_step_norm));
    if (ctx.edge_free(chain_a.back(), chain_b.back())) {
      complete = true;
      break;
    }
    std::swap(chain_a, chain_b);
    a_rooted_at_start = !a_rooted_at_start;
  }

  result.planning_time = ctx.clock.seconds;
  result.stats = ctx.stats;
  if (!complete) return result;

  std::vector<Config> raw = chain_a;
  raw.insert(raw.end(), chain_b.rbegin(), chain_b.rend());
  if (!a_rooted_at_start) std::reverse(raw.begin(), raw.end());

  // lazy states removal before contraction
  std::vector<Config> path{raw.front()};
  for (std::size_t i = 1; i + 1 < raw.size(); ++i)
    if (!ctx.collides(raw[i])) path.push_back(raw[i]);
  path.push_back(raw.back());

  auto counted_edge_free = [&ctx](const Config& a, const Config& b) {
    return ctx.edge_free(a, b);
  };
  path = contract_path(path, counted_edge_free);
  if (!ctx.path_free(path)) {
    if (!allow_replanning) {
      result.planning_time = ctx.clock.seconds;
      result.stats = ctx.stats;
      return result;
    }
    auto repaired =
        replan_segments(path, problem, params, rng, replan_model, scene_prep, ctx);
    if (!repaired) {
      result.planning_time = ctx.clock.seconds;
      result.stats = ctx.stats;
      return result;
    }
    path = contract_path(*repaired, counted_edge_free);
    if (!ctx.path_free(path)) {
      result.planning_time = ctx.clock.seconds;
      result.stats = ctx.stats;
      return result;
    }
  }

  result.success = true;
  result.cost = path_cost(path);
  result.path = std::move(path);
  result.planning_time = ctx.clock.seconds;
  result.stats = ctx.stats;
  return result;
}

}  // namespace detail

// Neural bidirectional planning: grow both chains with model-proposed deltas,
// connect by interpolation, lazily contract, collision check, and replan
// colliding segments (neural first, Bi-RRT fallback).
inline PlanResult neural_plan(const PlanningProblem& problem, const GaideModel& model,
                              const SetAbstractionLayer::Prepared& scene_prep,
                              const NeuralParams& params, Rng& rng) {
  if (model.hyper.dof != problem.chain.dof())
    throw std::invalid_argument("neural_plan: model expects " +
                                std::to_string(model.hyper.dof) + "-DOF chains, problem has " +
                                std::to_string(problem.chain.dof()));
  std::size_t queries = 0;
  double query_time = 0.0;
  detail::DeltaSampler sampler = [&](const Config& cur, const Config& other, Rng& r) {
    Rng cloud_rng(Rng::derive(0x517cc1b7, r.next_u64()));
    const PointCloud robot_cloud =
        sample_robot_pointcloud(problem.chain, cur, model.hyper.n_r, cloud_rng);
    const auto robot_prep = model.robot_sa.prepare(robot_cloud);
    ForwardCtx fctx;
    fctx.mode = params.stochastic ? DropoutMode::kStochasticInfer : DropoutMode::kEval;
    fctx.p = params.stochastic ? model.hyper.dropout_p : 0.0;
    fctx.rng = &r;
    ++queries;
    query_time += VirtualClock::kModelQueryCost;
    return model.forward_delta(cur, other, robot_prep, scene_prep, fctx).data();
  };
  PlanResult result = detail::bidirectional_delta_plan(problem, sampler, params, rng, &model,
                                                       &scene_prep, true);
  result.stats.model_queries += queries;
  result.planning_time += query_time;
  return result;
}

// Prepares the cached workspace tokens for a scene. Scenes without obstacles
// (or with fewer points than centroids) are padded so the model always sees a
// full workspace token set.
inline SetAbstractionLayer::Prepared prepare_scene_tokens(const GaideModel& model,
                                                          const Scene& scene, Rng& rng) {
  PointCloud cloud = sample_scene_pointcloud(scene, model.hyper.n_w, rng);
  if (cloud.size() == 0) cloud.points.push_back(scene.bounds.max);
  while (cloud.size() < model.hyper.k_w)
    cloud.points.push_back(cloud.points[cloud.size() % cloud.points.size()]);
  return model.scene_sa.prepare(cloud);
}

inline PlanResult neural_plan(const PlanningProblem& problem, const GaideModel& model,
                              const NeuralParams& params, Rng& rng) {
  Rng scene_rng(Rng::derive(0x2545f491, 7));
  const auto scene_prep = prepare_scene_tokens(model, problem.scene, scene_rng);
  return neural_plan(problem, model, scene_prep, params, rng);
}

// Uniform-random baseline for the same bidirectional algorithm: directions
// uniform on the sphere, fixed step magnitude, no replanning model.
inline PlanResult random_delta_plan(const PlanningProblem& problem, double magnitude,
                                    const NeuralParams& params, Rng& rng) {
  const std::size_t n = problem.chain.dof();
  detail::DeltaSampler sampler = [magnitude, n](const Config&, const Config&, Rng& r) {
    std::vector<double> d(n);
    double norm = 0.0;
    for (auto& x : d) {
      x = r.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : d) x = norm > 1e-12 ? x / norm * magnitude : 0.0;
    return d;
  };
  return detail::bidirectional_delta_plan(problem, sampler, params, rng, nullptr, nullptr,
                                          true);
}

// Local repair entry point; exposed for testing and reuse. Returns the
// repaired path or nullopt when a segment cannot be replanned.
inline std::optional<std::vector<Config>> replanning(const std::vector<Config>& path,
                                                     const GaideModel* model,
                                                     const SetAbstractionLayer::Prepared* scene_prep,
                                                     const PlanningProblem& problem,
                                                     const NeuralParams& params, Rng& rng) {
  detail::PlanContext ctx;
  ctx.chain = &problem.chain;
  ctx.scene = &problem.scene;
  ctx.resolution = params.resolution;
  return detail::replan_segments(path, problem, params, rng, model, scene_prep, ctx);
}

// Success-path re-validation used by tests and the benchmark harness.
inline bool validate_result(const PlanningProblem& problem, const PlanResult& result,
                            double resolution, double cost_tol = 1e-9) {
  if (!result.success) return !result.path.has_value();
  if (!result.path || result.path->empty()) return false;
  const auto& path = *result.path;
  if (!(path.front() == problem.q_start) || !(path.back() == problem.q_goal)) return false;
  for (std::size_t i = 1; i < path.size(); ++i)
    if (!edge_collision_free(problem.chain, problem.scene, path[i - 1], path[i], resolution))
      return false;
  return std::fabs(path_cost(path) - result.cost) <= cost_tol;
}

}  // namespace gaide
