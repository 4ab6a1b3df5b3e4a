#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaide/tensor.hpp"

namespace gaide {

// Adjacency over the [robot tokens; workspace tokens] sequence.
// Convention: row = attending (query) token, column = attended (key) token.
// "Workspace -> robot" information flow is realized as robot queries
// attending to workspace keys.
struct StructureGraph {
  std::size_t n_robot = 0;
  std::size_t n_work = 0;
  std::vector<int> robot_link_tags;       // per robot node
  std::vector<std::uint8_t> adjacency;    // (n_robot+n_work)^2, row-major

  std::size_t size() const { return n_robot + n_work; }

  bool at(std::size_t i, std::size_t j) const { return adjacency[i * size() + j] != 0; }

  void set(std::size_t i, std::size_t j, bool v) {
    adjacency[i * size() + j] = v ? 1 : 0;
  }
};

// Undirected embodiment block over robot nodes: nodes sharing a link are
// connected, nodes on links adjacent along the kinematic chain are
// connected, and every node carries a self-loop.
inline std::vector<std::uint8_t> build_embodiment_edges(const std::vector<int>& robot_link_tags) {
  const std::size_t k = robot_link_tags.size();
  for (int tag : robot_link_tags)
    if (tag < 0)
      throw std::invalid_argument("build_embodiment_edges: negative link tag " +
                                  std::to_string(tag));
  std::vector<std::uint8_t> block(k * k, 0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const int diff = robot_link_tags[i] - robot_link_tags[j];
      block[i * k + j] = (diff >= -1 && diff <= 1) ? 1 : 0;
    }
  return block;
}

// Directed spatial structure over the combined token set: every robot row
// attends to every workspace column; workspace rows attend only to
// themselves. Self-loops everywhere keep every row alive under masking.
inline std::vector<std::uint8_t> build_spatial_edges(std::size_t n_robot, std::size_t n_work) {
  if (n_robot < 1 || n_work < 1)
    throw std::invalid_argument("build_spatial_edges: need at least one node per side");
  const std::size_t n = n_robot + n_work;
  std::vector<std::uint8_t> adj(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) adj[i * n + i] = 1;
  for (std::size_t r = 0; r < n_robot; ++r)
    for (std::size_t w = 0; w < n_work; ++w) adj[r * n + n_robot + w] = 1;
  return adj;
}

inline StructureGraph build_structure_graph(const std::vector<int>& robot_link_tags,
                                            std::size_t n_work) {
  StructureGraph g;
  g.n_robot = robot_link_tags.size();
  g.n_work = n_work;
  g.robot_link_tags = robot_link_tags;
  g.adjacency = build_spatial_edges(g.n_robot, n_work);
  const auto embodiment = build_embodiment_edges(robot_link_tags);
  const std::size_t n = g.size();
  for (std::size_t i = 0; i < g.n_robot; ++i)
    for (std::size_t j = 0; j < g.n_robot; ++j)
      if (embodiment[i * g.n_robot + j]) g.adjacency[i * n + j] = 1;
  return g;
}

// Additive attention-bias form of the adjacency: 0 where an edge permits
// attention, -inf where it forbids it.
struct AttentionBias {
  Tensor matrix;  // [n x n], entries 0 or -inf, never differentiated
};

inline AttentionBias adjacency_to_bias(const StructureGraph& graph) {
  const std::size_t n = graph.size();
  if (n == 0) throw std::invalid_argument("adjacency_to_bias: empty graph");
  Tensor b = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (graph.at(i, j)) {
        any = true;
      } else {
        b.data()[i * n + j] = kNegInf;
      }
    }
    if (!any)
      throw std::runtime_error("adjacency_to_bias: row " + std::to_string(i) +
                               " has no outgoing edge and would poison the softmax");
  }
  return AttentionBias{b};
}

// Dense 0/1 grid for debugging artifacts.
inline std::string dump_adjacency(const StructureGraph& graph) {
  std::string out;
  const std::size_t n = graph.size();
  out.reserve(n * (n + 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.push_back(graph.at(i, j) ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

}  // namespace gaide
