#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gshn/tensor.hpp"

namespace gshn {

enum class NodeKind { thing, stuff };

// Edge (i, j) means node i attends to node j (j is in N_i).
struct SceneGraph {
  Tensor X;  // n x d node features
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<NodeKind> node_kind;

  std::size_t num_nodes() const { return X.ndim() == 2 ? X.rows() : 0; }

  void validate() const {
    std::size_t n = num_nodes();
    if (n < 1) throw std::invalid_argument("SceneGraph: empty graph");
    if (node_kind.size() != n)
      throw std::invalid_argument("SceneGraph: node_kind length mismatch");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (auto [i, j] : edges) {
      if (i >= n || j >= n)
        throw std::out_of_range("SceneGraph: edge endpoint out of range");
      if (!seen.insert({i, j}).second)
        throw std::invalid_argument("SceneGraph: duplicate edge");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!seen.count({i, i}))
        throw std::invalid_argument("SceneGraph: missing self-loop on node " +
                                    std::to_string(i));
    }
  }

  void add_self_loops() {
    std::set<std::pair<std::size_t, std::size_t>> seen(edges.begin(),
                                                       edges.end());
    for (std::size_t i = 0; i < num_nodes(); ++i) {
      if (!seen.count({i, i})) edges.push_back({i, i});
    }
  }
};

// Per-target-node edge grouping used by attention normalization.
struct Neighborhoods {
  std::vector<std::vector<std::size_t>> in_edges;  // edge indices with target i

  static Neighborhoods build(const SceneGraph& g) {
    Neighborhoods nb;
    nb.in_edges.resize(g.num_nodes());
    for (std::size_t e = 0; e < g.edges.size(); ++e)
      nb.in_edges[g.edges[e].first].push_back(e);
    return nb;
  }
};

}  // namespace gshn
