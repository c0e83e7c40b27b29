#pragma once

#include "alpharec/corpus.hpp"
#include "alpharec/types.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace alpharec {

/// Compressed sparse rows over one side of the bipartite graph.
struct CsrAdjacency {
  std::vector<std::int64_t> offsets;  // size rows+1
  std::vector<std::int32_t> indices;  // ascending within each row

  std::span<const std::int32_t> row(std::int64_t r) const {
    return {indices.data() + offsets[r], static_cast<std::size_t>(offsets[r + 1] - offsets[r])};
  }
  std::int64_t rows() const { return static_cast<std::int64_t>(offsets.size()) - 1; }
};

/// Training-interaction graph in both orientations plus symmetric
/// normalization weights 1/sqrt(|N_u|) and 1/sqrt(|N_i|).
struct BipartiteGraph {
  CsrAdjacency user_items;
  CsrAdjacency item_users;
  std::vector<std::int32_t> user_degree;
  std::vector<std::int32_t> item_degree;
  std::vector<double> user_inv_sqrt;  // 0 for isolated nodes
  std::vector<double> item_inv_sqrt;

  std::int32_t n_users() const { return static_cast<std::int32_t>(user_degree.size()); }
  std::int32_t n_items() const { return static_cast<std::int32_t>(item_degree.size()); }
  std::int64_t n_edges() const { return static_cast<std::int64_t>(user_items.indices.size()); }
};

BipartiteGraph build_graph(const AdjacencyLists& train, std::int32_t n_items);
inline BipartiteGraph build_graph(const DatasetSplit& split) { return build_graph(split.train, split.n_items); }

/// One round of symmetric-normalized neighbor aggregation:
///   users' = D_u^{-1/2} R D_i^{-1/2} items,  items' = D_i^{-1/2} R^T D_u^{-1/2} users.
/// Both outputs read only the inputs; rows reduce in ascending neighbor order.
template <typename Scalar>
void propagate(const BipartiteGraph& g, const Matrix<Scalar>& users, const Matrix<Scalar>& items,
               Matrix<Scalar>& users_out, Matrix<Scalar>& items_out) {
  if (users.rows() != g.n_users() || items.rows() != g.n_items() || users.cols() != items.cols()) {
    throw UsageError("propagate: representation shapes do not match the graph");
  }
  users_out.setZero(users.rows(), users.cols());
  items_out.setZero(items.rows(), items.cols());
  for (std::int32_t u = 0; u < g.n_users(); ++u) {
    for (auto i : g.user_items.row(u)) {
      const auto w = static_cast<Scalar>(g.user_inv_sqrt[u] * g.item_inv_sqrt[i]);
      users_out.row(u) += w * items.row(i);
    }
  }
  for (std::int32_t i = 0; i < g.n_items(); ++i) {
    for (auto u : g.item_users.row(i)) {
      const auto w = static_cast<Scalar>(g.item_inv_sqrt[i] * g.user_inv_sqrt[u]);
      items_out.row(i) += w * users.row(u);
    }
  }
}

template <typename Scalar>
struct LayerStack {
  Matrix<Scalar> users;  // mean over layers 0..K
  Matrix<Scalar> items;
  std::vector<Matrix<Scalar>> user_layers;  // [0..K], empty unless requested
  std::vector<Matrix<Scalar>> item_layers;
};

/// K rounds of propagation followed by the mean over layers 0..K.
/// The propagation operator is symmetric, so this map is self-adjoint: the
/// same call backpropagates gradients from the averaged output to layer 0.
template <typename Scalar>
LayerStack<Scalar> multi_layer(const BipartiteGraph& g, const Matrix<Scalar>& users0, const Matrix<Scalar>& items0,
                               int layers, bool keep_layers = false) {
  if (layers < 0) throw UsageError("layer count must be >= 0");
  LayerStack<Scalar> out;
  out.users = users0;
  out.items = items0;
  if (keep_layers) {
    out.user_layers.push_back(users0);
    out.item_layers.push_back(items0);
  }
  Matrix<Scalar> cur_u = users0, cur_i = items0, next_u, next_i;
  for (int k = 0; k < layers; ++k) {
    propagate(g, cur_u, cur_i, next_u, next_i);
    out.users += next_u;
    out.items += next_i;
    if (keep_layers) {
      out.user_layers.push_back(next_u);
      out.item_layers.push_back(next_i);
    }
    std::swap(cur_u, next_u);
    std::swap(cur_i, next_i);
  }
  const auto scale = Scalar(1) / static_cast<Scalar>(layers + 1);
  out.users *= scale;
  out.items *= scale;
  return out;
}

}  // namespace alpharec
