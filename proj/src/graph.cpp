#include "alpharec/graph.hpp"

#include <algorithm>

namespace alpharec {

BipartiteGraph build_graph(const AdjacencyLists& train, std::int32_t n_items) {
  BipartiteGraph g;
  const auto n_users = static_cast<std::int32_t>(train.size());
  g.user_degree.assign(n_users, 0);
  g.item_degree.assign(n_items, 0);

  g.user_items.offsets.assign(n_users + 1, 0);
  for (std::int32_t u = 0; u < n_users; ++u) {
    auto items = train[u];
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    for (auto i : items) {
      if (i < 0 || i >= n_items) throw DataError("train item index out of range");
      g.user_items.indices.push_back(i);
      ++g.item_degree[i];
    }
    g.user_degree[u] = static_cast<std::int32_t>(items.size());
    g.user_items.offsets[u + 1] = static_cast<std::int64_t>(g.user_items.indices.size());
  }

  // Transpose by counting sort; users are visited in ascending order so each
  // item's user list comes out sorted.
  g.item_users.offsets.assign(n_items + 1, 0);
  for (std::int32_t i = 0; i < n_items; ++i) g.item_users.offsets[i + 1] = g.item_users.offsets[i] + g.item_degree[i];
  g.item_users.indices.resize(g.user_items.indices.size());
  std::vector<std::int64_t> cursor(g.item_users.offsets.begin(), g.item_users.offsets.end() - 1);
  for (std::int32_t u = 0; u < n_users; ++u)
    for (auto i : g.user_items.row(u)) g.item_users.indices[cursor[i]++] = u;

  const auto inv_sqrt = [](std::int32_t d) { return d > 0 ? 1.0 / std::sqrt(static_cast<double>(d)) : 0.0; };
  g.user_inv_sqrt.resize(n_users);
  g.item_inv_sqrt.resize(n_items);
  std::transform(g.user_degree.begin(), g.user_degree.end(), g.user_inv_sqrt.begin(), inv_sqrt);
  std::transform(g.item_degree.begin(), g.item_degree.end(), g.item_inv_sqrt.begin(), inv_sqrt);
  return g;
}

}  // namespace alpharec
