#include "alpharec/eval.hpp"

#include "alpharec/parallel.hpp"
#include "alpharec/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace alpharec {

TopK top_k(std::span<const float> scores, std::span<const std::int32_t> mask, int k) {
  if (k < 0) throw UsageError("k must be non-negative");
  std::vector<std::int32_t> candidates;
  candidates.reserve(scores.size());
  auto m = mask.begin();
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(scores.size()); ++i) {
    while (m != mask.end() && *m < i) ++m;
    if (m != mask.end() && *m == i) continue;
    candidates.push_back(i);
  }
  if (static_cast<std::size_t>(k) > candidates.size()) {
    throw UsageError("k=" + std::to_string(k) + " exceeds the " + std::to_string(candidates.size()) + " rankable items");
  }
  const auto better = [&](std::int32_t a, std::int32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(), better);
  candidates.resize(static_cast<std::size_t>(k));
  return candidates;
}

TopK rank_items(const RowVector<float>& user, const MatrixF& items, std::span<const std::int32_t> mask, int k) {
  if (user.cols() != items.cols()) throw UsageError("rank_items: dimension mismatch");
  const float un = user.norm();
  std::vector<float> scores(static_cast<std::size_t>(items.rows()), 0.0f);
  for (Index i = 0; i < items.rows(); ++i) {
    const float denom = un * items.row(i).norm();
    scores[i] = denom > 0.0f ? user.dot(items.row(i)) / denom : 0.0f;
  }
  return top_k(scores, mask, k);
}

RankingMetrics metrics_at_k(const std::vector<TopK>& ranked, const AdjacencyLists& relevant, int k) {
  if (ranked.size() != relevant.size()) throw UsageError("metrics_at_k: ranking/relevant user count mismatch");
  RankingMetrics out;
  out.k = k;
  double recall = 0.0, ndcg = 0.0, hits_any = 0.0;
  for (std::size_t u = 0; u < ranked.size(); ++u) {
    const auto& rel = relevant[u];
    if (rel.empty()) continue;
    ++out.n_users_evaluated;
    const auto depth = std::min<std::size_t>(ranked[u].size(), static_cast<std::size_t>(k));
    int hits = 0;
    double dcg = 0.0;
    for (std::size_t r = 0; r < depth; ++r) {
      if (std::binary_search(rel.begin(), rel.end(), ranked[u][r])) {
        ++hits;
        dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
      }
    }
    double idcg = 0.0;
    const auto ideal = std::min<std::size_t>(rel.size(), static_cast<std::size_t>(k));
    for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    recall += static_cast<double>(hits) / static_cast<double>(rel.size());
    ndcg += idcg > 0.0 ? dcg / idcg : 0.0;
    hits_any += hits > 0 ? 1.0 : 0.0;
  }
  if (out.n_users_evaluated > 0) {
    const auto n = static_cast<double>(out.n_users_evaluated);
    out.recall = recall / n;
    out.ndcg = ndcg / n;
    out.hit_ratio = hits_any / n;
  }
  return out;
}

namespace {

const AdjacencyLists& relevant_sets(const DatasetSplit& split, EvalTarget target) {
  return target == EvalTarget::test ? split.test : split.validation;
}

std::vector<std::int32_t> user_mask(const DatasetSplit& split, std::int32_t u, bool with_validation) {
  if (!with_validation) return split.train[u];
  std::vector<std::int32_t> mask;
  std::merge(split.train[u].begin(), split.train[u].end(), split.validation[u].begin(), split.validation[u].end(),
             std::back_inserter(mask));
  return mask;
}

}  // namespace

std::vector<TopK> rank_all(const MatrixF& users, const MatrixF& items, const DatasetSplit& split,
                           const EvalOptions& options) {
  if (users.rows() != split.n_users || items.rows() != split.n_items || users.cols() != items.cols()) {
    throw UsageError("rank_all: representation shapes do not match the split");
  }
  const MatrixF user_hat = normalize_rows(users);
  const MatrixF item_hat = normalize_rows(items);
  const auto& relevant = relevant_sets(split, options.target);
  const bool with_val = options.target == EvalTarget::test && options.mask_validation;

  std::vector<TopK> ranked(static_cast<std::size_t>(split.n_users));
  parallel_for(split.n_users, options.threads, [&](std::int64_t begin, std::int64_t end) {
    std::vector<float> scores(static_cast<std::size_t>(split.n_items));
    Eigen::Map<RowVector<float>> score_row(scores.data(), split.n_items);
    for (auto u = begin; u < end; ++u) {
      if (relevant[u].empty()) continue;
      score_row.noalias() = user_hat.row(u) * item_hat.transpose();
      const auto mask = user_mask(split, static_cast<std::int32_t>(u), with_val);
      const auto rankable = static_cast<int>(split.n_items - static_cast<std::int32_t>(mask.size()));
      ranked[u] = top_k(scores, mask, std::min(options.k, rankable));
    }
  });
  return ranked;
}

RankingMetrics evaluate_representations(const MatrixF& users, const MatrixF& items, const DatasetSplit& split,
                                        const EvalOptions& options) {
  return metrics_at_k(rank_all(users, items, split, options), relevant_sets(split, options.target), options.k);
}

ModelOutput<float> represent(const Model<float>& model, const DatasetSplit& split, const EmbeddingMatrix* item_features,
                             bool keep_layers) {
  const auto g = build_graph(split);
  MatrixF features;
  if (model.config.kind != ModelKind::id) {
    if (item_features == nullptr) throw UsageError("this model needs item features");
    if (item_features->dim() != model.config.input_dim) {
      throw DataError("item features have dim " + std::to_string(item_features->dim()) + " but the model expects " +
                      std::to_string(model.config.input_dim));
    }
    if (item_features->rows() != split.n_items) {
      throw DataError("item features have " + std::to_string(item_features->rows()) + " rows but the split has " +
                      std::to_string(split.n_items) + " items");
    }
    features = item_features->values;
  } else if (model.user_table.rows() != split.n_users || model.item_table.rows() != split.n_items) {
    throw DataError("ID model tables do not match the split's user/item counts");
  }
  return full_forward(model, features, split.train, g, keep_layers);
}

RankingMetrics evaluate_model(const Model<float>& model, const DatasetSplit& split,
                              const EmbeddingMatrix* item_features, const EvalOptions& options) {
  const auto out = represent(model, split, item_features);
  return evaluate_representations(out.users, out.items, split, options);
}

StrategyKind parse_strategy(std::string_view name) {
  if (name == "random") return StrategyKind::random;
  if (name == "pop") return StrategyKind::pop;
  throw UsageError("unknown baseline kind '" + std::string(name) + "'");
}

std::vector<TopK> strategy_rankings(StrategyKind kind, const DatasetSplit& split, int k, std::uint64_t seed,
                                    bool mask_validation) {
  std::vector<TopK> ranked(static_cast<std::size_t>(split.n_users));
  if (kind == StrategyKind::pop) {
    std::vector<std::int64_t> count(static_cast<std::size_t>(split.n_items), 0);
    for (const auto& items : split.train)
      for (auto i : items) ++count[i];
    std::vector<std::int32_t> order(static_cast<std::size_t>(split.n_items));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return count[a] > count[b]; });
    for (std::int32_t u = 0; u < split.n_users; ++u) {
      const auto mask = user_mask(split, u, mask_validation);
      for (auto i : order) {
        if (static_cast<int>(ranked[u].size()) == k) break;
        if (!std::binary_search(mask.begin(), mask.end(), i)) ranked[u].push_back(i);
      }
    }
    return ranked;
  }
  for (std::int32_t u = 0; u < split.n_users; ++u) {
    const auto mask = user_mask(split, u, mask_validation);
    std::vector<std::int32_t> pool;
    for (std::int32_t i = 0; i < split.n_items; ++i)
      if (!std::binary_search(mask.begin(), mask.end(), i)) pool.push_back(i);
    Rng rng(derive_seed(derive_seed(seed, "random-baseline"), static_cast<std::uint64_t>(u)));
    const auto take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(k));
    for (std::size_t r = 0; r < take; ++r) std::swap(pool[r], pool[r + rng.uniform_index(pool.size() - r)]);
    ranked[u].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return ranked;
}

RankingMetrics strategy_baseline(StrategyKind kind, const DatasetSplit& split, int k, std::uint64_t seed,
                                 bool mask_validation) {
  return metrics_at_k(strategy_rankings(kind, split, k, seed, mask_validation), split.test, k);
}

RankingMetrics zero_shot_evaluate(const Model<float>& model, const DatasetSplit& target,
                                  const EmbeddingMatrix& target_features, const EvalOptions& options) {
  if (model.config.kind == ModelKind::id) throw UsageError("ID models cannot transfer to unseen items");
  if (target_features.dim() != model.config.input_dim) {
    throw DataError("target features have dim " + std::to_string(target_features.dim()) + ", model expects " +
                     std::to_string(model.config.input_dim));
  }
  return evaluate_model(model, target, &target_features, options);
}

}  // namespace alpharec
