#pragma once

#include "alpharec/corpus.hpp"
#include "alpharec/embed.hpp"
#include "alpharec/graph.hpp"
#include "alpharec/model.hpp"
#include "alpharec/types.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace alpharec {

struct RankingMetrics {
  int k = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  double hit_ratio = 0.0;
  std::int64_t n_users_evaluated = 0;
};

using TopK = std::vector<std::int32_t>;

/// Top-k indices by descending score, ties by ascending index, skipping the
/// sorted `mask`. Throws if fewer than k unmasked items exist.
TopK top_k(std::span<const float> scores, std::span<const std::int32_t> mask, int k);

/// Ranks every item by cosine similarity to `user`.
TopK rank_items(const RowVector<float>& user, const MatrixF& items, std::span<const std::int32_t> mask, int k);

/// Binary-relevance Recall/NDCG/HR@k averaged over users with a non-empty
/// relevant set. `ranked[u]` may be shorter than k.
RankingMetrics metrics_at_k(const std::vector<TopK>& ranked, const AdjacencyLists& relevant, int k);

enum class EvalTarget { validation, test };

struct EvalOptions {
  int k = 20;
  EvalTarget target = EvalTarget::test;
  /// Also hide validation items when ranking for the test set.
  bool mask_validation = false;
  int threads = 1;
};

/// Full-corpus cosine ranking of every user against every item.
std::vector<TopK> rank_all(const MatrixF& users, const MatrixF& items, const DatasetSplit& split,
                           const EvalOptions& options);

RankingMetrics evaluate_representations(const MatrixF& users, const MatrixF& items, const DatasetSplit& split,
                                        const EvalOptions& options);

/// Final representations of `model` on a split (graph and user features
/// come from split.train).
ModelOutput<float> represent(const Model<float>& model, const DatasetSplit& split, const EmbeddingMatrix* item_features,
                             bool keep_layers = false);

RankingMetrics evaluate_model(const Model<float>& model, const DatasetSplit& split,
                              const EmbeddingMatrix* item_features, const EvalOptions& options);

enum class StrategyKind { random, pop };
StrategyKind parse_strategy(std::string_view name);

std::vector<TopK> strategy_rankings(StrategyKind kind, const DatasetSplit& split, int k, std::uint64_t seed,
                                    bool mask_validation = false);
RankingMetrics strategy_baseline(StrategyKind kind, const DatasetSplit& split, int k, std::uint64_t seed,
                                 bool mask_validation = false);

/// Frozen model applied to an unseen dataset: user features and the graph
/// are rebuilt from the target's train split, nothing is trained.
RankingMetrics zero_shot_evaluate(const Model<float>& model, const DatasetSplit& target,
                                  const EmbeddingMatrix& target_features, const EvalOptions& options);

}  // namespace alpharec
