#pragma once

#include "alpharec/embed.hpp"
#include "alpharec/eval.hpp"
#include "alpharec/graph.hpp"
#include "alpharec/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace alpharec {

/// One user with a single held-out target; the query row equals the target
/// item index because query files are aligned to items.
struct IntentEvalCase {
  std::int32_t user = 0;
  std::int32_t target = 0;
  std::int32_t query_row = 0;
};

/// Where the blended representation enters the frozen model.
enum class IntentMode {
  layer0,       // replace only the user's layer-0 term in the layer average
  repropagate,  // substitute the user's layer-0 row and rerun propagation
};

/// Maps a language-space query into the model space with the frozen item encoder.
RowVector<float> project_query(const Model<float>& model, const RowVector<float>& query);

/// (1 - alpha) * history + alpha * intention, alpha in [0, 1].
template <typename Scalar>
RowVector<Scalar> blend(const RowVector<Scalar>& history, const RowVector<Scalar>& intention, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
  if (history.cols() != intention.cols()) throw UsageError("blend: dimension mismatch");
  const auto a = static_cast<Scalar>(alpha);
  return (Scalar(1) - a) * history + a * intention;
}

struct IntentContext {
  const ModelOutput<float>* output = nullptr;  // must keep per-layer tensors
  const BipartiteGraph* graph = nullptr;       // required for IntentMode::repropagate
  IntentMode mode = IntentMode::layer0;
};

/// Top-k for user `u` after blending `intention` into its layer-0 term.
TopK intent_rank(const IntentContext& ctx, std::int32_t user, const RowVector<float>& intention, double alpha,
                 std::span<const std::int32_t> mask, int k);

/// One case per user with a non-empty test set; the target is the user's
/// lowest-index test item.
std::vector<IntentEvalCase> make_intent_cases(const DatasetSplit& split);

/// Single-target HR@k and NDCG@k (recall equals HR with one target).
RankingMetrics intent_evaluate(const Model<float>& model, const DatasetSplit& split,
                               const EmbeddingMatrix* item_features, const EmbeddingMatrix& queries,
                               std::span<const IntentEvalCase> cases, double alpha, int k = 5,
                               IntentMode mode = IntentMode::layer0);

}  // namespace alpharec
