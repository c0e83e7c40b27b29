#include "alpharec/intent.hpp"

#include <algorithm>

namespace alpharec {

RowVector<float> project_query(const Model<float>& model, const RowVector<float>& query) {
  if (model.config.kind == ModelKind::id) throw UsageError("ID models cannot embed intention queries");
  if (query.cols() != model.config.input_dim) {
    throw UsageError("query dim " + std::to_string(query.cols()) + " does not match model input dim " +
                     std::to_string(model.config.input_dim));
  }
  const MatrixF row = query;
  return item_layer0(model, row).row(0);
}

TopK intent_rank(const IntentContext& ctx, std::int32_t user, const RowVector<float>& intention, double alpha,
                 std::span<const std::int32_t> mask, int k) {
  const auto& out = *ctx.output;
  if (out.user_layers.empty()) throw UsageError("intent_rank needs per-layer user representations");
  const auto layers = static_cast<int>(out.user_layers.size()) - 1;
  const RowVector<float> blended = blend<float>(out.user_layers[0].row(user), intention, alpha);

  if (ctx.mode == IntentMode::layer0) {
    RowVector<float> rep = blended;
    for (int l = 1; l <= layers; ++l) rep += out.user_layers[l].row(user);
    rep /= static_cast<float>(layers + 1);
    return rank_items(rep, out.items, mask, k);
  }

  if (ctx.graph == nullptr) throw UsageError("repropagate mode needs the graph");
  MatrixF users0 = out.user_layers[0];
  users0.row(user) = blended;
  const auto fresh = multi_layer(*ctx.graph, users0, out.item_layers[0], layers);
  return rank_items(fresh.users.row(user), fresh.items, mask, k);
}

std::vector<IntentEvalCase> make_intent_cases(const DatasetSplit& split) {
  std::vector<IntentEvalCase> cases;
  for (std::int32_t u = 0; u < split.n_users; ++u) {
    if (split.test[u].empty()) continue;
    const auto t = split.test[u].front();
    cases.push_back({u, t, t});
  }
  return cases;
}

RankingMetrics intent_evaluate(const Model<float>& model, const DatasetSplit& split,
                               const EmbeddingMatrix* item_features, const EmbeddingMatrix& queries,
                               std::span<const IntentEvalCase> cases, double alpha, int k, IntentMode mode) {
  if (queries.dim() != model.config.input_dim) throw DataError("query dim does not match the model input dim");
  if (queries.rows() != split.n_items) throw DataError("query matrix must have one row per item");
  const auto output = represent(model, split, item_features, /*keep_layers=*/true);
  const auto graph = mode == IntentMode::repropagate ? build_graph(split) : BipartiteGraph{};
  const IntentContext ctx{&output, mode == IntentMode::repropagate ? &graph : nullptr, mode};

  std::vector<TopK> ranked;
  AdjacencyLists relevant;
  for (const auto& c : cases) {
    const auto& mask = split.train.at(c.user);
    if (std::binary_search(mask.begin(), mask.end(), c.target)) {
      throw DataError("intent case target " + std::to_string(c.target) + " is a train item of user " +
                      std::to_string(c.user));
    }
    if (c.query_row < 0 || c.query_row >= queries.rows()) throw DataError("intent case query row out of range");
    const auto intention = project_query(model, queries.values.row(c.query_row));
    ranked.push_back(intent_rank(ctx, c.user, intention, alpha, mask, k));
    relevant.push_back({c.target});
  }
  return metrics_at_k(ranked, relevant, k);
}

}  // namespace alpharec
