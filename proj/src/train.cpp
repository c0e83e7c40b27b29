#include "alpharec/train.hpp"

#include "alpharec/eval.hpp"

#include "json.hpp"

#include <chrono>
#include <numeric>

namespace alpharec {

std::string_view to_string(LossKind kind) { return kind == LossKind::infonce ? "infonce" : "bpr"; }

LossKind parse_loss_kind(std::string_view name) {
  if (name == "infonce") return LossKind::infonce;
  if (name == "bpr") return LossKind::bpr;
  throw UsageError("unknown loss '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(temperature > 0.0)) throw UsageError("temperature must be > 0");
  if (n_negatives < 1) throw UsageError("n_negatives must be >= 1");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (patience < 1) throw UsageError("patience must be >= 1");
  if (eval_every < 1) throw UsageError("eval_every must be >= 1");
  if (max_epochs < 1) throw UsageError("max_epochs must be >= 1");
  if (!(adam.learning_rate >= 0.0)) throw UsageError("learning rate must be >= 0");
}

std::vector<std::int32_t> sample_negatives(std::span<const std::int32_t> train_items,
                                           std::pair<std::int32_t, std::int32_t> range, int n, Rng& rng) {
  const auto [lo, hi] = range;
  const auto first = std::lower_bound(train_items.begin(), train_items.end(), lo);
  const auto last = std::lower_bound(train_items.begin(), train_items.end(), hi);
  if (hi - lo <= static_cast<std::int32_t>(last - first)) {
    throw DataError("user has interacted with every item in the negative pool");
  }
  std::vector<std::int32_t> out;
  out.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(out.size()) < n) {
    const auto j = lo + static_cast<std::int32_t>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo)));
    if (!std::binary_search(first, last, j)) out.push_back(j);
  }
  return out;
}

NegativeSampler::NegativeSampler(const AdjacencyLists& train, std::vector<std::int32_t> tag_offsets)
    : train_(&train), offsets_(std::move(tag_offsets)) {
  if (offsets_.size() < 2) throw UsageError("NegativeSampler needs at least one item range");
}

int NegativeSampler::tag_of_item(std::int32_t item) const {
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), item);
  return static_cast<int>(it - offsets_.begin()) - 1;
}

std::vector<std::int32_t> NegativeSampler::sample(std::int32_t user, int tag, int n, Rng& rng) const {
  return sample_negatives((*train_)[user], {offsets_.at(tag), offsets_.at(tag + 1)}, n, rng);
}

TrainingData TrainingData::single(DatasetSplit split, const EmbeddingMatrix* item_features) {
  TrainingData data;
  data.tag_offsets = {0, split.n_items};
  if (item_features != nullptr) {
    if (item_features->rows() != split.n_items) {
      throw DataError("item features have " + std::to_string(item_features->rows()) + " rows, split has " +
                      std::to_string(split.n_items) + " items");
    }
    data.features = item_features->values;
  }
  data.split = std::move(split);
  return data;
}

TrainingData TrainingData::mixed(const MixedDataset& mixed, std::span<const EmbeddingMatrix> item_features) {
  TrainingData data;
  data.split = mixed.combined;
  data.tag_offsets = mixed.item_offsets;
  if (!item_features.empty()) {
    if (item_features.size() != mixed.parts.size()) throw UsageError("need one feature matrix per dataset");
    const auto dim = item_features.front().dim();
    data.features.resize(mixed.combined.n_items, dim);
    for (std::size_t t = 0; t < item_features.size(); ++t) {
      const auto& f = item_features[t];
      if (f.dim() != dim) throw DataError("feature dims differ across co-training datasets");
      if (f.rows() != mixed.parts[t].n_items) throw DataError("feature rows do not match dataset item count");
      data.features.middleRows(mixed.item_offsets[t], f.rows()) = f.values;
    }
  }
  return data;
}

std::string to_json_line(const EpochRecord& record) {
  nlohmann::ordered_json j;
  j["epoch"] = record.epoch;
  j["loss"] = record.loss;
  j["recall20_val"] = record.recall20_val ? nlohmann::ordered_json(*record.recall20_val) : nlohmann::ordered_json();
  j["seconds"] = record.seconds;
  return j.dump();
}

std::vector<TrainBatch> make_epoch_batches(const TrainingData& data, const TrainConfig& config, int epoch,
                                           Rng& negative_rng) {
  const auto& train = data.split.train;
  const NegativeSampler sampler(train, data.tag_offsets);
  const auto n_tags = static_cast<int>(data.tag_offsets.size()) - 1;

  std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> pools(
      config.mixing == BatchMixing::alternate ? n_tags : 1);
  for (std::int32_t u = 0; u < data.split.n_users; ++u) {
    for (auto i : train[u]) {
      const int pool = config.mixing == BatchMixing::alternate ? sampler.tag_of_item(i) : 0;
      pools[pool].emplace_back(u, i);
    }
  }
  Rng order_rng(derive_seed(derive_seed(config.seed, "epoch-order"), static_cast<std::uint64_t>(epoch)));
  for (auto& pool : pools) order_rng.shuffle(std::span(pool));

  // Cut every pool into batches, then interleave pools round-robin.
  std::vector<std::vector<std::span<const std::pair<std::int32_t, std::int32_t>>>> chunks(pools.size());
  for (std::size_t t = 0; t < pools.size(); ++t) {
    for (std::size_t start = 0; start < pools[t].size(); start += static_cast<std::size_t>(config.batch_size)) {
      const auto len = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), pools[t].size() - start);
      chunks[t].emplace_back(pools[t].data() + start, len);
    }
  }

  const int n_neg = config.effective_negatives();
  std::vector<TrainBatch> batches;
  for (std::size_t round = 0;; ++round) {
    bool any = false;
    for (const auto& per_pool : chunks) {
      if (round >= per_pool.size()) continue;
      any = true;
      TrainBatch b;
      b.n_negatives = n_neg;
      for (const auto& [u, i] : per_pool[round]) {
        b.users.push_back(u);
        b.positives.push_back(i);
        const auto negs = sampler.sample(u, sampler.tag_of_item(i), n_neg, negative_rng);
        b.negatives.insert(b.negatives.end(), negs.begin(), negs.end());
      }
      batches.push_back(std::move(b));
    }
    if (!any) break;
  }
  return batches;
}

FitResult fit(const ModelConfig& model_config, const TrainingData& data, const TrainConfig& config,
              std::ostream* log_stream) {
  config.validate();
  if (model_config.kind != ModelKind::id && data.features.cols() != model_config.input_dim) {
    throw DataError("feature dim " + std::to_string(data.features.cols()) + " does not match model input dim " +
                    std::to_string(model_config.input_dim));
  }
  const auto graph = build_graph(data.split);
  auto model = init_model<float>(model_config, config.seed);
  AdamState<float> adam;
  Rng negative_rng(derive_seed(config.seed, "negatives"));

  FitResult result;
  result.best = model;
  result.best_recall = -1.0;
  int stale = 0;

  EvalOptions eval_options;
  eval_options.k = config.eval_k;
  eval_options.target = EvalTarget::validation;
  eval_options.threads = config.threads;

  using Clock = std::chrono::steady_clock;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = Clock::now();
    const auto batches = make_epoch_batches(data, config, epoch, negative_rng);
    double total_loss = 0.0;
    std::size_t total_pairs = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      auto step = compute_gradients(model, batches[b], data.features, data.split.train, graph, config.loss,
                                    config.temperature);
      if (!std::isfinite(step.loss)) {
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      total_loss += step.loss;
      total_pairs += batches[b].size();
      adam_step(model, step.grads, adam, config.adam);
    }
    bool finite = true;
    model.for_each_tensor([&](std::string_view, const MatrixF& t) { finite = finite && t.allFinite(); });
    if (!finite) throw TrainingDiverged("non-finite parameters after epoch " + std::to_string(epoch));

    EpochRecord record;
    record.epoch = epoch;
    record.loss = total_pairs > 0 ? total_loss / static_cast<double>(total_pairs) : 0.0;

    bool stop = false;
    if (epoch % config.eval_every == 0) {
      const auto reps = full_forward(model, data.features, data.split.train, graph, false);
      const auto metrics = evaluate_representations(reps.users, reps.items, data.split, eval_options);
      record.recall20_val = metrics.recall;
      ++result.evaluations;
      if (metrics.recall > result.best_recall) {
        result.best_recall = metrics.recall;
        result.best_epoch = epoch;
        result.best = model;
        stale = 0;
      } else if (++stale >= config.patience) {
        stop = true;
      }
    }
    record.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    if (log_stream != nullptr) *log_stream << to_json_line(record) << '\n' << std::flush;
    result.log.push_back(record);
    if (stop) break;
  }
  if (result.evaluations == 0) {
    result.best = model;
    result.best_epoch = config.max_epochs;
    result.best_recall = 0.0;
  }
  return result;
}

}  // namespace alpharec
