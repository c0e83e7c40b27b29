#pragma once

#include "alpharec/corpus.hpp"
#include "alpharec/embed.hpp"
#include "alpharec/graph.hpp"
#include "alpharec/model.hpp"
#include "alpharec/rng.hpp"
#include "alpharec/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace alpharec {

enum class LossKind { infonce, bpr };
std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

/// How co-training batches draw positives from several datasets.
enum class BatchMixing { pooled, alternate };

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double temperature = 0.15;
  int n_negatives = 256;  // forced to 1 for BPR
  int batch_size = 1024;
  AdamConfig adam;
  int max_epochs = 1000;
  int eval_every = 1;
  int patience = 20;
  int eval_k = 20;
  LossKind loss = LossKind::infonce;
  BatchMixing mixing = BatchMixing::pooled;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
  int effective_negatives() const { return loss == LossKind::bpr ? 1 : n_negatives; }
};

/// Positive pairs with `n_negatives` sampled items each, stored row-major.
struct TrainBatch {
  std::vector<std::int32_t> users;
  std::vector<std::int32_t> positives;
  std::vector<std::int32_t> negatives;
  int n_negatives = 0;

  std::size_t size() const { return users.size(); }
  std::span<const std::int32_t> negatives_of(std::size_t p) const {
    return {negatives.data() + p * static_cast<std::size_t>(n_negatives), static_cast<std::size_t>(n_negatives)};
  }
};

/// Draws `n` items uniformly with replacement from [range.first, range.second),
/// rejecting anything in the sorted `train_items`.
std::vector<std::int32_t> sample_negatives(std::span<const std::int32_t> train_items,
                                           std::pair<std::int32_t, std::int32_t> range, int n, Rng& rng);

/// Negative pools per dataset tag; a single-dataset run has one tag.
class NegativeSampler {
 public:
  NegativeSampler(const AdjacencyLists& train, std::vector<std::int32_t> tag_offsets);

  int tag_of_item(std::int32_t item) const;
  std::vector<std::int32_t> sample(std::int32_t user, int tag, int n, Rng& rng) const;

 private:
  const AdjacencyLists* train_;
  std::vector<std::int32_t> offsets_;
};

template <typename Scalar>
struct LossResult {
  double value = 0.0;
  Matrix<Scalar> grad;  // d loss / d similarity, same shape as the input
};

/// Sampled-softmax contrastive loss summed over rows; column 0 of each row
/// holds the positive similarity, the rest the negatives.
template <typename Scalar>
LossResult<Scalar> infonce_loss(const Matrix<Scalar>& sims, double temperature, bool with_grad = true) {
  if (!(temperature > 0.0)) throw UsageError("temperature must be positive");
  if (sims.cols() < 2) throw UsageError("infonce_loss needs at least one negative per positive");
  LossResult<Scalar> out;
  if (with_grad) out.grad.resize(sims.rows(), sims.cols());
  std::vector<double> z(static_cast<std::size_t>(sims.cols()));
  for (Index p = 0; p < sims.rows(); ++p) {
    double zmax = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < sims.cols(); ++c) {
      z[c] = static_cast<double>(sims(p, c)) / temperature;
      zmax = std::max(zmax, z[c]);
    }
    double denom = 0.0, others = 0.0;
    for (Index c = 0; c < sims.cols(); ++c) {
      const double e = std::exp(z[c] - zmax);
      denom += e;
      if (c > 0) others += std::exp(z[c] - z[0]);
    }
    // -log softmax_0; log1p keeps precision when the positive dominates.
    out.value += z[0] >= zmax ? std::log1p(others) : (zmax - z[0]) + std::log(denom);
    if (with_grad) {
      for (Index c = 0; c < sims.cols(); ++c) {
        const double softmax = std::exp(z[c] - zmax) / denom;
        out.grad(p, c) = static_cast<Scalar>((softmax - (c == 0 ? 1.0 : 0.0)) / temperature);
      }
    }
  }
  return out;
}

/// -sum log sigmoid(s_pos - s_neg) with exactly one negative per row.
template <typename Scalar>
LossResult<Scalar> bpr_loss(const Matrix<Scalar>& sims, bool with_grad = true) {
  if (sims.cols() != 2) throw UsageError("bpr_loss takes exactly one negative per positive");
  LossResult<Scalar> out;
  if (with_grad) out.grad.resize(sims.rows(), 2);
  for (Index p = 0; p < sims.rows(); ++p) {
    const double d = static_cast<double>(sims(p, 0)) - static_cast<double>(sims(p, 1));
    out.value += d > 0 ? std::log1p(std::exp(-d)) : -d + std::log1p(std::exp(d));
    if (with_grad) {
      const double sig_neg = d > 0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));  // sigmoid(-d)
      out.grad(p, 0) = static_cast<Scalar>(-sig_neg);
      out.grad(p, 1) = static_cast<Scalar>(sig_neg);
    }
  }
  return out;
}

template <typename Scalar>
struct GradientResult {
  double loss = 0.0;
  Model<Scalar> grads;
};

/// Loss of one batch and, optionally, its exact gradient with respect to
/// every trainable tensor. The backward pass runs through cosine scoring,
/// layer averaging, propagation, user averaging and the item encoder.
template <typename Scalar>
GradientResult<Scalar> compute_gradients(const Model<Scalar>& model, const TrainBatch& batch,
                                         const Matrix<Scalar>& features, const AdjacencyLists& train,
                                         const BipartiteGraph& graph, LossKind loss_kind, double temperature,
                                         bool with_grad = true) {
  constexpr Scalar kNormFloor = Scalar(1e-12);
  const auto& cfg = model.config;

  Matrix<Scalar> hidden;
  Matrix<Scalar> items0;
  if (cfg.kind == ModelKind::alpharec) {
    hidden = mlp_hidden(model, features);
    items0 = mlp_output(model, hidden);
  } else {
    items0 = item_layer0(model, features);
  }
  const Matrix<Scalar> users0 = user_layer0(model, train, items0);
  const auto reps = multi_layer(graph, users0, items0, cfg.layers);

  std::vector<Scalar> user_norm(static_cast<std::size_t>(reps.users.rows()));
  std::vector<Scalar> item_norm(static_cast<std::size_t>(reps.items.rows()));
  for (Index u = 0; u < reps.users.rows(); ++u) user_norm[u] = std::max(reps.users.row(u).norm(), kNormFloor);
  for (Index i = 0; i < reps.items.rows(); ++i) item_norm[i] = std::max(reps.items.row(i).norm(), kNormFloor);

  const auto n_pos = static_cast<Index>(batch.size());
  const auto cols = static_cast<Index>(1 + batch.n_negatives);
  const auto item_at = [&](Index p, Index c) {
    return c == 0 ? batch.positives[p] : batch.negatives[p * batch.n_negatives + (c - 1)];
  };
  Matrix<Scalar> sims(n_pos, cols);
  for (Index p = 0; p < n_pos; ++p) {
    const auto u = batch.users[p];
    for (Index c = 0; c < cols; ++c) {
      const auto i = item_at(p, c);
      sims(p, c) = reps.users.row(u).dot(reps.items.row(i)) / (user_norm[u] * item_norm[i]);
    }
  }

  const auto loss = loss_kind == LossKind::infonce ? infonce_loss(sims, temperature, with_grad)
                                                   : bpr_loss(sims, with_grad);
  GradientResult<Scalar> result;
  result.loss = loss.value;
  if (!with_grad) return result;

  // d cos(a, b) / d a = (b_hat - cos * a_hat) / |a|
  Matrix<Scalar> grad_users = Matrix<Scalar>::Zero(reps.users.rows(), reps.users.cols());
  Matrix<Scalar> grad_items = Matrix<Scalar>::Zero(reps.items.rows(), reps.items.cols());
  for (Index p = 0; p < n_pos; ++p) {
    const auto u = batch.users[p];
    const RowVector<Scalar> u_hat = reps.users.row(u) / user_norm[u];
    for (Index c = 0; c < cols; ++c) {
      const auto i = item_at(p, c);
      const Scalar g = loss.grad(p, c);
      const Scalar s = sims(p, c);
      const RowVector<Scalar> i_hat = reps.items.row(i) / item_norm[i];
      grad_users.row(u) += (g / user_norm[u]) * (i_hat - s * u_hat);
      grad_items.row(i) += (g / item_norm[i]) * (u_hat - s * i_hat);
    }
  }

  auto layer0 = multi_layer(graph, grad_users, grad_items, cfg.layers);
  Matrix<Scalar>& grad_items0 = layer0.items;
  if (cfg.kind != ModelKind::id) {
    for (std::size_t u = 0; u < train.size(); ++u) {
      const Scalar share = Scalar(1) / static_cast<Scalar>(train[u].size());
      for (auto i : train[u]) grad_items0.row(i) += share * layer0.users.row(static_cast<Index>(u));
    }
  }

  result.grads = model.zeros_like();
  auto& grads = result.grads;
  switch (cfg.kind) {
    case ModelKind::probe:
      grads.weight.noalias() = features.transpose() * grad_items0;
      break;
    case ModelKind::alpharec: {
      const auto slope = static_cast<Scalar>(cfg.leaky_slope);
      const Matrix<Scalar> activated = hidden.unaryExpr([slope](Scalar z) { return leaky_relu(z, slope); });
      grads.w2.noalias() = activated.transpose() * grad_items0;
      grads.b2 = grad_items0.colwise().sum();
      Matrix<Scalar> grad_hidden = grad_items0 * model.w2.transpose();
      grad_hidden.array() *= hidden.unaryExpr([slope](Scalar z) { return z >= Scalar(0) ? Scalar(1) : slope; }).array();
      grads.w1.noalias() = features.transpose() * grad_hidden;
      grads.b1 = grad_hidden.colwise().sum();
      break;
    }
    case ModelKind::id:
      grads.user_table = std::move(layer0.users);
      grads.item_table = std::move(grad_items0);
      break;
  }
  return result;
}

template <typename Scalar>
double batch_loss(const Model<Scalar>& model, const TrainBatch& batch, const Matrix<Scalar>& features,
                  const AdjacencyLists& train, const BipartiteGraph& graph, LossKind loss_kind, double temperature) {
  return compute_gradients(model, batch, features, train, graph, loss_kind, temperature, false).loss;
}

/// Bias-corrected Adam on one tensor; `step` is the 1-based update count.
template <typename Scalar>
void adam_update(Matrix<Scalar>& param, const Matrix<Scalar>& grad, Matrix<Scalar>& m, Matrix<Scalar>& v,
                 std::int64_t step, const AdamConfig& cfg) {
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  m = b1 * m + (Scalar(1) - b1) * grad;
  v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
  const auto lr = static_cast<Scalar>(cfg.learning_rate);
  const auto eps = static_cast<Scalar>(cfg.epsilon);
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> first;
  std::vector<Matrix<Scalar>> second;
  std::int64_t step = 0;
};

template <typename Scalar>
void adam_step(Model<Scalar>& params, Model<Scalar>& grads, AdamState<Scalar>& state, const AdamConfig& cfg) {
  auto ps = params.tensors();
  auto gs = grads.tensors();
  if (ps.size() != gs.size()) throw UsageError("adam_step: gradient layout does not match parameters");
  if (state.first.empty()) {
    for (auto* p : ps) {
      state.first.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
      state.second.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
    }
  }
  ++state.step;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    if (ps[k]->rows() != gs[k]->rows() || ps[k]->cols() != gs[k]->cols()) throw UsageError("adam_step: shape mismatch");
    adam_update(*ps[k], *gs[k], state.first[k], state.second[k], state.step, cfg);
  }
}

/// Everything `fit` needs in one global index space.
struct TrainingData {
  DatasetSplit split;
  MatrixF features;                      // n_items x input_dim, empty for ID models
  std::vector<std::int32_t> tag_offsets;  // dataset item ranges; {0, n_items} for one dataset

  static TrainingData single(DatasetSplit split, const EmbeddingMatrix* item_features);
  static TrainingData mixed(const MixedDataset& mixed, std::span<const EmbeddingMatrix> item_features);
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // mean per positive pair
  std::optional<double> recall20_val;
  double seconds = 0.0;
};

std::string to_json_line(const EpochRecord& record);

struct FitResult {
  Model<float> best;
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_recall = 0.0;
  int evaluations = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam over shuffled positive pairs with early stopping on validation
/// Recall@eval_k. Returns the best-scoring model seen. `log_stream`, when
/// given, receives one JSON line per epoch as training progresses.
FitResult fit(const ModelConfig& model_config, const TrainingData& data, const TrainConfig& config,
              std::ostream* log_stream = nullptr);

/// Batches for one epoch (exposed for tests).
std::vector<TrainBatch> make_epoch_batches(const TrainingData& data, const TrainConfig& config, int epoch,
                                           Rng& negative_rng);

}  // namespace alpharec
