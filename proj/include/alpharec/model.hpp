#pragma once

#include "alpharec/graph.hpp"
#include "alpharec/rng.hpp"
#include "alpharec/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace alpharec {

enum class ModelKind {
  probe,     // single linear map W
  alpharec,  // two-layer MLP with LeakyReLU
  id,        // trainable user/item tables (MF when layers=0, LightGCN-style otherwise)
};

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct ModelConfig {
  ModelKind kind = ModelKind::alpharec;
  Index input_dim = 3072;
  Index hidden_dim = 1536;
  Index output_dim = 64;
  int layers = 2;
  double leaky_slope = 0.01;
  // Only used by ModelKind::id.
  std::int32_t n_users = 0;
  std::int32_t n_items = 0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Trainable parameters. Which tensors are populated depends on the kind:
///   probe:    weight (input_dim x output_dim)
///   alpharec: w1 (input x hidden), b1 (1 x hidden), w2 (hidden x output), b2 (1 x output)
///   id:       user_table (n_users x output), item_table (n_items x output)
/// Representations are rows, so a layer computes X * W + b.
template <typename Scalar>
struct Model {
  ModelConfig config;
  Matrix<Scalar> weight;
  Matrix<Scalar> w1, b1, w2, b2;
  Matrix<Scalar> user_table, item_table;

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    switch (config.kind) {
      case ModelKind::probe:
        fn(std::string_view("W"), weight);
        break;
      case ModelKind::alpharec:
        fn(std::string_view("W1"), w1);
        fn(std::string_view("b1"), b1);
        fn(std::string_view("W2"), w2);
        fn(std::string_view("b2"), b2);
        break;
      case ModelKind::id:
        fn(std::string_view("user_table"), user_table);
        fn(std::string_view("item_table"), item_table);
        break;
    }
  }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<Model*>(this)->for_each_tensor(
        [&](std::string_view name, Matrix<Scalar>& t) { fn(name, static_cast<const Matrix<Scalar>&>(t)); });
  }

  std::vector<Matrix<Scalar>*> tensors() {
    std::vector<Matrix<Scalar>*> out;
    for_each_tensor([&](std::string_view, Matrix<Scalar>& t) { out.push_back(&t); });
    return out;
  }

  /// Same shapes, all zeros.
  Model zeros_like() const {
    Model z;
    z.config = config;
    const auto zero = [](const Matrix<Scalar>& t) { return Matrix<Scalar>::Zero(t.rows(), t.cols()).eval(); };
    z.weight = zero(weight);
    z.w1 = zero(w1);
    z.b1 = zero(b1);
    z.w2 = zero(w2);
    z.b2 = zero(b2);
    z.user_table = zero(user_table);
    z.item_table = zero(item_table);
    return z;
  }

  template <typename Other>
  Model<Other> cast() const {
    Model<Other> m;
    m.config = config;
    m.weight = weight.template cast<Other>();
    m.w1 = w1.template cast<Other>();
    m.b1 = b1.template cast<Other>();
    m.w2 = w2.template cast<Other>();
    m.b2 = b2.template cast<Other>();
    m.user_table = user_table.template cast<Other>();
    m.item_table = item_table.template cast<Other>();
    return m;
  }

  friend bool operator==(const Model& a, const Model& b) {
    return a.config == b.config && a.weight == b.weight && a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 &&
           a.b2 == b.b2 && a.user_table == b.user_table && a.item_table == b.item_table;
  }
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> xavier_uniform(Index fan_in, Index fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix<Scalar> m(fan_in, fan_out);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<Scalar>(rng.uniform(-bound, bound));
  return m;
}

}  // namespace detail

/// Glorot-uniform weights, zero biases.
template <typename Scalar>
Model<Scalar> init_model(const ModelConfig& config, std::uint64_t seed) {
  if (config.output_dim < 1) throw UsageError("output_dim must be positive");
  Model<Scalar> m;
  m.config = config;
  Rng rng(derive_seed(seed, "init"));
  switch (config.kind) {
    case ModelKind::probe:
      if (config.input_dim < 1) throw UsageError("probe needs input_dim >= 1");
      m.weight = detail::xavier_uniform<Scalar>(config.input_dim, config.output_dim, rng);
      break;
    case ModelKind::alpharec:
      if (config.input_dim < 1 || config.hidden_dim < 1) throw UsageError("MLP needs positive input and hidden dims");
      m.w1 = detail::xavier_uniform<Scalar>(config.input_dim, config.hidden_dim, rng);
      m.b1 = Matrix<Scalar>::Zero(1, config.hidden_dim);
      m.w2 = detail::xavier_uniform<Scalar>(config.hidden_dim, config.output_dim, rng);
      m.b2 = Matrix<Scalar>::Zero(1, config.output_dim);
      break;
    case ModelKind::id:
      if (config.n_users < 1 || config.n_items < 1) throw UsageError("id model needs n_users and n_items");
      m.user_table = detail::xavier_uniform<Scalar>(config.n_users, config.output_dim, rng);
      m.item_table = detail::xavier_uniform<Scalar>(config.n_items, config.output_dim, rng);
      break;
  }
  return m;
}

template <typename Scalar>
Matrix<Scalar> probe_forward(const Matrix<Scalar>& weight, const Matrix<Scalar>& x) {
  if (x.cols() != weight.rows()) throw UsageError("probe_forward: feature dim does not match W");
  return x * weight;
}

template <typename Scalar>
Scalar leaky_relu(Scalar z, Scalar slope) {
  return z >= Scalar(0) ? z : slope * z;
}

/// Hidden pre-activations of the MLP; kept for the backward pass.
template <typename Scalar>
Matrix<Scalar> mlp_hidden(const Model<Scalar>& m, const Matrix<Scalar>& x) {
  if (x.cols() != m.w1.rows()) throw UsageError("mlp_forward: feature dim does not match W1");
  Matrix<Scalar> h = x * m.w1;
  h.rowwise() += m.b1.row(0);
  return h;
}

template <typename Scalar>
Matrix<Scalar> mlp_output(const Model<Scalar>& m, const Matrix<Scalar>& hidden) {
  const auto slope = static_cast<Scalar>(m.config.leaky_slope);
  Matrix<Scalar> out = hidden.unaryExpr([slope](Scalar z) { return leaky_relu(z, slope); }) * m.w2;
  out.rowwise() += m.b2.row(0);
  return out;
}

/// e = LeakyReLU(x W1 + b1) W2 + b2, row by row.
template <typename Scalar>
Matrix<Scalar> mlp_forward(const Model<Scalar>& m, const Matrix<Scalar>& x) {
  return mlp_output(m, mlp_hidden(m, x));
}

/// Layer-0 item representations for any model kind.
template <typename Scalar>
Matrix<Scalar> item_layer0(const Model<Scalar>& m, const Matrix<Scalar>& features) {
  switch (m.config.kind) {
    case ModelKind::probe:
      return probe_forward(m.weight, features);
    case ModelKind::alpharec:
      return mlp_forward(m, features);
    case ModelKind::id:
      return m.item_table;
  }
  throw UsageError("unknown model kind");
}

/// Row u is the mean of its train items' rows.
template <typename Scalar>
Matrix<Scalar> mean_over_train(const AdjacencyLists& train, const Matrix<Scalar>& items) {
  Matrix<Scalar> users = Matrix<Scalar>::Zero(static_cast<Index>(train.size()), items.cols());
  for (std::size_t u = 0; u < train.size(); ++u) {
    if (train[u].empty()) throw DataError("user " + std::to_string(u) + " has no train interactions");
    for (auto i : train[u]) users.row(static_cast<Index>(u)) += items.row(i);
    users.row(static_cast<Index>(u)) /= static_cast<Scalar>(train[u].size());
  }
  return users;
}

template <typename Scalar>
Matrix<Scalar> user_layer0(const Model<Scalar>& m, const AdjacencyLists& train, const Matrix<Scalar>& items0) {
  if (m.config.kind == ModelKind::id) return m.user_table;
  return mean_over_train(train, items0);
}

/// Final representations plus every layer 0..K.
template <typename Scalar>
using ModelOutput = LayerStack<Scalar>;

/// Item layer 0 from the model, user layer 0 as the mean of train items
/// (table lookup for ID models), then propagation and layer averaging.
template <typename Scalar>
ModelOutput<Scalar> full_forward(const Model<Scalar>& m, const Matrix<Scalar>& item_features,
                                 const AdjacencyLists& train, const BipartiteGraph& g, bool keep_layers = true) {
  Matrix<Scalar> items0 = item_layer0(m, item_features);
  if (items0.rows() != g.n_items()) throw DataError("item representation count does not match the graph");
  Matrix<Scalar> users0 = user_layer0(m, train, items0);
  return multi_layer(g, users0, items0, m.config.layers, keep_layers);
}

template <typename A, typename B>
double cosine_score(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const double na = a.template cast<double>().norm();
  const double nb = b.template cast<double>().norm();
  if (na == 0.0 || nb == 0.0) throw UsageError("cosine_score: zero-norm vector");
  return std::clamp(a.template cast<double>().dot(b.template cast<double>()) / (na * nb), -1.0, 1.0);
}

/// Rows scaled to unit length; zero rows stay zero.
template <typename Scalar>
Matrix<Scalar> normalize_rows(const Matrix<Scalar>& m) {
  Matrix<Scalar> out = m;
  for (Index r = 0; r < out.rows(); ++r) {
    const Scalar n = out.row(r).norm();
    if (n > Scalar(0)) out.row(r) /= n;
  }
  return out;
}

/// Checkpoint layout: "ARCK", u32 version=1, u32 tensor count, then per
/// tensor u16 name length, name bytes, u64 rows, u64 cols, float32 data.
/// The first tensor, "meta", stores a JSON config one byte per float.
void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace alpharec
