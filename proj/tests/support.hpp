#pragma once

// Independent reference implementations used as oracles by the unit tests
// and the acceptance binary. They favour the most literal formulation over
// speed and share no code with the library beyond its data types.

#include "alpharec/corpus.hpp"
#include "alpharec/embed.hpp"
#include "alpharec/graph.hpp"
#include "alpharec/model.hpp"
#include "alpharec/rng.hpp"
#include "alpharec/synth.hpp"
#include "alpharec/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>

namespace alpharec::testing {

/// Random bipartite training lists; every user gets at least one item.
inline AdjacencyLists random_train(int n_users, int n_items, double density, std::uint64_t seed) {
  Rng rng(seed);
  AdjacencyLists train(static_cast<std::size_t>(n_users));
  for (int u = 0; u < n_users; ++u) {
    for (int i = 0; i < n_items; ++i)
      if (rng.uniform01() < density) train[u].push_back(i);
    if (train[u].empty()) train[u].push_back(static_cast<std::int32_t>(rng.uniform_index(n_items)));
  }
  return train;
}

inline DatasetSplit split_from_train(AdjacencyLists train, int n_items) {
  DatasetSplit s;
  s.n_users = static_cast<std::int32_t>(train.size());
  s.n_items = n_items;
  s.train = std::move(train);
  s.validation.resize(s.train.size());
  s.test.resize(s.train.size());
  for (int u = 0; u < s.n_users; ++u) s.maps.users.insert("u" + std::to_string(u));
  for (int i = 0; i < n_items; ++i) s.maps.items.insert("i" + std::to_string(i));
  return s;
}

template <typename Scalar>
Matrix<Scalar> random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix<Scalar> m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<Scalar>(scale * rng.normal());
  return m;
}

/// Dense (users + items) square matrix with entries 1/sqrt(deg_u deg_i) on edges.
inline MatrixD dense_normalized_adjacency(const AdjacencyLists& train, int n_items) {
  const auto n_users = static_cast<Index>(train.size());
  MatrixD r = MatrixD::Zero(n_users, n_items);
  for (Index u = 0; u < n_users; ++u)
    for (auto i : train[u]) r(u, i) = 1.0;
  const Eigen::VectorXd du = r.rowwise().sum();
  const Eigen::VectorXd di = r.colwise().sum().transpose();
  MatrixD a = MatrixD::Zero(n_users + n_items, n_users + n_items);
  for (Index u = 0; u < n_users; ++u) {
    for (Index i = 0; i < n_items; ++i) {
      if (r(u, i) == 0.0) continue;
      const double w = 1.0 / std::sqrt(du(u) * di(i));
      a(u, n_users + i) = w;
      a(n_users + i, u) = w;
    }
  }
  return a;
}

/// Stack users over items, apply the dense operator `layers` times, average.
inline MatrixD dense_layer_mean(const MatrixD& adjacency, const MatrixD& users, const MatrixD& items, int layers) {
  MatrixD e(users.rows() + items.rows(), users.cols());
  e << users, items;
  MatrixD sum = e, cur = e;
  for (int k = 0; k < layers; ++k) {
    cur = adjacency * cur;
    sum += cur;
  }
  return sum / static_cast<double>(layers + 1);
}

/// Recall, NDCG and HR at k computed straight from their definitions.
struct ReferenceMetrics {
  double recall = 0, ndcg = 0, hit_ratio = 0;
  int users = 0;
};

inline ReferenceMetrics reference_metrics(const std::vector<std::vector<std::int32_t>>& ranked,
                                          const AdjacencyLists& relevant, int k) {
  ReferenceMetrics out;
  long double recall = 0, ndcg = 0, hits = 0;
  for (std::size_t u = 0; u < relevant.size(); ++u) {
    if (relevant[u].empty()) continue;
    ++out.users;
    int found = 0;
    long double dcg = 0;
    for (int pos = 0; pos < k && pos < static_cast<int>(ranked[u].size()); ++pos) {
      bool rel = false;
      for (auto t : relevant[u]) rel = rel || t == ranked[u][pos];
      if (rel) {
        ++found;
        dcg += 1.0L / std::log2(static_cast<long double>(pos) + 2.0L);
      }
    }
    long double idcg = 0;
    for (int pos = 0; pos < std::min<int>(k, static_cast<int>(relevant[u].size())); ++pos)
      idcg += 1.0L / std::log2(static_cast<long double>(pos) + 2.0L);
    recall += static_cast<long double>(found) / static_cast<long double>(relevant[u].size());
    ndcg += dcg / idcg;
    hits += found > 0 ? 1 : 0;
  }
  if (out.users > 0) {
    out.recall = static_cast<double>(recall / out.users);
    out.ndcg = static_cast<double>(ndcg / out.users);
    out.hit_ratio = static_cast<double>(hits / out.users);
  }
  return out;
}

/// Small model configuration for gradient checks.
inline ModelConfig tiny_config(ModelKind kind, int layers, int n_users, int n_items) {
  ModelConfig c;
  c.kind = kind;
  c.input_dim = 6;
  c.hidden_dim = 5;
  c.output_dim = 4;
  c.layers = layers;
  c.leaky_slope = 0.01;
  c.n_users = n_users;
  c.n_items = n_items;
  return c;
}

/// One batch covering every training pair with fixed sampled negatives.
inline TrainBatch full_batch(const AdjacencyLists& train, int n_items, int n_negatives, std::uint64_t seed) {
  Rng rng(seed);
  TrainBatch b;
  b.n_negatives = n_negatives;
  for (std::size_t u = 0; u < train.size(); ++u) {
    for (auto i : train[u]) {
      b.users.push_back(static_cast<std::int32_t>(u));
      b.positives.push_back(i);
      const auto negs = sample_negatives(train[u], {0, n_items}, n_negatives, rng);
      b.negatives.insert(b.negatives.end(), negs.begin(), negs.end());
    }
  }
  return b;
}

/// Largest relative discrepancy between the analytic gradient and central
/// finite differences over every parameter entry.
struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t entries = 0;
};

inline GradientCheck check_gradients(ModelKind kind, int layers, LossKind loss, std::uint64_t seed,
                                     double h = 1e-5) {
  constexpr int n_users = 20, n_items = 30;
  const auto train = random_train(n_users, n_items, 0.15, seed);
  const auto graph = build_graph(train, n_items);
  Rng rng(derive_seed(seed, "gradcheck"));
  const auto cfg = tiny_config(kind, layers, n_users, n_items);
  const MatrixD features = random_matrix<double>(n_items, cfg.input_dim, rng);
  auto model = init_model<double>(cfg, seed);
  // Non-zero biases so their gradients are exercised away from the origin.
  if (kind == ModelKind::alpharec) {
    model.b1 = random_matrix<double>(1, cfg.hidden_dim, rng, 0.1);
    model.b2 = random_matrix<double>(1, cfg.output_dim, rng, 0.1);
  }
  const auto batch = full_batch(train, n_items, loss == LossKind::bpr ? 1 : 4, derive_seed(seed, "batch"));
  const double tau = 0.2;

  const auto analytic = compute_gradients(model, batch, features, train, graph, loss, tau).grads;
  GradientCheck out;
  auto params = model.tensors();
  auto grads = const_cast<Model<double>&>(analytic).tensors();
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (Index k = 0; k < params[t]->size(); ++k) {
      double& x = params[t]->data()[k];
      const double saved = x;
      x = saved + h;
      const double up = batch_loss(model, batch, features, train, graph, loss, tau);
      x = saved - h;
      const double down = batch_loss(model, batch, features, train, graph, loss, tau);
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double exact = grads[t]->data()[k];
      const double scale = std::max({std::abs(numeric), std::abs(exact), 1e-6});
      out.max_relative_error = std::max(out.max_relative_error, std::abs(numeric - exact) / scale);
      ++out.entries;
    }
  }
  return out;
}

/// Synthetic dataset taken through the regular ingest path.
struct SynthSplit {
  DatasetSplit split;
  EmbeddingMatrix features;
};

inline SynthSplit synth_split(const SynthDataset& ds, std::uint64_t split_seed) {
  SplitOptions opts;
  opts.seed = split_seed;
  SynthSplit out;
  out.split = split_dataset(filter_and_index(ds.interactions, 20), opts);
  out.features = align_to_items(ds.item_features, out.split.maps.items);
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("alpharec-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace alpharec::testing
