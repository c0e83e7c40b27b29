#include "alpharec/synth.hpp"

#include "alpharec/rng.hpp"

#include <cmath>

namespace alpharec {

void SynthConfig::validate() const {
  if (n_users < 1 || n_items < 2) throw UsageError("synth needs at least one user and two items");
  if (d_latent < 1 || d_lang < d_latent) throw UsageError("synth needs 1 <= d_latent <= d_lang");
  if (interactions_per_user < 1 || interactions_per_user >= n_items) {
    throw UsageError("interactions_per_user must lie in [1, n_items)");
  }
  if (!(noise_sigma >= 0.0)) throw UsageError("noise_sigma must be >= 0");
  if (!(gen_temperature > 0.0)) throw UsageError("gen_temperature must be > 0");
}

namespace {

MatrixD unit_gaussian_rows(Index rows, Index cols, Rng& rng) {
  MatrixD m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    do {
      for (Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
    } while (m.row(r).norm() == 0.0);
    m.row(r).normalize();
  }
  return m;
}

}  // namespace

MatrixD random_orthonormal(int rows, int cols, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "mixing"));
  Eigen::MatrixXd g(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) g(r, c) = rng.normal();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

SynthDataset generate_with_mixing(const SynthConfig& cfg, const MatrixD& mixing, std::uint64_t latent_seed,
                                  const std::string& id_prefix) {
  cfg.validate();
  if (mixing.rows() != cfg.d_lang || mixing.cols() != cfg.d_latent) throw UsageError("mixing matrix shape mismatch");
  Rng rng(derive_seed(latent_seed, "latents"));
  SynthDataset out;
  out.truth.mixing = mixing;
  out.truth.item_latents = unit_gaussian_rows(cfg.n_items, cfg.d_latent, rng);
  out.truth.user_latents = unit_gaussian_rows(cfg.n_users, cfg.d_latent, rng);

  MatrixD source = out.truth.item_latents;
  if (cfg.nonlinear) source = source.unaryExpr([](double z) { return z + 0.5 * z * z * z; });
  MatrixD features = source * mixing.transpose();
  Rng noise_rng(derive_seed(latent_seed, "feature-noise"));
  for (Index k = 0; k < features.size(); ++k) features.data()[k] += cfg.noise_sigma * noise_rng.normal();
  out.item_features.values = features.cast<float>();
  for (std::int32_t i = 0; i < cfg.n_items; ++i) out.item_features.row_ids.push_back(id_prefix + "i" + std::to_string(i));

  // Sequential renormalized softmax draws without replacement.
  Rng draw_rng(derive_seed(latent_seed, "interactions"));
  const MatrixD affinity = out.truth.user_latents * out.truth.item_latents.transpose();  // unit rows: cosine
  std::vector<double> weight(static_cast<std::size_t>(cfg.n_items));
  for (std::int32_t u = 0; u < cfg.n_users; ++u) {
    const double top = affinity.row(u).maxCoeff();
    for (std::int32_t i = 0; i < cfg.n_items; ++i) weight[i] = std::exp((affinity(u, i) - top) / cfg.gen_temperature);
    const auto user_id = id_prefix + "u" + std::to_string(u);
    for (int d = 0; d < cfg.interactions_per_user; ++d) {
      double total = 0.0;
      for (double w : weight) total += w;
      if (!(total > 0.0)) throw DataError("synthetic draw exhausted the item pool for user " + std::to_string(u));
      double r = draw_rng.uniform01() * total;
      std::int32_t pick = -1;
      for (std::int32_t i = 0; i < cfg.n_items; ++i) {
        if (weight[i] <= 0.0) continue;
        pick = i;
        r -= weight[i];
        if (r < 0.0) break;
      }
      weight[pick] = 0.0;
      out.interactions.records.push_back({user_id, out.item_features.row_ids[pick], std::nullopt});
    }
  }
  return out;
}

SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  return generate_with_mixing(cfg, random_orthonormal(cfg.d_lang, cfg.d_latent, cfg.seed), cfg.seed);
}

DomainPair make_domain_pair(const SynthConfig& cfg, std::uint64_t seed_a, std::uint64_t seed_b) {
  cfg.validate();
  const auto mixing = random_orthonormal(cfg.d_lang, cfg.d_latent, cfg.seed);
  return {generate_with_mixing(cfg, mixing, seed_a, "a:"), generate_with_mixing(cfg, mixing, seed_b, "b:")};
}

}  // namespace alpharec
