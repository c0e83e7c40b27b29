#pragma once

#include "alpharec/corpus.hpp"
#include "alpharec/embed.hpp"
#include "alpharec/types.hpp"

#include <cstdint>
#include <string>

namespace alpharec {

/// Synthetic catalogue with a planted linear map between a latent
/// preference space and the observed "language" features.
struct SynthConfig {
  std::int32_t n_users = 500;
  std::int32_t n_items = 300;
  int d_latent = 8;
  int d_lang = 64;
  int interactions_per_user = 30;
  double noise_sigma = 0.1;
  bool nonlinear = false;  // features see z + 0.5 z^3 instead of z
  double gen_temperature = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthTruth {
  MatrixD mixing;        // d_lang x d_latent, orthonormal columns
  MatrixD user_latents;  // unit rows
  MatrixD item_latents;  // unit rows
};

struct SynthDataset {
  RawInteractions interactions;
  EmbeddingMatrix item_features;  // row r is item "<prefix>i<r>"
  SynthTruth truth;
};

/// Seeded d_lang x d_latent matrix with orthonormal columns.
MatrixD random_orthonormal(int rows, int cols, std::uint64_t seed);

/// Latents and features for one dataset under a given mixing matrix.
SynthDataset generate_with_mixing(const SynthConfig& cfg, const MatrixD& mixing, std::uint64_t latent_seed,
                                  const std::string& id_prefix = "");

SynthDataset generate(const SynthConfig& cfg);

struct DomainPair {
  SynthDataset a;
  SynthDataset b;
};

/// Two datasets that share the mixing matrix and generator settings but
/// have independent latents and disjoint ids ("a:" / "b:" prefixes).
DomainPair make_domain_pair(const SynthConfig& cfg, std::uint64_t seed_a, std::uint64_t seed_b);

}  // namespace alpharec
