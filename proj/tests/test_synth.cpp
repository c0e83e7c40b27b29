#include "doctest.h"
#include "support.hpp"

#include "alpharec/synth.hpp"

#include <map>
#include <set>

using namespace alpharec;

TEST_CASE("mixing matrix has orthonormal columns") {
  const auto a = random_orthonormal(64, 8, 3);
  CHECK((a.transpose() * a - MatrixD::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("generator shapes and per-user counts") {
  SynthConfig cfg;
  cfg.n_users = 40;
  cfg.n_items = 50;
  cfg.interactions_per_user = 12;
  const auto ds = generate(cfg);
  CHECK(ds.item_features.rows() == 50);
  CHECK(ds.item_features.dim() == cfg.d_lang);
  CHECK(ds.interactions.records.size() == 40 * 12);
  std::map<std::string, std::set<std::string>> per_user;
  for (const auto& r : ds.interactions.records) per_user[r.user].insert(r.item);
  CHECK(per_user.size() == 40);
  for (const auto& [user, items] : per_user) CHECK(items.size() == 12);
}

TEST_CASE("noise-free linear features are the mapped latents") {
  SynthConfig cfg;
  cfg.n_users = 5;
  cfg.n_items = 20;
  cfg.interactions_per_user = 3;
  cfg.noise_sigma = 0.0;
  const auto ds = generate(cfg);
  const MatrixD expected = ds.truth.item_latents * ds.truth.mixing.transpose();
  CHECK((ds.item_features.values.cast<double>() - expected).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("generation is seeded") {
  SynthConfig cfg;
  cfg.n_users = 10;
  cfg.n_items = 20;
  cfg.interactions_per_user = 5;
  const auto a = generate(cfg), b = generate(cfg);
  CHECK(a.item_features.values == b.item_features.values);
  CHECK(a.interactions.records.size() == b.interactions.records.size());
  for (std::size_t k = 0; k < a.interactions.records.size(); ++k)
    CHECK(a.interactions.records[k].item == b.interactions.records[k].item);
  cfg.seed = 1;
  CHECK_FALSE(generate(cfg).item_features.values == a.item_features.values);
}

TEST_CASE("domain pair shares the map but not the latents") {
  SynthConfig cfg;
  cfg.n_users = 10;
  cfg.n_items = 20;
  cfg.interactions_per_user = 5;
  const auto pair = make_domain_pair(cfg, 1, 2);
  CHECK(pair.a.truth.mixing == pair.b.truth.mixing);
  CHECK_FALSE(pair.a.truth.item_latents == pair.b.truth.item_latents);
  CHECK(pair.a.item_features.row_ids.front() == "a:i0");
  CHECK(pair.b.interactions.records.front().user == "b:u0");
}

TEST_CASE("interactions favour high-affinity items") {
  SynthConfig cfg;
  cfg.n_users = 100;
  cfg.n_items = 200;
  cfg.interactions_per_user = 10;
  const auto ds = generate(cfg);
  const MatrixD affinity = ds.truth.user_latents * ds.truth.item_latents.transpose();
  double chosen = 0;
  for (const auto& r : ds.interactions.records) {
    const int u = std::stoi(r.user.substr(1));
    const int i = std::stoi(r.item.substr(1));
    chosen += affinity(u, i);
  }
  chosen /= static_cast<double>(ds.interactions.records.size());
  CHECK(chosen > affinity.mean() + 0.3);
}

TEST_CASE("invalid configurations are rejected") {
  SynthConfig cfg;
  cfg.interactions_per_user = cfg.n_items;
  CHECK_THROWS_AS(generate(cfg), UsageError);
  cfg = {};
  cfg.d_latent = cfg.d_lang + 1;
  CHECK_THROWS_AS(generate(cfg), UsageError);
}
