#include "cli.hpp"

#include "alpharec/corpus.hpp"
#include "alpharec/embed.hpp"
#include "alpharec/eval.hpp"
#include "alpharec/intent.hpp"
#include "alpharec/model.hpp"
#include "alpharec/synth.hpp"
#include "alpharec/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace alpharec::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int k = 0; k < len; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[k]};
  return hex.str();
}

std::string format_float(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Records what a command read and wrote; saved next to its outputs.
class RunManifest {
 public:
  RunManifest(std::string command, std::uint64_t seed) : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["seed"] = seed;
    doc_["config"] = Json::object();
    doc_["inputs"] = Json::array();
    doc_["outputs"] = Json::array();
  }

  Json& config() { return doc_["config"]; }

  void input(const fs::path& path) {
    if (fs::is_directory(path)) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(path))
        if (entry.is_regular_file()) files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) input(f);
      return;
    }
    doc_["inputs"].push_back({{"path", path.string()}, {"sha256", sha256_file(path)}});
    if (const auto ids = ids_sidecar_path(path); path.extension() == ".arec" && fs::exists(ids)) {
      doc_["inputs"].push_back({{"path", ids.string()}, {"sha256", sha256_file(ids)}});
    }
  }

  void output(const fs::path& path) { doc_["outputs"].push_back(path.string()); }

  void write(const fs::path& path) {
    doc_["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream out(path);
    out << doc_.dump(2) << '\n';
  }

 private:
  Json doc_;
  std::chrono::steady_clock::time_point start_;
};

fs::path manifest_path_for(const fs::path& out) {
  if (fs::is_directory(out)) return out / "manifest.json";
  auto p = out;
  p += ".manifest.json";
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

Json metrics_json(const std::string& dataset, const RankingMetrics& m) {
  return {{"dataset", dataset}, {"k", m.k}, {"recall", m.recall}, {"ndcg", m.ndcg}, {"hit_ratio", m.hit_ratio},
          {"n_users", m.n_users_evaluated}};
}

std::string dataset_name(const fs::path& split_dir) {
  auto p = split_dir;
  if (!p.has_filename()) p = p.parent_path();
  return p.filename().string();
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("ALPHAREC_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

/// Loads a feature matrix and reorders it to the split's item indices.
EmbeddingMatrix load_aligned(const fs::path& path, const DatasetSplit& split) {
  return align_to_items(load_matrix(path), split.maps.items);
}

struct Common {
  std::uint64_t seed = 0;
  int threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Root seed; every random stream is derived from it");
  cmd->add_option("--threads", c.threads, "Worker threads (0: $ALPHAREC_THREADS or 1)");
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::vector<std::string> splits;
  std::vector<std::string> features;
  std::string out;
  std::string model = "alpharec";
  bool no_mlp = false;
  std::string loss = "infonce";
  std::string mixing = "pooled";
  int layers = 2;
  double tau = 0.15;
  int negatives = 256;
  int batch = 1024;
  double lr = 5e-4;
  int epochs = 1000;
  int patience = 20;
  int eval_every = 1;
  long hidden = 1536;
  long dim = 64;
  double slope = 0.01;
  Common common;
};

void add_train_options(CLI::App* cmd, TrainArgs& a, bool probe) {
  cmd->add_option("--split", a.splits, "Split directory; repeat to co-train on several datasets")->required();
  cmd->add_option("--features", a.features, "Item feature matrix (.arec), one per --split");
  cmd->add_option("--out", a.out, "Output directory (model.ckpt, train_log.jsonl, manifest.json)")->required();
  if (!probe) {
    cmd->add_option("--model", a.model, "Representation learner")->check(CLI::IsMember({"alpharec", "probe", "id"}));
    cmd->add_flag("--no-mlp", a.no_mlp, "Replace the MLP with a single linear map (keeps graph and loss)");
  }
  cmd->add_option("--loss", a.loss, "Training objective")->check(CLI::IsMember({"infonce", "bpr"}));
  cmd->add_option("--layers", a.layers, "Graph propagation layers K (0 disables propagation)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--tau", a.tau, "InfoNCE temperature")->check(CLI::PositiveNumber);
  cmd->add_option("--negatives", a.negatives, "Sampled negatives per positive (BPR uses 1)")->check(CLI::PositiveNumber);
  cmd->add_option("--batch", a.batch, "Positive pairs per batch")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", a.lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
  cmd->add_option("--epochs", a.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--patience", a.patience, "Stop after this many evaluations without a Recall@20 gain")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--eval-every", a.eval_every, "Epochs between validation evaluations")->check(CLI::PositiveNumber);
  if (!probe) {
    cmd->add_option("--hidden", a.hidden, "MLP hidden width")->check(CLI::PositiveNumber);
    cmd->add_option("--slope", a.slope, "LeakyReLU negative slope");
  }
  cmd->add_option("--dim", a.dim, "Output embedding size")->check(CLI::PositiveNumber);
  cmd->add_option("--mixing", a.mixing, "Co-training batch composition")->check(CLI::IsMember({"pooled", "alternate"}));
  add_common(cmd, a.common);
}

void run_train(const TrainArgs& a, const std::string& command, std::ostream& out) {
  if (a.splits.empty()) throw UsageError("at least one --split is required");
  ModelConfig mc;
  mc.kind = parse_model_kind(a.model);
  if (a.no_mlp) {
    if (mc.kind != ModelKind::alpharec) throw UsageError("--no-mlp only applies to --model alpharec");
    mc.kind = ModelKind::probe;
  }
  mc.layers = a.layers;
  mc.hidden_dim = a.hidden;
  mc.output_dim = a.dim;
  mc.leaky_slope = a.slope;
  if (mc.kind != ModelKind::id && a.features.size() != a.splits.size()) {
    throw UsageError("give one --features file per --split");
  }

  RunManifest manifest(command, a.common.seed);
  std::vector<DatasetSplit> splits;
  std::vector<EmbeddingMatrix> features;
  for (std::size_t k = 0; k < a.splits.size(); ++k) {
    manifest.input(a.splits[k]);
    splits.push_back(read_split(a.splits[k]));
    splits.back().dataset_tag = static_cast<int>(k);
    if (mc.kind != ModelKind::id) {
      manifest.input(a.features[k]);
      features.push_back(load_aligned(a.features[k], splits.back()));
    }
  }

  TrainConfig tc;
  tc.temperature = a.tau;
  tc.n_negatives = a.negatives;
  tc.batch_size = a.batch;
  tc.adam.learning_rate = a.lr;
  tc.max_epochs = a.epochs;
  tc.patience = a.patience;
  tc.eval_every = a.eval_every;
  tc.loss = parse_loss_kind(a.loss);
  tc.mixing = a.mixing == "alternate" ? BatchMixing::alternate : BatchMixing::pooled;
  tc.seed = a.common.seed;
  tc.threads = resolve_threads(a.common.threads);

  TrainingData data;
  if (splits.size() == 1) {
    data = TrainingData::single(std::move(splits.front()), features.empty() ? nullptr : &features.front());
  } else {
    const auto mixed = merge_datasets(std::move(splits));
    data = TrainingData::mixed(mixed, features);
  }
  if (mc.kind != ModelKind::id) mc.input_dim = data.features.cols();
  mc.n_users = data.split.n_users;
  mc.n_items = data.split.n_items;

  manifest.config() = {{"model", to_string(mc.kind)},     {"layers", mc.layers},       {"input_dim", mc.input_dim},
                       {"hidden_dim", mc.hidden_dim},     {"output_dim", mc.output_dim}, {"leaky_slope", mc.leaky_slope},
                       {"loss", to_string(tc.loss)},      {"temperature", tc.temperature},
                       {"negatives", tc.effective_negatives()}, {"batch_size", tc.batch_size},
                       {"learning_rate", tc.adam.learning_rate}, {"max_epochs", tc.max_epochs},
                       {"patience", tc.patience},         {"eval_every", tc.eval_every},
                       {"mixing", a.mixing},              {"threads", tc.threads}};

  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::ofstream log(dir / "train_log.jsonl");
  const auto result = fit(mc, data, tc, &log);
  save_checkpoint(result.best, dir / "model.ckpt");
  manifest.output(dir / "model.ckpt");
  manifest.output(dir / "train_log.jsonl");
  manifest.config()["best_epoch"] = result.best_epoch;
  manifest.config()["best_recall20_val"] = result.best_recall;
  manifest.write(dir / "manifest.json");
  out << "best epoch " << result.best_epoch << ", validation Recall@20 " << result.best_recall << " after "
      << result.log.size() << " epochs\n";
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string model, split, features, out, target = "test";
  int k = 20;
  bool mask_val = false;
  Common common;
};

struct IntentArgs {
  std::string model, split, features, queries, out, user;
  double alpha = 0.8;
  int k = 5;
  int query_row = -1;
  bool repropagate = false;
  Common common;
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Language-representation collaborative filtering: training, evaluation and probing.", "alpharec"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.footer(
      "Defaults: tau 0.15, 256 sampled negatives, MLP "
      "3072 -> 1536 -> 64, K = 2 propagation layers, early-stop patience 20 on validation Recall@20, "
      "all-ranking evaluation.\nExit codes: 0 success, 1 usage error, 2 data error.");

  std::function<void()> action;

  // ingest
  std::string ingest_in, ingest_out;
  int ingest_min = 20;
  auto* ingest = app.add_subcommand("ingest", "Parse an interaction log, drop sparse users, assign dense indices");
  ingest->add_option("--interactions", ingest_in, "Tab-separated user<TAB>item[<TAB>timestamp] log")->required();
  ingest->add_option("--min-interactions", ingest_min, "Drop users with fewer records")->check(CLI::PositiveNumber);
  ingest->add_option("--out", ingest_out, "Output directory")->required();
  ingest->callback([&] {
    action = [&] {
      RunManifest manifest("ingest", 0);
      manifest.input(ingest_in);
      manifest.config() = {{"min_interactions", ingest_min}};
      const auto indexed = filter_and_index(parse_interactions(ingest_in), ingest_min);
      const fs::path dir(ingest_out);
      fs::create_directories(dir);
      std::ofstream recs(dir / "interactions.tsv");
      for (const auto& r : indexed.records) {
        recs << r.user << '\t' << r.item;
        if (r.timestamp) recs << '\t' << *r.timestamp;
        recs << '\n';
      }
      std::ofstream users(dir / "idmap.users.tsv"), items(dir / "idmap.items.tsv");
      for (std::int32_t u = 0; u < indexed.maps.users.size(); ++u) users << u << '\t' << indexed.maps.users.external(u) << '\n';
      for (std::int32_t i = 0; i < indexed.maps.items.size(); ++i) items << i << '\t' << indexed.maps.items.external(i) << '\n';
      for (const auto* name : {"interactions.tsv", "idmap.users.tsv", "idmap.items.tsv"}) manifest.output(dir / name);
      manifest.write(dir / "manifest.json");
      out << indexed.maps.users.size() << " users, " << indexed.maps.items.size() << " items, "
          << indexed.records.size() << " interactions\n";
    };
  });

  // split
  std::string split_in, split_out;
  int split_min = 20;
  std::vector<double> ratios{0.4, 0.3, 0.3};
  bool chronological = false;
  Common split_common;
  auto* split = app.add_subcommand("split", "Filter, index and split an interaction log into train/val/test");
  split->add_option("--interactions", split_in, "Tab-separated user<TAB>item[<TAB>timestamp] log")->required();
  split->add_option("--min-interactions", split_min, "Drop users with fewer records")->check(CLI::PositiveNumber);
  split->add_option("--ratios", ratios, "Train, validation and test fractions")->expected(3)->delimiter(',');
  split->add_flag("--chronological", chronological, "Order each user's records by timestamp instead of shuffling");
  split->add_option("--out", split_out, "Output directory")->required();
  add_common(split, split_common);
  split->callback([&] {
    action = [&] {
      RunManifest manifest("split", split_common.seed);
      manifest.input(split_in);
      SplitOptions so;
      so.train_ratio = ratios.at(0);
      so.validation_ratio = ratios.at(1);
      so.test_ratio = ratios.at(2);
      so.seed = split_common.seed;
      so.order = chronological ? SplitOrder::chronological : SplitOrder::random;
      manifest.config() = {{"min_interactions", split_min}, {"ratios", ratios},
                           {"order", chronological ? "chronological" : "random"}};
      const auto result = split_dataset(filter_and_index(parse_interactions(split_in), split_min), so);
      write_split(result, split_out);
      for (const auto* name : {"train.tsv", "val.tsv", "test.tsv", "idmap.users.tsv", "idmap.items.tsv"})
        manifest.output(fs::path(split_out) / name);
      manifest.write(fs::path(split_out) / "manifest.json");
      out << result.n_users << " users, " << result.n_items << " items, " << result.train_size() << " train pairs\n";
    };
  });

  // synth
  SynthConfig sc;
  std::string synth_out;
  bool pair = false;
  std::uint64_t seed_a = 1, seed_b = 2;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with a planted feature/preference map");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--users", sc.n_users, "Number of users")->check(CLI::PositiveNumber);
  synth->add_option("--items", sc.n_items, "Number of items")->check(CLI::PositiveNumber);
  synth->add_option("--latent-dim", sc.d_latent, "Latent preference dimension")->check(CLI::PositiveNumber);
  synth->add_option("--lang-dim", sc.d_lang, "Observed feature dimension")->check(CLI::PositiveNumber);
  synth->add_option("--per-user", sc.interactions_per_user, "Interactions per user")->check(CLI::PositiveNumber);
  synth->add_option("--noise", sc.noise_sigma, "Feature noise standard deviation")->check(CLI::NonNegativeNumber);
  synth->add_option("--gen-temperature", sc.gen_temperature, "Softmax temperature of the interaction draws")
      ->check(CLI::PositiveNumber);
  synth->add_flag("--nonlinear", sc.nonlinear, "Apply z + 0.5 z^3 before the linear map");
  synth->add_option("--seed", sc.seed, "Seed for the mapping and (single mode) the latents");
  synth->add_flag("--pair", pair, "Write two domains a/ and b/ sharing the feature map");
  synth->add_option("--seed-a", seed_a, "Latent seed of domain a (with --pair)");
  synth->add_option("--seed-b", seed_b, "Latent seed of domain b (with --pair)");
  synth->callback([&] {
    action = [&] {
      const auto emit = [&](const SynthDataset& ds, const fs::path& dir, std::uint64_t latent_seed) {
        fs::create_directories(dir);
        std::ofstream log(dir / "interactions.tsv");
        for (const auto& r : ds.interactions.records) log << r.user << '\t' << r.item << '\n';
        write_matrix(ds.item_features, dir / "items.arec");
        Json truth = {{"n_users", sc.n_users},
                      {"n_items", sc.n_items},
                      {"d_latent", sc.d_latent},
                      {"d_lang", sc.d_lang},
                      {"interactions_per_user", sc.interactions_per_user},
                      {"noise_sigma", sc.noise_sigma},
                      {"nonlinear", sc.nonlinear},
                      {"gen_temperature", sc.gen_temperature},
                      {"seed", sc.seed},
                      {"latent_seed", latent_seed}};
        write_text(dir / "truth.json", truth.dump(2) + "\n");
        RunManifest manifest("synth", sc.seed);
        manifest.config() = truth;
        for (const auto* name : {"interactions.tsv", "items.arec", "items.arec.ids.tsv", "truth.json"})
          manifest.output(dir / name);
        manifest.write(dir / "manifest.json");
      };
      if (pair) {
        const auto domains = make_domain_pair(sc, seed_a, seed_b);
        emit(domains.a, fs::path(synth_out) / "a", seed_a);
        emit(domains.b, fs::path(synth_out) / "b", seed_b);
      } else {
        emit(generate(sc), synth_out, sc.seed);
      }
      out << "wrote " << synth_out << '\n';
    };
  });

  // probe-train / train
  TrainArgs probe_args;
  probe_args.model = "probe";
  probe_args.layers = 0;
  auto* probe = app.add_subcommand("probe-train", "Train a linear map from language features (no propagation)");
  add_train_options(probe, probe_args, true);
  probe->callback([&] { action = [&] { run_train(probe_args, "probe-train", out); }; });

  TrainArgs train_args;
  auto* train = app.add_subcommand(
      "train", "Train AlphaRec (MLP + graph + InfoNCE); --no-mlp, --loss bpr, --layers 0 and --model id give the ablations and ID baselines");
  add_train_options(train, train_args, false);
  train->callback([&] { action = [&] { run_train(train_args, "train", out); }; });

  // eval / zero-shot-eval
  const auto add_eval = [&](CLI::App* cmd, EvalArgs& a, bool zero_shot) {
    cmd->add_option("--model", a.model, "Checkpoint file")->required();
    cmd->add_option("--split", a.split, "Split directory")->required();
    auto* f = cmd->add_option("--features", a.features, "Item feature matrix (.arec) for the split's items");
    if (zero_shot) f->required();
    cmd->add_option("--k", a.k, "Ranking cutoff")->check(CLI::PositiveNumber);
    cmd->add_option("--target", a.target, "Relevant set")->check(CLI::IsMember({"test", "val"}));
    cmd->add_flag("--mask-val", a.mask_val, "Also hide validation items when ranking for the test set");
    cmd->add_option("--out", a.out, "metrics.json path")->required();
    add_common(cmd, a.common);
  };
  const auto do_eval = [&](const EvalArgs& a, bool zero_shot) {
    RunManifest manifest(zero_shot ? "zero-shot-eval" : "eval", a.common.seed);
    manifest.input(a.model);
    manifest.input(a.split);
    const auto model = load_checkpoint(a.model);
    const auto ds = read_split(a.split);
    std::optional<EmbeddingMatrix> features;
    if (!a.features.empty()) {
      manifest.input(a.features);
      features = load_aligned(a.features, ds);
    }
    EvalOptions eo;
    eo.k = a.k;
    eo.target = a.target == "val" ? EvalTarget::validation : EvalTarget::test;
    eo.mask_validation = a.mask_val;
    eo.threads = resolve_threads(a.common.threads);
    manifest.config() = {{"k", eo.k}, {"target", a.target}, {"mask_val", a.mask_val}};
    const auto metrics = zero_shot ? zero_shot_evaluate(model, ds, *features, eo)
                                   : evaluate_model(model, ds, features ? &*features : nullptr, eo);
    write_text(a.out, metrics_json(dataset_name(a.split), metrics).dump(2) + "\n");
    manifest.output(a.out);
    manifest.write(manifest_path_for(a.out));
    out << "Recall@" << metrics.k << " " << metrics.recall << "  NDCG@" << metrics.k << " " << metrics.ndcg << "  HR@"
        << metrics.k << " " << metrics.hit_ratio << "  (" << metrics.n_users_evaluated << " users)\n";
  };

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "All-ranking evaluation of a checkpoint (Recall/NDCG/HR@k)");
  add_eval(eval, eval_args, false);
  eval->callback([&] { action = [&] { do_eval(eval_args, false); }; });

  EvalArgs zs_args;
  auto* zs = app.add_subcommand("zero-shot-eval", "Evaluate a frozen model on an unseen dataset without training");
  add_eval(zs, zs_args, true);
  zs->callback([&] { action = [&] { do_eval(zs_args, true); }; });

  // baseline
  std::string base_kind = "pop", base_split, base_out;
  int base_k = 20;
  bool base_mask_val = false;
  Common base_common;
  auto* baseline = app.add_subcommand("baseline", "Random or popularity ranking");
  baseline->add_option("--kind", base_kind, "Strategy")->check(CLI::IsMember({"random", "pop"}));
  baseline->add_option("--split", base_split, "Split directory")->required();
  baseline->add_option("--k", base_k, "Ranking cutoff")->check(CLI::PositiveNumber);
  baseline->add_flag("--mask-val", base_mask_val, "Also hide validation items");
  baseline->add_option("--out", base_out, "metrics.json path")->required();
  add_common(baseline, base_common);
  baseline->callback([&] {
    action = [&] {
      RunManifest manifest("baseline", base_common.seed);
      manifest.input(base_split);
      manifest.config() = {{"kind", base_kind}, {"k", base_k}, {"mask_val", base_mask_val}};
      const auto ds = read_split(base_split);
      const auto metrics = strategy_baseline(parse_strategy(base_kind), ds, base_k, base_common.seed, base_mask_val);
      write_text(base_out, metrics_json(dataset_name(base_split), metrics).dump(2) + "\n");
      manifest.output(base_out);
      manifest.write(manifest_path_for(base_out));
      out << base_kind << " Recall@" << base_k << " " << metrics.recall << '\n';
    };
  });

  // intent-eval / intent-rank
  const auto add_intent_common = [&](CLI::App* cmd, IntentArgs& a) {
    cmd->add_option("--model", a.model, "Checkpoint file")->required();
    cmd->add_option("--split", a.split, "Split directory")->required();
    cmd->add_option("--features", a.features, "Item feature matrix (.arec)")->required();
    cmd->add_option("--queries", a.queries, "Intention query matrix (.arec), one row per item")->required();
    cmd->add_option("--alpha", a.alpha, "Intention strength")->check(CLI::Range(0.0, 1.0));
    cmd->add_flag("--repropagate", a.repropagate, "Rerun propagation with the blended layer-0 row");
    add_common(cmd, a.common);
  };

  IntentArgs ie;
  auto* intent_eval = app.add_subcommand("intent-eval", "Single-target HR@k/NDCG@k with blended intention queries");
  add_intent_common(intent_eval, ie);
  intent_eval->add_option("--k", ie.k, "Ranking cutoff")->check(CLI::PositiveNumber);
  intent_eval->add_option("--out", ie.out, "metrics.json path")->required();
  intent_eval->callback([&] {
    action = [&] {
      RunManifest manifest("intent-eval", ie.common.seed);
      for (const auto& p : {ie.model, ie.split, ie.features, ie.queries}) manifest.input(p);
      manifest.config() = {{"alpha", ie.alpha}, {"k", ie.k}, {"repropagate", ie.repropagate}};
      const auto model = load_checkpoint(ie.model);
      const auto ds = read_split(ie.split);
      const auto features = load_aligned(ie.features, ds);
      const auto queries = load_aligned(ie.queries, ds);
      const auto cases = make_intent_cases(ds);
      const auto metrics = intent_evaluate(model, ds, &features, queries, cases, ie.alpha, ie.k,
                                           ie.repropagate ? IntentMode::repropagate : IntentMode::layer0);
      auto doc = metrics_json(dataset_name(ie.split), metrics);
      doc["alpha"] = ie.alpha;
      write_text(ie.out, doc.dump(2) + "\n");
      manifest.output(ie.out);
      manifest.write(manifest_path_for(ie.out));
      out << "HR@" << ie.k << " " << metrics.hit_ratio << "  NDCG@" << ie.k << " " << metrics.ndcg << "  (" << cases.size()
          << " cases, alpha " << ie.alpha << ")\n";
    };
  });

  IntentArgs ir;
  ir.k = 20;
  auto* intent_rank_cmd = app.add_subcommand("intent-rank", "Top-k for one user after blending one query (TSV)");
  add_intent_common(intent_rank_cmd, ir);
  intent_rank_cmd->add_option("--user", ir.user, "External user id")->required();
  intent_rank_cmd->add_option("--query-row", ir.query_row, "Query row, i.e. the item index the query describes")
      ->required();
  intent_rank_cmd->add_option("--k", ir.k, "Ranking cutoff")->check(CLI::PositiveNumber);
  intent_rank_cmd->add_option("--out", ir.out, "TSV path (stdout when omitted)");
  intent_rank_cmd->callback([&] {
    action = [&] {
      const auto model = load_checkpoint(ir.model);
      const auto ds = read_split(ir.split);
      const auto features = load_aligned(ir.features, ds);
      const auto queries = load_aligned(ir.queries, ds);
      const auto user = ds.maps.users.find(ir.user);
      if (!user) throw DataError("unknown user '" + ir.user + "'");
      if (ir.query_row < 0 || ir.query_row >= queries.rows()) throw DataError("query row out of range");
      const auto output = represent(model, ds, &features, true);
      const auto graph = build_graph(ds);
      const IntentContext ctx{&output, &graph, ir.repropagate ? IntentMode::repropagate : IntentMode::layer0};
      const auto intention = project_query(model, queries.values.row(ir.query_row));
      const auto top = intent_rank(ctx, *user, intention, ir.alpha, ds.train[*user], ir.k);
      std::ostringstream tsv;
      for (std::size_t r = 0; r < top.size(); ++r)
        tsv << r + 1 << '\t' << top[r] << '\t' << ds.maps.items.external(top[r]) << '\n';
      if (ir.out.empty()) {
        out << tsv.str();
      } else {
        RunManifest manifest("intent-rank", ir.common.seed);
        for (const auto& p : {ir.model, ir.split, ir.features, ir.queries}) manifest.input(p);
        manifest.config() = {{"user", ir.user}, {"query_row", ir.query_row}, {"alpha", ir.alpha}, {"k", ir.k}};
        write_text(ir.out, tsv.str());
        manifest.output(ir.out);
        manifest.write(manifest_path_for(ir.out));
      }
    };
  });

  // export-reps
  std::string ex_model, ex_split, ex_features, ex_out;
  auto* export_reps = app.add_subcommand("export-reps", "Write final user/item representations as text");
  export_reps->add_option("--model", ex_model, "Checkpoint file")->required();
  export_reps->add_option("--split", ex_split, "Split directory")->required();
  export_reps->add_option("--features", ex_features, "Item feature matrix (.arec)");
  export_reps->add_option("--out", ex_out, "Output directory")->required();
  export_reps->callback([&] {
    action = [&] {
      RunManifest manifest("export-reps", 0);
      manifest.input(ex_model);
      manifest.input(ex_split);
      const auto model = load_checkpoint(ex_model);
      const auto ds = read_split(ex_split);
      std::optional<EmbeddingMatrix> features;
      if (!ex_features.empty()) {
        manifest.input(ex_features);
        features = load_aligned(ex_features, ds);
      }
      const auto reps = represent(model, ds, features ? &*features : nullptr);
      const fs::path dir(ex_out);
      fs::create_directories(dir);
      const auto dump = [](const MatrixF& m, const fs::path& path) {
        std::ofstream f(path);
        for (Index r = 0; r < m.rows(); ++r) {
          f << r << '\t';
          for (Index c = 0; c < m.cols(); ++c) f << (c ? "," : "") << format_float(m(r, c));
          f << '\n';
        }
      };
      dump(reps.users, dir / "reps.users.tsv");
      dump(reps.items, dir / "reps.items.tsv");
      manifest.output(dir / "reps.users.tsv");
      manifest.output(dir / "reps.items.tsv");
      manifest.write(dir / "manifest.json");
    };
  });

  // shuffle-embeddings
  std::string sh_in, sh_out;
  std::uint64_t sh_seed = 0;
  auto* shuffle = app.add_subcommand("shuffle-embeddings", "Randomly permute feature rows (representation control)");
  shuffle->add_option("--input", sh_in, "Input matrix (.arec)")->required();
  shuffle->add_option("--out", sh_out, "Output matrix (.arec)")->required();
  shuffle->add_option("--seed", sh_seed, "Permutation seed");
  shuffle->callback([&] {
    action = [&] {
      RunManifest manifest("shuffle-embeddings", sh_seed);
      manifest.input(sh_in);
      write_matrix(shuffle_rows(load_matrix(sh_in), sh_seed), sh_out);
      manifest.output(sh_out);
      manifest.write(manifest_path_for(sh_out));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const TrainingDiverged& e) {
    err << "training diverged: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace alpharec::cli
