#pragma once

#include "alpharec/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

namespace alpharec {

struct Interaction {
  std::string user;
  std::string item;
  std::optional<std::int64_t> timestamp;
};

/// Deduplicated implicit-feedback log in file order.
struct RawInteractions {
  std::vector<Interaction> records;
};

/// Bijection between external ids and dense indices [0, size).
class IdMap {
 public:
  /// Returns the existing index or appends a new one.
  std::int32_t insert(const std::string& external_id);
  std::optional<std::int32_t> find(std::string_view external_id) const;
  const std::string& external(std::int32_t index) const { return external_.at(index); }
  std::int32_t size() const { return static_cast<std::int32_t>(external_.size()); }
  const std::vector<std::string>& ids() const { return external_; }

  friend bool operator==(const IdMap& a, const IdMap& b) { return a.external_ == b.external_; }

 private:
  std::vector<std::string> external_;
  std::unordered_map<std::string, std::int32_t> index_;
};

struct IdMaps {
  IdMap users;
  IdMap items;
  friend bool operator==(const IdMaps&, const IdMaps&) = default;
};

struct IndexedInteraction {
  std::int32_t user;
  std::int32_t item;
  std::optional<std::int64_t> timestamp;
};

struct IndexedInteractions {
  std::vector<IndexedInteraction> records;
  IdMaps maps;
};

struct DatasetSplit {
  AdjacencyLists train;
  AdjacencyLists validation;
  AdjacencyLists test;
  IdMaps maps;
  int dataset_tag = 0;
  std::int32_t n_users = 0;
  std::int32_t n_items = 0;

  std::size_t train_size() const;
  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

enum class SplitOrder { random, chronological };

struct SplitOptions {
  double train_ratio = 0.4;
  double validation_ratio = 0.3;
  double test_ratio = 0.3;
  std::uint64_t seed = 0;
  SplitOrder order = SplitOrder::random;
};

/// Parses `user<TAB>item[<TAB>timestamp]` lines; `#` lines and blank lines
/// are skipped. Duplicate pairs collapse onto their first occurrence and keep
/// the earliest timestamp.
RawInteractions parse_interactions(const std::filesystem::path& path);
RawInteractions parse_interactions(std::istream& in, std::string_view source_name = "<stream>");

/// Collapses duplicate (user, item) pairs in place, preserving first-occurrence order.
RawInteractions deduplicate(std::vector<Interaction> records);

/// Drops users with fewer than `min_interactions` records (single pass) and
/// assigns dense indices in order of first appearance.
IndexedInteractions filter_and_index(const RawInteractions& raw, int min_interactions = 20);

/// Per-user train/validation/test partition. Users with fewer than three
/// records go entirely to train. Validation and test items never seen in
/// any user's train list are pruned afterwards.
DatasetSplit split_dataset(const IndexedInteractions& data, const SplitOptions& options);

/// Counts (n_train, n_val, n_test) for a user with `n` records.
std::tuple<int, int, int> split_counts(int n, const SplitOptions& options);

void write_split(const DatasetSplit& split, const std::filesystem::path& dir);
DatasetSplit read_split(const std::filesystem::path& dir);

/// Several splits laid out in one global index space by cumulative offsets.
struct MixedDataset {
  std::vector<DatasetSplit> parts;
  std::vector<std::int32_t> user_offsets;  // size parts+1
  std::vector<std::int32_t> item_offsets;  // size parts+1
  DatasetSplit combined;

  /// Position in `parts` of the dataset owning a global item index.
  int tag_of_item(std::int32_t item) const;
  int tag_of_user(std::int32_t user) const;
  std::pair<std::int32_t, std::int32_t> item_range(int tag) const {
    return {item_offsets.at(tag), item_offsets.at(tag + 1)};
  }
  /// Reconstructs part `tag` from the combined split.
  DatasetSplit unmerge(int tag) const;
};

MixedDataset merge_datasets(std::vector<DatasetSplit> splits);

}  // namespace alpharec
