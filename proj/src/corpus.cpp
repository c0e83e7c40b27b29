#include "alpharec/corpus.hpp"

#include "alpharec/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace alpharec {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    cols.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cols;
}

std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

template <typename Int>
Int parse_int(std::string_view text, const std::string& where) {
  Int value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw DataError(where + ": expected an integer, got '" + std::string(text) + "'");
  return value;
}

std::string pair_key(std::string_view a, std::string_view b) {
  std::string key;
  key.reserve(a.size() + b.size() + 1);
  key.append(a).push_back('\t');
  key.append(b);
  return key;
}

}  // namespace

std::int32_t IdMap::insert(const std::string& external_id) {
  const auto [it, inserted] = index_.try_emplace(external_id, static_cast<std::int32_t>(external_.size()));
  if (inserted) external_.push_back(external_id);
  return it->second;
}

std::optional<std::int32_t> IdMap::find(std::string_view external_id) const {
  const auto it = index_.find(std::string(external_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t DatasetSplit::train_size() const {
  std::size_t n = 0;
  for (const auto& items : train) n += items.size();
  return n;
}

RawInteractions deduplicate(std::vector<Interaction> records) {
  RawInteractions out;
  std::unordered_map<std::string, std::size_t> seen;
  for (auto& rec : records) {
    if (rec.user.empty() || rec.item.empty()) throw DataError("interaction with an empty user or item id");
    auto [it, inserted] = seen.try_emplace(pair_key(rec.user, rec.item), out.records.size());
    if (inserted) {
      out.records.push_back(std::move(rec));
      continue;
    }
    auto& kept = out.records[it->second].timestamp;
    if (rec.timestamp && (!kept || *rec.timestamp < *kept)) kept = rec.timestamp;
  }
  return out;
}

RawInteractions parse_interactions(std::istream& in, std::string_view source_name) {
  std::vector<Interaction> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = strip_cr(line);
    if (text.empty() || text.front() == '#') continue;
    const auto where = std::string(source_name) + ":" + std::to_string(line_no);
    const auto cols = split_tabs(text);
    if (cols.size() != 2 && cols.size() != 3) {
      throw DataError(where + ": expected 2 or 3 tab-separated columns, found " + std::to_string(cols.size()));
    }
    if (cols[0].empty() || cols[1].empty()) throw DataError(where + ": empty user or item id");
    Interaction rec{std::string(cols[0]), std::string(cols[1]), std::nullopt};
    if (cols.size() == 3 && !cols[2].empty()) rec.timestamp = parse_int<std::int64_t>(cols[2], where);
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw DataError(std::string(source_name) + ": no interactions");
  return deduplicate(std::move(records));
}

RawInteractions parse_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_interactions(in, path.string());
}

IndexedInteractions filter_and_index(const RawInteractions& raw, int min_interactions) {
  if (min_interactions < 1) throw UsageError("min_interactions must be >= 1");
  std::unordered_map<std::string, int> counts;
  for (const auto& rec : raw.records) ++counts[rec.user];

  IndexedInteractions out;
  for (const auto& rec : raw.records) {
    if (counts[rec.user] < min_interactions) continue;
    const auto u = out.maps.users.insert(rec.user);
    const auto i = out.maps.items.insert(rec.item);
    out.records.push_back({u, i, rec.timestamp});
  }
  if (out.records.empty()) {
    throw DataError("no user has at least " + std::to_string(min_interactions) + " interactions");
  }
  return out;
}

std::tuple<int, int, int> split_counts(int n, const SplitOptions& options) {
  if (n < 3) return {n, 0, 0};
  // Half-up rounding; the epsilon absorbs binary representation error in
  // ratios such as 0.3 so that 1.5 rounds to 2.
  const auto round_half_up = [](double x) { return static_cast<int>(std::floor(x + 0.5 + 1e-9)); };
  int n_train = std::clamp(round_half_up(options.train_ratio * n), 1, n);
  int n_val = std::clamp(round_half_up(options.validation_ratio * n), 0, n - n_train);
  return {n_train, n_val, n - n_train - n_val};
}

DatasetSplit split_dataset(const IndexedInteractions& data, const SplitOptions& options) {
  const double total = options.train_ratio + options.validation_ratio + options.test_ratio;
  if (std::abs(total - 1.0) > 1e-9 || options.train_ratio <= 0 || options.validation_ratio < 0 ||
      options.test_ratio < 0) {
    throw UsageError("split ratios must be non-negative and sum to 1");
  }

  const auto n_users = data.maps.users.size();
  std::vector<std::vector<const IndexedInteraction*>> per_user(n_users);
  for (const auto& rec : data.records) per_user.at(rec.user).push_back(&rec);

  DatasetSplit split;
  split.maps = data.maps;
  split.n_users = n_users;
  split.n_items = data.maps.items.size();
  split.train.resize(n_users);
  split.validation.resize(n_users);
  split.test.resize(n_users);

  for (std::int32_t u = 0; u < n_users; ++u) {
    auto& recs = per_user[u];
    if (options.order == SplitOrder::random) {
      Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(u)));
      rng.shuffle(std::span(recs));
    } else {
      // Untimed records sort after timed ones, in file order.
      std::stable_sort(recs.begin(), recs.end(), [](const auto* a, const auto* b) {
        if (a->timestamp && b->timestamp) return *a->timestamp < *b->timestamp;
        return a->timestamp.has_value() && !b->timestamp.has_value();
      });
    }
    const auto [n_train, n_val, n_test] = split_counts(static_cast<int>(recs.size()), options);
    for (int k = 0; k < static_cast<int>(recs.size()); ++k) {
      auto& dest = k < n_train ? split.train[u] : (k < n_train + n_val ? split.validation[u] : split.test[u]);
      dest.push_back(recs[k]->item);
    }
  }

  std::vector<char> in_train(split.n_items, 0);
  for (const auto& items : split.train)
    for (auto i : items) in_train[i] = 1;
  for (auto* lists : {&split.train, &split.validation, &split.test}) {
    for (auto& items : *lists) {
      std::erase_if(items, [&](std::int32_t i) { return !in_train[i]; });
      std::sort(items.begin(), items.end());
    }
  }
  return split;
}

namespace {

void write_pairs(const AdjacencyLists& lists, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t u = 0; u < lists.size(); ++u)
    for (auto i : lists[u]) out << u << '\t' << i << '\n';
}

void write_idmap(const IdMap& map, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::int32_t k = 0; k < map.size(); ++k) out << k << '\t' << map.external(k) << '\n';
}

IdMap read_idmap(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  IdMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = strip_cr(line);
    if (text.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    const auto cols = split_tabs(text);
    if (cols.size() != 2) throw DataError(where + ": expected index<TAB>external_id");
    const auto index = parse_int<std::int32_t>(cols[0], where);
    if (index != map.size()) throw DataError(where + ": indices must be contiguous from 0");
    if (map.insert(std::string(cols[1])) != index) throw DataError(where + ": duplicate external id");
  }
  return map;
}

AdjacencyLists read_pairs(const std::filesystem::path& path, std::int32_t n_users, std::int32_t n_items) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  AdjacencyLists lists(n_users);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = strip_cr(line);
    if (text.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    const auto cols = split_tabs(text);
    if (cols.size() != 2) throw DataError(where + ": expected user_index<TAB>item_index");
    const auto u = parse_int<std::int32_t>(cols[0], where);
    const auto i = parse_int<std::int32_t>(cols[1], where);
    if (u < 0 || u >= n_users || i < 0 || i >= n_items) throw DataError(where + ": index out of range");
    lists[u].push_back(i);
  }
  for (auto& items : lists) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
  return lists;
}

}  // namespace

void write_split(const DatasetSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_pairs(split.train, dir / "train.tsv");
  write_pairs(split.validation, dir / "val.tsv");
  write_pairs(split.test, dir / "test.tsv");
  write_idmap(split.maps.users, dir / "idmap.users.tsv");
  write_idmap(split.maps.items, dir / "idmap.items.tsv");
}

DatasetSplit read_split(const std::filesystem::path& dir) {
  DatasetSplit split;
  split.maps.users = read_idmap(dir / "idmap.users.tsv");
  split.maps.items = read_idmap(dir / "idmap.items.tsv");
  split.n_users = split.maps.users.size();
  split.n_items = split.maps.items.size();
  split.train = read_pairs(dir / "train.tsv", split.n_users, split.n_items);
  split.validation = read_pairs(dir / "val.tsv", split.n_users, split.n_items);
  split.test = read_pairs(dir / "test.tsv", split.n_users, split.n_items);
  for (std::int32_t u = 0; u < split.n_users; ++u) {
    if (split.train[u].empty()) throw DataError(dir.string() + ": user " + std::to_string(u) + " has no train items");
  }
  return split;
}

namespace {

int owner_of(const std::vector<std::int32_t>& offsets, std::int32_t index) {
  if (index < 0 || index >= offsets.back()) throw UsageError("global index out of range");
  const auto it = std::upper_bound(offsets.begin(), offsets.end(), index);
  return static_cast<int>(it - offsets.begin()) - 1;
}

std::string prefixed(std::size_t tag, const std::string& id) { return std::to_string(tag) + "/" + id; }

}  // namespace

int MixedDataset::tag_of_item(std::int32_t item) const { return owner_of(item_offsets, item); }
int MixedDataset::tag_of_user(std::int32_t user) const { return owner_of(user_offsets, user); }

MixedDataset merge_datasets(std::vector<DatasetSplit> splits) {
  if (splits.empty()) throw UsageError("merge_datasets needs at least one split");
  MixedDataset mixed;
  mixed.user_offsets.push_back(0);
  mixed.item_offsets.push_back(0);
  auto& all = mixed.combined;
  const bool single = splits.size() == 1;
  for (std::size_t t = 0; t < splits.size(); ++t) {
    const auto& part = splits[t];
    const auto u0 = mixed.user_offsets.back();
    const auto i0 = mixed.item_offsets.back();
    for (const auto* src : {&part.train, &part.validation, &part.test}) {
      auto& dst = src == &part.train ? all.train : (src == &part.validation ? all.validation : all.test);
      for (const auto& items : *src) {
        auto& row = dst.emplace_back();
        row.reserve(items.size());
        for (auto i : items) row.push_back(i + i0);
      }
    }
    for (const auto& id : part.maps.users.ids()) all.maps.users.insert(single ? id : prefixed(t, id));
    for (const auto& id : part.maps.items.ids()) all.maps.items.insert(single ? id : prefixed(t, id));
    mixed.user_offsets.push_back(u0 + part.n_users);
    mixed.item_offsets.push_back(i0 + part.n_items);
  }
  all.n_users = mixed.user_offsets.back();
  all.n_items = mixed.item_offsets.back();
  all.dataset_tag = single ? splits.front().dataset_tag : 0;
  mixed.parts = std::move(splits);
  return mixed;
}

DatasetSplit MixedDataset::unmerge(int tag) const {
  const auto& original = parts.at(tag);
  const auto u0 = user_offsets.at(tag), u1 = user_offsets.at(tag + 1);
  const auto i0 = item_offsets.at(tag), i1 = item_offsets.at(tag + 1);
  DatasetSplit out;
  out.n_users = u1 - u0;
  out.n_items = i1 - i0;
  out.dataset_tag = original.dataset_tag;
  const auto shift = [&](const AdjacencyLists& src) {
    AdjacencyLists dst;
    for (auto u = u0; u < u1; ++u) {
      auto& row = dst.emplace_back();
      for (auto i : src[u]) row.push_back(i - i0);
    }
    return dst;
  };
  out.train = shift(combined.train);
  out.validation = shift(combined.validation);
  out.test = shift(combined.test);
  const auto strip = [&](const std::string& id) {
    if (parts.size() == 1) return id;
    return id.substr(id.find('/') + 1);
  };
  for (auto u = u0; u < u1; ++u) out.maps.users.insert(strip(combined.maps.users.external(u)));
  for (auto i = i0; i < i1; ++i) out.maps.items.insert(strip(combined.maps.items.external(i)));
  return out;
}

}  // namespace alpharec
