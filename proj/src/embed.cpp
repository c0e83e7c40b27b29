#include "alpharec/embed.hpp"

#include "alpharec/rng.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

namespace alpharec {

static_assert(std::endian::native == std::endian::little, "matrix I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic{'A', 'R', 'E', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 8;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& where) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw DataError(where + ": truncated header");
  return value;
}

}  // namespace

void EmbeddingMatrix::validate() const {
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) {
      if (!std::isfinite(values(r, c))) {
        throw DataError("non-finite value at row " + std::to_string(r) + ", col " + std::to_string(c));
      }
    }
  }
  if (!row_ids.empty()) {
    if (static_cast<Index>(row_ids.size()) != rows()) throw DataError("row id count does not match row count");
    std::unordered_set<std::string> seen(row_ids.begin(), row_ids.end());
    if (seen.size() != row_ids.size()) throw DataError("duplicate row ids");
  }
  if (!titles.empty() && titles.size() != row_ids.size()) throw DataError("titles require row ids");
}

std::filesystem::path ids_sidecar_path(const std::filesystem::path& matrix_path) {
  auto p = matrix_path;
  p += ".ids.tsv";
  return p;
}

void write_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  m.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.dim()));
  out.write(reinterpret_cast<const char*>(m.values.data()),
            static_cast<std::streamsize>(m.values.size() * sizeof(float)));
  if (!out) throw DataError("write failed: " + path.string());

  const auto sidecar = ids_sidecar_path(path);
  if (m.row_ids.empty()) {
    std::filesystem::remove(sidecar);
    return;
  }
  std::ofstream ids(sidecar);
  for (std::size_t r = 0; r < m.row_ids.size(); ++r) {
    ids << r << '\t' << m.row_ids[r] << '\t' << (m.titles.empty() ? std::string() : m.titles[r]) << '\n';
  }
}

EmbeddingMatrix load_matrix(const std::filesystem::path& path) {
  const auto where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + where);
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw DataError(where + ": bad magic at offset 0");
  if (const auto version = get<std::uint32_t>(in, where); version != kVersion) {
    throw DataError(where + ": unsupported version " + std::to_string(version) + " at offset 4");
  }
  const auto rows = get<std::uint64_t>(in, where);
  const auto cols = get<std::uint64_t>(in, where);

  const auto file_size = std::filesystem::file_size(path);
  if (cols != 0 && rows > (UINT64_MAX - kHeaderBytes) / cols / sizeof(float)) throw DataError(where + ": header sizes overflow");
  const auto expected = kHeaderBytes + rows * cols * sizeof(float);
  if (file_size != expected) {
    throw DataError(where + ": header declares " + std::to_string(rows) + "x" + std::to_string(cols) + " (" +
                    std::to_string(expected) + " bytes) but file has " + std::to_string(file_size) + " bytes");
  }

  EmbeddingMatrix m;
  m.values.resize(static_cast<Index>(rows), static_cast<Index>(cols));
  in.read(reinterpret_cast<char*>(m.values.data()), static_cast<std::streamsize>(rows * cols * sizeof(float)));
  for (Index k = 0; k < m.values.size(); ++k) {
    if (!std::isfinite(m.values.data()[k])) {
      throw DataError(where + ": non-finite value at byte offset " +
                      std::to_string(kHeaderBytes + static_cast<std::size_t>(k) * sizeof(float)));
    }
  }

  const auto sidecar = ids_sidecar_path(path);
  if (std::filesystem::exists(sidecar)) {
    std::ifstream ids(sidecar);
    std::string line;
    while (std::getline(ids, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto t1 = line.find('\t');
      if (t1 == std::string::npos) throw DataError(sidecar.string() + ": expected row_index<TAB>id[<TAB>title]");
      const auto t2 = line.find('\t', t1 + 1);
      if (std::stoull(line.substr(0, t1)) != m.row_ids.size()) throw DataError(sidecar.string() + ": rows out of order");
      m.row_ids.push_back(line.substr(t1 + 1, t2 == std::string::npos ? std::string::npos : t2 - t1 - 1));
      m.titles.push_back(t2 == std::string::npos ? std::string() : line.substr(t2 + 1));
    }
    if (std::all_of(m.titles.begin(), m.titles.end(), [](const auto& t) { return t.empty(); })) m.titles.clear();
  }
  m.validate();
  return m;
}

EmbeddingMatrix align_to_items(const EmbeddingMatrix& m, const IdMap& items) {
  if (m.row_ids.empty()) {
    if (m.rows() != items.size()) {
      throw DataError("feature matrix has " + std::to_string(m.rows()) + " rows and no ids, but there are " +
                      std::to_string(items.size()) + " items");
    }
    return m;
  }
  std::unordered_map<std::string, Index> row_of;
  for (std::size_t r = 0; r < m.row_ids.size(); ++r) row_of.emplace(m.row_ids[r], static_cast<Index>(r));
  EmbeddingMatrix out;
  out.values.resize(items.size(), m.dim());
  for (std::int32_t i = 0; i < items.size(); ++i) {
    const auto it = row_of.find(items.external(i));
    if (it == row_of.end()) throw DataError("no feature row for item '" + items.external(i) + "'");
    out.values.row(i) = m.values.row(it->second);
    out.row_ids.push_back(items.external(i));
    if (!m.titles.empty()) out.titles.push_back(m.titles[static_cast<std::size_t>(it->second)]);
  }
  return out;
}

EmbeddingMatrix user_language_features(const DatasetSplit& split, const EmbeddingMatrix& items) {
  if (items.rows() < split.n_items) throw DataError("item feature matrix has fewer rows than the split has items");
  EmbeddingMatrix users;
  users.values.setZero(split.n_users, items.dim());
  for (std::int32_t u = 0; u < split.n_users; ++u) {
    const auto& train = split.train[u];
    if (train.empty()) throw DataError("user " + std::to_string(u) + " has no train interactions");
    for (auto i : train) users.values.row(u) += items.values.row(i);
    users.values.row(u) /= static_cast<float>(train.size());
  }
  return users;
}

std::vector<std::int32_t> row_permutation(Index n, std::uint64_t seed) {
  std::vector<std::int32_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, "shuffle-rows"));
  rng.shuffle(std::span(perm));
  return perm;
}

EmbeddingMatrix shuffle_rows(const EmbeddingMatrix& m, std::uint64_t seed) {
  if (m.rows() < 2) throw UsageError("shuffle_rows needs at least two rows");
  const auto perm = row_permutation(m.rows(), seed);
  EmbeddingMatrix out;
  out.row_ids = m.row_ids;
  out.titles = m.titles;
  out.values.resize(m.rows(), m.dim());
  for (Index r = 0; r < m.rows(); ++r) out.values.row(r) = m.values.row(perm[r]);
  return out;
}

}  // namespace alpharec
