#pragma once

#include "alpharec/corpus.hpp"
#include "alpharec/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace alpharec {

/// Dense float32 language features, one row per item (or user, or query).
struct EmbeddingMatrix {
  MatrixF values;
  /// Optional external id per row; empty or exactly one per row.
  std::vector<std::string> row_ids;
  std::vector<std::string> titles;

  Index rows() const { return values.rows(); }
  Index dim() const { return values.cols(); }

  /// Throws DataError if any invariant (finiteness, id uniqueness) is broken.
  void validate() const;
};

/// Binary `.arec` layout: "AREC", u32 version=1, u64 rows, u64 cols, then
/// rows*cols little-endian float32 row-major. Ids live in `<path>.ids.tsv`.
void write_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix load_matrix(const std::filesystem::path& path);

std::filesystem::path ids_sidecar_path(const std::filesystem::path& matrix_path);

/// Reorders rows so that row k holds the features of item k in `items`,
/// matching on row ids. Without ids the matrix must already have one row
/// per item and is returned unchanged.
EmbeddingMatrix align_to_items(const EmbeddingMatrix& m, const IdMap& items);

/// x_u = mean of x_i over the user's train items.
EmbeddingMatrix user_language_features(const DatasetSplit& split, const EmbeddingMatrix& items);

/// Seeded uniform permutation of [0, n).
std::vector<std::int32_t> row_permutation(Index n, std::uint64_t seed);

/// Output row r is input row perm[r]; row ids travel with their rows' slots
/// unchanged so that item index r now carries someone else's features.
EmbeddingMatrix shuffle_rows(const EmbeddingMatrix& m, std::uint64_t seed);

}  // namespace alpharec
