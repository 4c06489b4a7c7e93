#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ppgnn/error.hpp"

namespace ppgnn {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Compressed sparse row adjacency. Observed graphs carry no values array
/// (entries are implicitly 1); normalized operators fill `values`.
/// Column indices are sorted within each row and unique.
struct SparseAdjacency {
  Index num_rows = 0;
  Index num_cols = 0;
  std::vector<Index> row_offsets;  // size num_rows + 1
  std::vector<Index> col_indices;  // size nnz
  std::vector<double> values;      // empty, or size nnz

  Index nnz() const { return row_offsets.empty() ? 0 : row_offsets.back(); }
  bool has_values() const { return !values.empty(); }

  std::span<const Index> row(Index i) const {
    return {col_indices.data() + row_offsets[i],
            static_cast<std::size_t>(row_offsets[i + 1] - row_offsets[i])};
  }
  std::span<const double> row_values(Index i) const {
    return {values.data() + row_offsets[i],
            static_cast<std::size_t>(row_offsets[i + 1] - row_offsets[i])};
  }
  Index row_degree(Index i) const { return row_offsets[i + 1] - row_offsets[i]; }

  bool contains(Index i, Index j) const {
    const auto r = row(i);
    return std::binary_search(r.begin(), r.end(), j);
  }

  /// Build from (row, col) entries; duplicates collapse to a single entry.
  static SparseAdjacency from_coo(Index rows, Index cols,
                                  std::vector<std::pair<Index, Index>> entries) {
    for (const auto& [r, c] : entries) {
      if (r < 0 || r >= rows || c < 0 || c >= cols)
        throw DataError("from_coo: entry (" + std::to_string(r) + ", " +
                        std::to_string(c) + ") out of range");
    }
    std::sort(entries.begin(), entries.end());
    entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
    SparseAdjacency a;
    a.num_rows = rows;
    a.num_cols = cols;
    a.row_offsets.assign(static_cast<std::size_t>(rows) + 1, 0);
    a.col_indices.reserve(entries.size());
    for (const auto& [r, c] : entries) {
      ++a.row_offsets[static_cast<std::size_t>(r) + 1];
      a.col_indices.push_back(c);
    }
    for (Index i = 0; i < rows; ++i)
      a.row_offsets[static_cast<std::size_t>(i) + 1] +=
          a.row_offsets[static_cast<std::size_t>(i)];
    return a;
  }

  /// Structure of the transpose (values dropped).
  SparseAdjacency transpose() const {
    SparseAdjacency t;
    t.num_rows = num_cols;
    t.num_cols = num_rows;
    t.row_offsets.assign(static_cast<std::size_t>(num_cols) + 1, 0);
    for (Index e = 0; e < nnz(); ++e)
      ++t.row_offsets[static_cast<std::size_t>(col_indices[e]) + 1];
    for (Index j = 0; j < num_cols; ++j)
      t.row_offsets[static_cast<std::size_t>(j) + 1] +=
          t.row_offsets[static_cast<std::size_t>(j)];
    t.col_indices.resize(static_cast<std::size_t>(nnz()));
    std::vector<Index> cursor(t.row_offsets.begin(), t.row_offsets.end() - 1);
    for (Index i = 0; i < num_rows; ++i)
      for (Index e = row_offsets[i]; e < row_offsets[i + 1]; ++e)
        t.col_indices[static_cast<std::size_t>(cursor[col_indices[e]]++)] = i;
    return t;
  }

  /// Structure of A ∪ Aᵀ (square matrices only; values dropped).
  SparseAdjacency symmetric_union() const {
    if (num_rows != num_cols)
      throw DataError("symmetric_union: adjacency must be square");
    std::vector<std::pair<Index, Index>> entries;
    entries.reserve(static_cast<std::size_t>(2 * nnz()));
    for (Index i = 0; i < num_rows; ++i)
      for (Index e = row_offsets[i]; e < row_offsets[i + 1]; ++e) {
        entries.emplace_back(i, col_indices[e]);
        entries.emplace_back(col_indices[e], i);
      }
    return from_coo(num_rows, num_cols, std::move(entries));
  }

  /// Structure of A ∪ I (square matrices only; values dropped).
  SparseAdjacency with_unit_diagonal() const {
    if (num_rows != num_cols)
      throw DataError("with_unit_diagonal: adjacency must be square");
    std::vector<std::pair<Index, Index>> entries;
    entries.reserve(static_cast<std::size_t>(nnz() + num_rows));
    for (Index i = 0; i < num_rows; ++i) {
      entries.emplace_back(i, i);
      for (Index e = row_offsets[i]; e < row_offsets[i + 1]; ++e)
        entries.emplace_back(i, col_indices[e]);
    }
    return from_coo(num_rows, num_cols, std::move(entries));
  }

  bool structure_symmetric() const {
    if (num_rows != num_cols) return false;
    for (Index i = 0; i < num_rows; ++i)
      for (Index e = row_offsets[i]; e < row_offsets[i + 1]; ++e)
        if (!contains(col_indices[e], i)) return false;
    return true;
  }

  bool zero_diagonal() const {
    for (Index i = 0; i < num_rows; ++i)
      if (contains(i, i)) return false;
    return true;
  }

  /// Check CSR invariants; throws DataError on violation.
  void validate() const {
    if (num_rows < 0 || num_cols < 0)
      throw DataError("csr: negative dimensions");
    if (row_offsets.size() != static_cast<std::size_t>(num_rows) + 1)
      throw DataError("csr: row_offsets size mismatch");
    if (row_offsets.front() != 0)
      throw DataError("csr: row_offsets[0] != 0");
    for (Index i = 0; i < num_rows; ++i) {
      if (row_offsets[i + 1] < row_offsets[i])
        throw DataError("csr: row_offsets not monotone at row " + std::to_string(i));
      for (Index e = row_offsets[i]; e < row_offsets[i + 1]; ++e) {
        if (col_indices[e] < 0 || col_indices[e] >= num_cols)
          throw DataError("csr: column index out of range in row " + std::to_string(i));
        if (e > row_offsets[i] && col_indices[e] <= col_indices[e - 1])
          throw DataError("csr: columns not strictly sorted in row " + std::to_string(i));
      }
    }
    if (row_offsets.back() != static_cast<Index>(col_indices.size()))
      throw DataError("csr: last offset does not equal nnz");
    if (!values.empty() && values.size() != col_indices.size())
      throw DataError("csr: values size mismatch");
  }
};

/// Y = A · X with X dense. Implicit unit values when A carries none.
inline Matrix spmm(const SparseAdjacency& a, const Matrix& x) {
  if (x.rows() != a.num_cols)
    throw DataError("spmm: dimension mismatch (" + std::to_string(a.num_cols) +
                    " vs " + std::to_string(x.rows()) + ")");
  Matrix y = Matrix::Zero(a.num_rows, x.cols());
  const bool weighted = a.has_values();
  for (Index c = 0; c < x.cols(); ++c) {
    const double* xc = x.col(c).data();
    double* yc = y.col(c).data();
    for (Index i = 0; i < a.num_rows; ++i) {
      double acc = 0.0;
      for (Index e = a.row_offsets[i]; e < a.row_offsets[i + 1]; ++e)
        acc += (weighted ? a.values[e] : 1.0) * xc[a.col_indices[e]];
      yc[i] = acc;
    }
  }
  return y;
}

/// Y = Aᵀ · X with X dense.
inline Matrix spmm_transpose(const SparseAdjacency& a, const Matrix& x) {
  if (x.rows() != a.num_rows)
    throw DataError("spmm_transpose: dimension mismatch");
  Matrix y = Matrix::Zero(a.num_cols, x.cols());
  const bool weighted = a.has_values();
  for (Index c = 0; c < x.cols(); ++c) {
    const double* xc = x.col(c).data();
    double* yc = y.col(c).data();
    for (Index i = 0; i < a.num_rows; ++i)
      for (Index e = a.row_offsets[i]; e < a.row_offsets[i + 1]; ++e)
        yc[a.col_indices[e]] += (weighted ? a.values[e] : 1.0) * xc[i];
  }
  return y;
}

enum class Normalization { row_stochastic, symmetric };

/// A degree-normalized view of an adjacency: D⁻¹A (row-stochastic) or
/// D^{-1/2}AD^{-1/2} (symmetric), optionally with the diagonal set to 1
/// before degrees are computed.
struct NormalizedOperator {
  SparseAdjacency base;  // values filled with normalized weights
  Normalization normalization = Normalization::row_stochastic;
  bool self_loops = false;

  Matrix apply(const Matrix& x) const { return spmm(base, x); }
  Matrix apply_transpose(const Matrix& x) const { return spmm_transpose(base, x); }
};

/// Normalize a square 0/1 adjacency structure. Input values are ignored:
/// degrees count structural entries. With self_loops the diagonal is set
/// to 1 first, so every degree is at least 1.
inline NormalizedOperator degree_normalize(const SparseAdjacency& a,
                                           Normalization normalization,
                                           bool self_loops) {
  if (a.num_rows != a.num_cols)
    throw DataError("degree_normalize: adjacency must be square");
  NormalizedOperator op;
  op.normalization = normalization;
  op.self_loops = self_loops;
  op.base = self_loops ? a.with_unit_diagonal() : a;
  op.base.values.clear();

  const Index n = op.base.num_rows;
  std::vector<double> degree(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    degree[static_cast<std::size_t>(i)] = static_cast<double>(op.base.row_degree(i));

  if (normalization == Normalization::row_stochastic && !self_loops) {
    for (Index i = 0; i < n; ++i)
      if (degree[static_cast<std::size_t>(i)] == 0.0)
        throw DataError("degree_normalize: node " + std::to_string(i) +
                        " is isolated; row-stochastic normalization needs "
                        "self_loops=true on graphs with isolated nodes");
  }

  op.base.values.resize(static_cast<std::size_t>(op.base.nnz()));
  for (Index i = 0; i < n; ++i) {
    for (Index e = op.base.row_offsets[i]; e < op.base.row_offsets[i + 1]; ++e) {
      const Index j = op.base.col_indices[e];
      op.base.values[static_cast<std::size_t>(e)] =
          normalization == Normalization::row_stochastic
              ? 1.0 / degree[static_cast<std::size_t>(i)]
              : 1.0 / std::sqrt(degree[static_cast<std::size_t>(i)] *
                                degree[static_cast<std::size_t>(j)]);
    }
  }
  return op;
}

}  // namespace ppgnn
