#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppgnn/csr.hpp"
#include "ppgnn/error.hpp"
#include "ppgnn/rng.hpp"

namespace ppgnn {

struct SplitSets {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;
};

/// A transductive node-classification dataset: features X, observed
/// adjacency A⁰ (square, symmetric, zero diagonal, implicitly 0/1),
/// integer labels and disjoint train/val/test splits.
struct GraphDataset {
  Matrix features;            // N x D_feat
  SparseAdjacency adjacency;  // N x N
  std::vector<int> labels;    // length N
  SplitSets splits;
  int num_classes = 0;

  Index num_nodes() const { return features.rows(); }
  Index feat_dim() const { return features.cols(); }
  /// Undirected edge count (CSR stores both directions).
  Index num_edges() const { return adjacency.nnz() / 2; }
};

enum class NoiseMode { add, remove };

/// Random structural perturbation: add or delete a fraction of the
/// undirected edge set.
struct NoiseSpec {
  NoiseMode mode = NoiseMode::add;
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline double parse_real(std::string_view tok, const std::string& file, Index line) {
  double v = 0.0;
  const char* b = tok.data();
  const char* e = tok.data() + tok.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t' || *(e - 1) == '\r')) --e;
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e)
    throw DataError(file + ":" + std::to_string(line) + ": malformed real '" +
                    std::string(tok) + "'");
  if (!std::isfinite(v))
    throw DataError(file + ":" + std::to_string(line) + ": non-finite value");
  return v;
}

inline long long parse_int(std::string_view tok, const std::string& file, Index line) {
  long long v = 0;
  const char* b = tok.data();
  const char* e = tok.data() + tok.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t' || *(e - 1) == '\r')) --e;
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e)
    throw DataError(file + ":" + std::to_string(line) + ": malformed integer '" +
                    std::string(tok) + "'");
  return v;
}

inline bool blank_line(const std::string& s) {
  for (char c : s)
    if (c != ' ' && c != '\t' && c != '\r') return false;
  return true;
}

inline std::ifstream open_or_throw(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("missing file: " + p.string());
  return in;
}

inline std::string format_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// Load a dataset directory: features.csv, edges.csv, labels.csv,
/// splits.json. Duplicate and reversed edge listings are collapsed, the
/// adjacency is symmetrized, and self-loop lines are dropped.
inline GraphDataset load_dataset(const std::filesystem::path& dir) {
  GraphDataset ds;
  namespace fs = std::filesystem;

  {  // features.csv
    const fs::path p = dir / "features.csv";
    auto in = detail::open_or_throw(p);
    std::vector<std::vector<double>> rows;
    std::string line;
    Index lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (detail::blank_line(line)) continue;
      std::vector<double> row;
      std::size_t start = 0;
      while (start <= line.size()) {
        std::size_t comma = line.find(',', start);
        const std::size_t end = (comma == std::string::npos) ? line.size() : comma;
        row.push_back(detail::parse_real(
            std::string_view(line).substr(start, end - start), p.string(), lineno));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      if (!rows.empty() && row.size() != rows.front().size())
        throw DataError(p.string() + ":" + std::to_string(lineno) +
                        ": inconsistent feature width");
      rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(p.string() + ": no feature rows");
    ds.features.resize(static_cast<Index>(rows.size()),
                       static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < ds.features.rows(); ++i)
      for (Index j = 0; j < ds.features.cols(); ++j)
        ds.features(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  const Index n = ds.features.rows();

  {  // edges.csv
    const fs::path p = dir / "edges.csv";
    auto in = detail::open_or_throw(p);
    std::string line;
    Index lineno = 0;
    std::vector<std::pair<Index, Index>> entries;
    while (std::getline(in, line)) {
      ++lineno;
      if (detail::blank_line(line)) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos)
        throw DataError(p.string() + ":" + std::to_string(lineno) +
                        ": expected 'src,dst'");
      const auto src = detail::parse_int(std::string_view(line).substr(0, comma),
                                         p.string(), lineno);
      const auto dst = detail::parse_int(std::string_view(line).substr(comma + 1),
                                         p.string(), lineno);
      if (src < 0 || src >= n || dst < 0 || dst >= n)
        throw DataError(p.string() + ":" + std::to_string(lineno) +
                        ": node index out of range [0, " + std::to_string(n) + ")");
      if (src == dst) continue;  // observed graphs have a zero diagonal
      entries.emplace_back(static_cast<Index>(src), static_cast<Index>(dst));
      entries.emplace_back(static_cast<Index>(dst), static_cast<Index>(src));
    }
    ds.adjacency = SparseAdjacency::from_coo(n, n, std::move(entries));
  }

  {  // labels.csv
    const fs::path p = dir / "labels.csv";
    auto in = detail::open_or_throw(p);
    std::string line;
    Index lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (detail::blank_line(line)) continue;
      const auto v = detail::parse_int(line, p.string(), lineno);
      if (v < 0)
        throw DataError(p.string() + ":" + std::to_string(lineno) + ": negative label");
      ds.labels.push_back(static_cast<int>(v));
    }
    if (static_cast<Index>(ds.labels.size()) != n)
      throw DataError(p.string() + ": expected " + std::to_string(n) +
                      " labels, found " + std::to_string(ds.labels.size()));
    ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  }

  {  // splits.json
    const fs::path p = dir / "splits.json";
    auto in = detail::open_or_throw(p);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(p.string() + ": " + e.what());
    }
    auto read_split = [&](const char* key) {
      if (!j.contains(key) || !j[key].is_array())
        throw DataError(p.string() + ": missing integer array '" + key + "'");
      std::vector<Index> out;
      for (const auto& v : j[key]) {
        if (!v.is_number_integer())
          throw DataError(p.string() + ": non-integer index in '" + key + "'");
        const auto idx = v.get<long long>();
        if (idx < 0 || idx >= n)
          throw DataError(p.string() + ": split index " + std::to_string(idx) +
                          " out of range in '" + key + "'");
        out.push_back(static_cast<Index>(idx));
      }
      return out;
    };
    ds.splits.train = read_split("train");
    ds.splits.val = read_split("val");
    ds.splits.test = read_split("test");
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    auto mark = [&](const std::vector<Index>& s, const char* name) {
      for (Index idx : s) {
        if (seen[static_cast<std::size_t>(idx)]++)
          throw DataError(p.string() + ": node " + std::to_string(idx) +
                          " appears in more than one split (found again in '" +
                          name + "')");
      }
    };
    mark(ds.splits.train, "train");
    mark(ds.splits.val, "val");
    mark(ds.splits.test, "test");
  }

  ds.adjacency.validate();
  return ds;
}

/// Write a dataset in the canonical directory layout. Reals are written
/// with shortest round-trip formatting, so load(save(ds)) is exact.
inline void save_dataset(const GraphDataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "features.csv");
    for (Index i = 0; i < ds.features.rows(); ++i) {
      for (Index j = 0; j < ds.features.cols(); ++j) {
        if (j) out << ',';
        out << detail::format_real(ds.features(i, j));
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "edges.csv");
    for (Index i = 0; i < ds.adjacency.num_rows; ++i)
      for (Index j : ds.adjacency.row(i))
        if (i < j) out << i << ',' << j << '\n';
  }
  {
    std::ofstream out(dir / "labels.csv");
    for (int label : ds.labels) out << label << '\n';
  }
  {
    nlohmann::json j;
    j["train"] = ds.splits.train;
    j["val"] = ds.splits.val;
    j["test"] = ds.splits.test;
    std::ofstream out(dir / "splits.json");
    out << j.dump(2) << '\n';
  }
}

/// Stochastic block model fixture. Nodes are assigned to contiguous blocks
/// (remainder spread over the first blocks), the label is the block id,
/// and features are the one-hot block centroid plus Gaussian noise of
/// scale feat_noise. Splits are stratified per class at 10/20/70.
inline GraphDataset generate_sbm(Index num_nodes, int num_blocks, double p_in,
                                 double p_out, Index feat_dim, double feat_noise,
                                 std::uint64_t seed) {
  if (num_blocks <= 0 || num_blocks > num_nodes)
    throw ConfigError("generate_sbm: num_blocks must be in [1, num_nodes]");
  if (!(0.0 <= p_out && p_out <= p_in && p_in <= 1.0))
    throw ConfigError("generate_sbm: need 0 <= p_out <= p_in <= 1");
  if (feat_dim < num_blocks)
    throw ConfigError("generate_sbm: feat_dim must be >= num_blocks for one-hot centroids");
  if (feat_noise < 0.0) throw ConfigError("generate_sbm: feat_noise must be >= 0");

  GraphDataset ds;
  ds.num_classes = num_blocks;
  ds.labels.resize(static_cast<std::size_t>(num_nodes));
  const Index base = num_nodes / num_blocks;
  const Index rem = num_nodes % num_blocks;
  Index node = 0;
  for (int b = 0; b < num_blocks; ++b) {
    const Index size = base + (b < rem ? 1 : 0);
    for (Index t = 0; t < size; ++t) ds.labels[static_cast<std::size_t>(node++)] = b;
  }

  {
    Rng rng(derive_seed(seed, 0xedce5));
    std::vector<std::pair<Index, Index>> entries;
    for (Index i = 0; i < num_nodes; ++i) {
      for (Index j = i + 1; j < num_nodes; ++j) {
        const double p = ds.labels[static_cast<std::size_t>(i)] ==
                                 ds.labels[static_cast<std::size_t>(j)]
                             ? p_in
                             : p_out;
        if (p > 0.0 && rng.uniform01() < p) {
          entries.emplace_back(i, j);
          entries.emplace_back(j, i);
        }
      }
    }
    ds.adjacency = SparseAdjacency::from_coo(num_nodes, num_nodes, std::move(entries));
  }

  {
    Rng rng(derive_seed(seed, 0xfea75));
    ds.features = Matrix::Zero(num_nodes, feat_dim);
    for (Index i = 0; i < num_nodes; ++i) {
      ds.features(i, ds.labels[static_cast<std::size_t>(i)]) = 1.0;
      if (feat_noise > 0.0)
        for (Index d = 0; d < feat_dim; ++d)
          ds.features(i, d) += feat_noise * rng.normal();
    }
  }

  {
    Rng rng(derive_seed(seed, 0x5b1175));
    std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(num_blocks));
    for (Index i = 0; i < num_nodes; ++i)
      by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
    for (auto& members : by_class) {
      for (std::size_t t = 0; t + 1 < members.size(); ++t) {
        const auto pick = t + rng.uniform_below(members.size() - t);
        std::swap(members[t], members[pick]);
      }
      const std::size_t m = members.size();
      const std::size_t n_train = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                               std::llround(0.1 * m)));
      const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                             std::llround(0.2 * m)));
      for (std::size_t t = 0; t < m; ++t) {
        if (t < n_train)
          ds.splits.train.push_back(members[t]);
        else if (t < n_train + n_val)
          ds.splits.val.push_back(members[t]);
        else
          ds.splits.test.push_back(members[t]);
      }
    }
    std::sort(ds.splits.train.begin(), ds.splits.train.end());
    std::sort(ds.splits.val.begin(), ds.splits.val.end());
    std::sort(ds.splits.test.begin(), ds.splits.test.end());
  }
  return ds;
}

/// Add or delete ⌊ratio·|E|⌋ undirected edges uniformly at random.
/// Deletion uses a partial Fisher–Yates shuffle over the explicit edge
/// list; addition uses rejection sampling with a seen-set, so counts are
/// exact and no duplicates or self-loops appear. Features, labels and
/// splits are untouched.
inline GraphDataset perturb_edges(const GraphDataset& g, const NoiseSpec& spec) {
  if (spec.ratio < 0.0) throw ConfigError("perturb_edges: ratio must be >= 0");
  if (spec.mode == NoiseMode::remove && spec.ratio > 1.0)
    throw ConfigError("perturb_edges: delete ratio must be <= 1");

  const Index n = g.num_nodes();
  std::vector<std::pair<Index, Index>> edges;  // i < j
  edges.reserve(static_cast<std::size_t>(g.num_edges()));
  for (Index i = 0; i < n; ++i)
    for (Index j : g.adjacency.row(i))
      if (i < j) edges.emplace_back(i, j);

  const auto num_edges = static_cast<std::size_t>(edges.size());
  const auto count = static_cast<std::size_t>(spec.ratio * static_cast<double>(num_edges));

  GraphDataset out = g;
  Rng rng(spec.seed);

  if (spec.mode == NoiseMode::remove) {
    for (std::size_t t = 0; t < count; ++t) {
      const auto pick = t + rng.uniform_below(num_edges - t);
      std::swap(edges[t], edges[pick]);
    }
    edges.erase(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(count));
  } else {
    const auto total_pairs =
        static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2;
    if (num_edges + count > total_pairs)
      throw DataError("perturb_edges: requested " + std::to_string(count) +
                      " additions but only " + std::to_string(total_pairs - num_edges) +
                      " absent pairs exist");
    auto key = [n](Index i, Index j) {
      return static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(n) +
             static_cast<std::uint64_t>(j);
    };
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(num_edges + count);
    for (const auto& [i, j] : edges) seen.insert(key(i, j));
    std::size_t added = 0;
    while (added < count) {
      const auto i = static_cast<Index>(rng.uniform_below(static_cast<std::uint64_t>(n)));
      const auto j = static_cast<Index>(rng.uniform_below(static_cast<std::uint64_t>(n)));
      if (i == j) continue;
      const auto [lo, hi] = std::minmax(i, j);
      if (!seen.insert(key(lo, hi)).second) continue;
      edges.emplace_back(lo, hi);
      ++added;
    }
  }

  std::vector<std::pair<Index, Index>> entries;
  entries.reserve(edges.size() * 2);
  for (const auto& [i, j] : edges) {
    entries.emplace_back(i, j);
    entries.emplace_back(j, i);
  }
  out.adjacency = SparseAdjacency::from_coo(n, n, std::move(entries));
  return out;
}

}  // namespace ppgnn
