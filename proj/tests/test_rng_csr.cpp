#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "ppgnn/csr.hpp"
#include "ppgnn/error.hpp"
#include "ppgnn/rng.hpp"

using namespace ppgnn;

namespace {

Matrix dense_of(const SparseAdjacency& a) {
  Matrix d = Matrix::Zero(a.num_rows, a.num_cols);
  for (Index i = 0; i < a.num_rows; ++i) {
    const auto cols = a.row(i);
    const auto vals = a.row_values(i);
    for (std::size_t e = 0; e < cols.size(); ++e)
      d(i, cols[e]) = a.has_values() ? vals[e] : 1.0;
  }
  return d;
}

SparseAdjacency random_graph(Index n, double density, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<Index, Index>> entries;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (rng.uniform01() < density) {
        entries.emplace_back(i, j);
        entries.emplace_back(j, i);
      }
  return SparseAdjacency::from_coo(n, n, std::move(entries));
}

}  // namespace

TEST_CASE("rng reproduces the published SplitMix64 stream for seed 0") {
  // First outputs of the reference splitmix64 with initial state 0.
  Rng rng(0);
  REQUIRE(rng.next_u64() == 0xe220a8397b1dcdafULL);
  REQUIRE(rng.next_u64() == 0x6e789e6aa1b965f4ULL);
  REQUIRE(rng.next_u64() == 0x06c45d188009454fULL);
}

TEST_CASE("rng streams are deterministic per seed and distinct across seeds") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    all_equal = all_equal && (x == b.next_u64());
    any_diff = any_diff || (x != c.next_u64());
  }
  REQUIRE(all_equal);
  REQUIRE(any_diff);
}

TEST_CASE("uniform01 lies in [0,1) with the right mean and variance") {
  Rng rng(7);
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sumsq += u * u;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  // 4σ Monte-Carlo bounds: sd of the mean is 1/sqrt(12 n).
  REQUIRE(std::abs(mean - 0.5) < 4.0 / std::sqrt(12.0 * n));
  REQUIRE(std::abs(var - 1.0 / 12.0) < 0.002);
}

TEST_CASE("uniform_open01 never returns an endpoint") {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform_open01();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(std::isfinite(std::log(-std::log(u))));
  }
}

TEST_CASE("uniform_below is unbiased over a small range") {
  Rng rng(11);
  const int n = 60000;
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i) ++counts[rng.uniform_below(3)];
  const double sigma = std::sqrt(n * (1.0 / 3.0) * (2.0 / 3.0));
  for (int c : counts) REQUIRE(std::abs(c - n / 3.0) < 4.0 * sigma);
}

TEST_CASE("normal draws match the first two moments") {
  Rng rng(13);
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  REQUIRE(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  REQUIRE(std::abs(sumsq / n - 1.0) < 0.03);
}

TEST_CASE("derive_seed separates streams by salt") {
  const auto s1 = derive_seed(5, 1);
  const auto s2 = derive_seed(5, 2);
  REQUIRE(s1 != s2);
  REQUIRE(derive_seed(5, 1) == s1);  // pure function
}

TEST_CASE("from_coo sorts, deduplicates, and range-checks") {
  std::vector<std::pair<Index, Index>> entries = {{1, 2}, {0, 1}, {1, 2}, {1, 0}};
  const auto a = SparseAdjacency::from_coo(3, 3, std::move(entries));
  REQUIRE(a.nnz() == 3);  // duplicate (1,2) collapsed
  REQUIRE(a.contains(0, 1));
  REQUIRE(a.contains(1, 0));
  REQUIRE(a.contains(1, 2));
  REQUIRE_FALSE(a.contains(2, 1));
  REQUIRE_THROWS_AS(SparseAdjacency::from_coo(2, 2, {{0, 2}}), DataError);
  REQUIRE_THROWS_AS(SparseAdjacency::from_coo(2, 2, {{-1, 0}}), DataError);
}

TEST_CASE("transpose matches the dense oracle") {
  const auto a = random_graph(9, 0.4, 21);
  auto at = a.transpose();
  const Matrix d = dense_of(a);
  const Matrix dt = dense_of(at);
  REQUIRE((dt - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("symmetric_union contains an entry iff either direction was present") {
  std::vector<std::pair<Index, Index>> entries = {{0, 1}, {2, 0}, {3, 3}};
  const auto a = SparseAdjacency::from_coo(4, 4, std::move(entries));
  const auto sym = a.symmetric_union();
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j)
      REQUIRE(sym.contains(i, j) == (a.contains(i, j) || a.contains(j, i)));
}

TEST_CASE("with_unit_diagonal adds exactly the missing diagonal entries") {
  const auto a = SparseAdjacency::from_coo(3, 3, {{0, 1}, {1, 1}});
  const auto aug = a.with_unit_diagonal();
  REQUIRE(aug.nnz() == 4);  // (0,1),(0,0),(1,1),(2,2)
  for (Index i = 0; i < 3; ++i) REQUIRE(aug.contains(i, i));
}

TEST_CASE("spmm and spmm_transpose match dense products to 1e-12") {
  const auto a = random_graph(12, 0.3, 33);
  Rng rng(34);
  Matrix x(12, 5);
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
  const Matrix d = dense_of(a);
  REQUIRE((spmm(a, x) - d * x).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((spmm_transpose(a, x) - d.transpose() * x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("row-stochastic normalization: 3-node path rows average the closed neighborhood") {
  // Path 0–1–2 with self-loops: row 1 has weight 1/3 on {0,1,2}.
  const auto a = SparseAdjacency::from_coo(3, 3, {{0, 1}, {1, 0}, {1, 2}, {2, 1}});
  const auto op = degree_normalize(a, Normalization::row_stochastic, true);
  const Matrix d = dense_of(op.base);
  REQUIRE(d(1, 0) == Catch::Approx(1.0 / 3.0).epsilon(1e-14));
  REQUIRE(d(1, 1) == Catch::Approx(1.0 / 3.0).epsilon(1e-14));
  REQUIRE(d(1, 2) == Catch::Approx(1.0 / 3.0).epsilon(1e-14));
  for (Index i = 0; i < 3; ++i)
    REQUIRE(d.row(i).sum() == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("symmetric normalization matches the dense D^{-1/2}(A+I)D^{-1/2} oracle") {
  const auto a = random_graph(10, 0.35, 55);
  const auto op = degree_normalize(a, Normalization::symmetric, true);
  const Matrix aug = dense_of(a.with_unit_diagonal());
  Vector deg = aug.rowwise().sum();
  Matrix oracle(10, 10);
  for (Index i = 0; i < 10; ++i)
    for (Index j = 0; j < 10; ++j)
      oracle(i, j) = aug(i, j) / std::sqrt(deg[i] * deg[j]);
  REQUIRE((dense_of(op.base) - oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("row-stochastic normalization of an isolated node needs self-loops") {
  const auto a = SparseAdjacency::from_coo(3, 3, {{0, 1}, {1, 0}});  // node 2 isolated
  REQUIRE_THROWS_AS(degree_normalize(a, Normalization::row_stochastic, false), DataError);
  const auto op = degree_normalize(a, Normalization::row_stochastic, true);
  REQUIRE(dense_of(op.base)(2, 2) == 1.0);
}

TEST_CASE("normalized operators apply and apply_transpose consistently") {
  const auto a = random_graph(8, 0.4, 77);
  const auto op = degree_normalize(a, Normalization::row_stochastic, true);
  Rng rng(78);
  Matrix x(8, 3);
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
  const Matrix d = dense_of(op.base);
  REQUIRE((op.apply(x) - d * x).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((op.apply_transpose(x) - d.transpose() * x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("validate rejects malformed CSR structures") {
  SparseAdjacency bad;
  bad.num_rows = 2;
  bad.num_cols = 2;
  bad.row_offsets = {0, 1};  // wrong length
  bad.col_indices = {0};
  REQUIRE_THROWS_AS(bad.validate(), DataError);
}
