#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "ibmrec/gradcheck.hpp"
#include "ibmrec/graph.hpp"

using namespace ibmrec;

namespace {

InteractionSet interactions(Index users, Index items, const std::vector<std::pair<Index, Index>>& train) {
  InteractionSet s;
  s.num_users = users;
  s.num_items = items;
  s.train.resize(static_cast<std::size_t>(users));
  s.val.resize(static_cast<std::size_t>(users));
  s.test.resize(static_cast<std::size_t>(users));
  for (const auto& [u, i] : train) s.train[static_cast<std::size_t>(u)].push_back(i);
  for (auto& v : s.train) std::sort(v.begin(), v.end());
  return s;
}

// Reference: cosine to every other item, sort by (-sim, id), keep the first k nonzero.
Matrix brute_force_knn(const Matrix& f, int k) {
  const Index n = f.rows();
  Matrix out = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Index>> cand;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double ni = f.row(i).norm(), nj = f.row(j).norm();
      const double sim = (ni == 0 || nj == 0) ? 0.0 : (f.row(i) / ni).dot(f.row(j) / nj);
      if (sim != 0.0) cand.emplace_back(-sim, j);
    }
    std::sort(cand.begin(), cand.end());
    for (int r = 0; r < k && r < static_cast<int>(cand.size()); ++r) out(i, cand[r].second) = -cand[r].first;
  }
  return out;
}

// Same neighbour sets; similarities agree to rounding.
bool same_knn(const Matrix& got, const Matrix& want) {
  return (got.array() != 0.0).matrix() == (want.array() != 0.0).matrix() && (got - want).cwiseAbs().maxCoeff() < 1e-12;
}

}  // namespace

TEST_CASE("bipartite adjacency structure") {
  const SparseMatrix one = build_bipartite_adjacency(interactions(1, 1, {{0, 0}}));
  Matrix expected(2, 2);
  expected << 0, 1, 1, 0;
  CHECK(Matrix(one) == expected);

  const InteractionSet s = interactions(3, 4, {{0, 0}, {0, 3}, {1, 1}, {2, 3}, {2, 2}});
  const SparseMatrix a = build_bipartite_adjacency(s);
  CHECK(a.nonZeros() == 10);
  const Matrix d(a);
  CHECK(d == d.transpose());
  CHECK(d.topLeftCorner(3, 3).isZero());
  CHECK(d.bottomRightCorner(4, 4).isZero());
  CHECK(d(0, 3 + 3) == 1.0);
}

TEST_CASE("symmetric normalization on the hand example") {
  // R = [[1, 1], [1, 0]]
  const SparseMatrix a = build_bipartite_adjacency(interactions(2, 2, {{0, 0}, {0, 1}, {1, 0}}));
  const Matrix n(sym_normalize(a));
  CHECK(std::abs(n(0, 2) - 0.5) < 1e-9);
  CHECK(std::abs(n(0, 3) - 0.70711) < 1e-5);
  CHECK(std::abs(n(1, 2) - 0.70711) < 1e-5);
  CHECK(n == n.transpose());

  const Matrix single(sym_normalize(build_bipartite_adjacency(interactions(1, 1, {{0, 0}}))));
  CHECK(single(0, 1) == 1.0);

  // Zero-degree rows stay zero.
  const Matrix isolated(sym_normalize(build_bipartite_adjacency(interactions(2, 2, {{0, 0}}))));
  CHECK(isolated.row(1).isZero());
}

TEST_CASE("kNN hand cases") {
  Matrix f(3, 2);
  f << 1, 0, 1, 0, 0, 1;
  const Matrix g(build_modality_knn(f, 1));
  CHECK(g(0, 1) == 1.0);
  CHECK(g(1, 0) == 1.0);
  // Item 2 is orthogonal to both: no nonzero neighbour.
  CHECK(g.row(2).isZero());
  CHECK(g.diagonal().isZero());

  const Matrix full(build_modality_knn(fixtures::randn(5, 3, 2), 4));
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 5; ++j) CHECK((full(i, j) != 0.0) == (i != j));
  }
  CHECK_THROWS_AS(build_modality_knn(f, 3), ContractError);
  CHECK_THROWS_AS(build_modality_knn(f, 0), ContractError);
}

TEST_CASE("kNN matches brute force including ties") {
  for (std::uint64_t seed : {1, 2, 3}) {
    Matrix f = fixtures::randn(10, 4, seed);
    f.row(7) = f.row(2);  // exact tie: both are each other's best neighbour
    f.row(9) = 2.0 * f.row(2);
    for (int k : {1, 3, 9}) {
      const Matrix got(build_modality_knn(f, k));
      CHECK(same_knn(got, brute_force_knn(f, k)));
    }
  }
}

TEST_CASE("kNN rows hold at most K entries and similarities in [-1, 1]") {
  const SparseMatrix g = build_modality_knn(fixtures::randn(40, 6, 5), 7);
  for (Index r = 0; r < g.outerSize(); ++r) {
    Index count = 0;
    for (SparseMatrix::InnerIterator it(g, r); it; ++it) {
      ++count;
      CHECK(std::abs(it.value()) <= 1.0 + 1e-12);
    }
    CHECK(count == 7);
  }
}

TEST_CASE("fusion: a single modality reduces to its normalized graph") {
  const Matrix f = fixtures::randn(8, 3, 11);
  const SemanticItemGraph one = build_semantic_graph({build_modality_knn(f, 3)});
  Tape t;
  Var v = fuse_and_normalize(one, t.constant(Matrix::Constant(1, 1, 0.7)));
  const SparseMatrix expected = sym_normalize(build_modality_knn(f, 3));
  std::vector<double> ev;
  for (Index r = 0; r < expected.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(expected, r); it; ++it) ev.push_back(it.value());
  }
  REQUIRE(static_cast<Index>(ev.size()) == v.rows());
  for (Index e = 0; e < v.rows(); ++e) CHECK(std::abs(v.value()(e, 0) - ev[static_cast<std::size_t>(e)]) < 1e-14);

  // Two identical modalities with equal logits give the same result.
  const SemanticItemGraph two = build_semantic_graph({build_modality_knn(f, 3), build_modality_knn(f, 3)});
  Var w = fuse_and_normalize(two, t.constant(Matrix::Zero(2, 1)));
  CHECK((w.value() - v.value()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("fusion: 2-item chain") {
  SparseMatrix s(2, 2);
  std::vector<Triplet> t = {{0, 1, 0.8}, {1, 0, 0.2}};
  s.setFromTriplets(t.begin(), t.end());
  const SemanticItemGraph g = build_semantic_graph({s});
  Tape tape;
  Var v = fuse_and_normalize(g, tape.constant(Matrix::Zero(1, 1)));
  const double expected = 0.8 / std::sqrt(0.8 * 0.2);
  CHECK(std::abs(v.value()(0, 0) - expected) < 1e-12);
  CHECK(std::abs(v.value()(1, 0) - 0.2 / std::sqrt(0.8 * 0.2)) < 1e-12);
}

TEST_CASE("fusion values are convex combinations on shared support") {
  const Matrix f1 = fixtures::randn(12, 4, 21), f2 = fixtures::randn(12, 4, 22);
  const SemanticItemGraph g = build_semantic_graph({build_modality_knn(f1, 4), build_modality_knn(f2, 4)});
  CHECK(g.num_modalities() == 2);
  CHECK(g.num_edges() >= 48);
  Matrix logits(2, 1);
  logits << 0.3, -0.4;
  const double w0 = std::exp(0.3) / (std::exp(0.3) + std::exp(-0.4));
  const Vector fused = g.modality_values.col(0) * w0 + g.modality_values.col(1) * (1 - w0);
  for (Index e = 0; e < g.num_edges(); ++e) {
    const double lo = std::min(g.modality_values(e, 0), g.modality_values(e, 1));
    const double hi = std::max(g.modality_values(e, 0), g.modality_values(e, 1));
    CHECK(fused(e) >= lo - 1e-15);
    CHECK(fused(e) <= hi + 1e-15);
  }
  CHECK_THROWS_AS(build_semantic_graph(std::vector<SparseMatrix>{}), StructureError);
}

TEST_CASE("fusion gradient into modality logits") {
  const SemanticItemGraph g =
      build_semantic_graph({build_modality_knn(fixtures::randn(9, 3, 31), 3), build_modality_knn(fixtures::randn(9, 3, 32), 3)});
  const Matrix weights = fixtures::randn(g.num_edges(), 1, 33);
  const GradientCheck r = finite_diff_check(
      [&](Tape& t, std::span<const Var> p) { return sum(mul(fuse_and_normalize(g, p[0]), t.constant(weights))); },
      {fixtures::randn(2, 1, 34)});
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("edge index helpers follow storage order") {
  SparseMatrix s(3, 3);
  std::vector<Triplet> t = {{2, 0, 1}, {0, 2, 1}, {0, 1, 1}};
  s.setFromTriplets(t.begin(), t.end());
  s.makeCompressed();
  CHECK(edge_sources(s) == std::vector<Index>{0, 0, 2});
  CHECK(edge_targets(s) == std::vector<Index>{1, 2, 0});
}
