#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "ibmrec/autodiff.hpp"
#include "ibmrec/gradcheck.hpp"

using namespace ibmrec;

namespace {

Matrix randn(Index r, Index c, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Random weights so every output entry contributes to the gradient.
Var weighted(Var m, std::uint64_t seed) {
  Var w = m.tape()->constant(randn(m.rows(), m.cols(), seed));
  return sum(mul(m, w));
}

void check(const LossBuilder& f, const std::vector<Matrix>& params, double tol = 1e-6) {
  const GradientCheck r = finite_diff_check(f, params);
  INFO("worst param " << r.worst_param << " (" << r.worst_row << "," << r.worst_col << ") analytic " << r.analytic
                      << " numeric " << r.numeric);
  CHECK(r.max_rel_error < tol);
}

}  // namespace

TEST_CASE("scalar anchors") {
  Tape t;
  Var z = t.constant(Matrix::Zero(1, 1));
  CHECK(sigmoid(z).scalar() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(log_sigmoid(z).scalar() == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  Var one = t.constant(Matrix::Ones(1, 1));
  CHECK(exp(neg(one)).scalar() == doctest::Approx(0.36787944117144233).epsilon(1e-15));
  // log sigmoid stays finite far in the tails
  Matrix big(1, 2);
  big << -800.0, 800.0;
  Var b = t.constant(big);
  CHECK(log_sigmoid(b).value()(0, 0) == doctest::Approx(-800.0));
  CHECK(log_sigmoid(b).value()(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("non-finite values are rejected when recorded") {
  Tape t;
  Matrix bad = Matrix::Ones(2, 2);
  bad(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(t.constant(bad), DomainError);
  Var zero = t.constant(Matrix::Zero(1, 1));
  CHECK_THROWS_AS(log(zero), DomainError);
}

TEST_CASE("shape contracts") {
  Tape t;
  Var a = t.parameter(Matrix::Ones(2, 3));
  Var b = t.parameter(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(add(a, b), DimensionError);
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
  const std::vector<Index> idx = {0, 5};
  CHECK_THROWS_AS(row_gather(a, idx), IndexError);
  CHECK_THROWS_AS(t.backward(a), ContractError);
}

TEST_CASE("gradient accumulates across shared uses") {
  Tape t;
  Var x = t.parameter(Matrix::Constant(1, 1, 3.0));
  Var y = add(mul(x, x), x);  // x^2 + x
  t.backward(y);
  CHECK(t.grad(x)(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("elementwise ops match finite differences") {
  const std::vector<Matrix> p = {randn(3, 4, 1), randn(3, 4, 2)};
  check([](Tape&, std::span<const Var> v) { return weighted(add(v[0], v[1]), 9); }, p);
  check([](Tape&, std::span<const Var> v) { return weighted(sub(v[0], v[1]), 9); }, p);
  check([](Tape&, std::span<const Var> v) { return weighted(mul(v[0], v[1]), 9); }, p);
  check([](Tape&, std::span<const Var> v) { return weighted(exp(scale(v[0], 0.5)), 9); }, p);
  check([](Tape&, std::span<const Var> v) { return weighted(sigmoid(v[0]), 9); }, p);
  check([](Tape&, std::span<const Var> v) { return weighted(log_sigmoid(v[0]), 9); }, p);
  check([](Tape&, std::span<const Var> v) { return weighted(log(add(mul(v[0], v[0]), mul(v[1], v[1]))), 9); }, p);
  check([](Tape&, std::span<const Var> v) { return sum_squares(v[0]); }, p);
  check([](Tape&, std::span<const Var> v) { return mean(mul(v[0], v[1])); }, p);
}

TEST_CASE("relu gradient away from the kink") {
  Matrix x = randn(4, 3, 3);
  for (Index i = 0; i < x.size(); ++i) {
    if (std::abs(x.data()[i]) < 0.1) x.data()[i] = 0.5;
  }
  check([](Tape&, std::span<const Var> v) { return weighted(relu(v[0]), 4); }, {x});
}

TEST_CASE("matrix products and shaping") {
  const std::vector<Matrix> p = {randn(3, 4, 5), randn(4, 2, 6)};
  check([](Tape&, std::span<const Var> v) { return weighted(matmul(v[0], v[1]), 7); }, p);
  const Matrix lhs = randn(5, 3, 8);
  check([&](Tape&, std::span<const Var> v) { return weighted(matmul(lhs, v[0]), 7); }, {randn(3, 2, 9)});
  check([](Tape&, std::span<const Var> v) { return weighted(transpose(v[0]), 10); }, {randn(3, 4, 11)});
  check([](Tape&, std::span<const Var> v) { return weighted(concat_cols(v[0], v[1]), 12); },
        {randn(3, 2, 13), randn(3, 4, 14)});
  check([](Tape&, std::span<const Var> v) { return weighted(concat_rows(v[0], v[1]), 12); },
        {randn(2, 3, 13), randn(4, 3, 14)});
  check([](Tape&, std::span<const Var> v) { return weighted(add_row(v[0], v[1]), 15); },
        {randn(4, 3, 16), randn(1, 3, 17)});
  check([](Tape&, std::span<const Var> v) { return weighted(row_dot(v[0], v[1]), 18); },
        {randn(4, 3, 19), randn(4, 3, 20)});
}

TEST_CASE("row_gather scatters repeated rows") {
  const std::vector<Index> idx = {2, 0, 2, 1, 2};
  check([&](Tape&, std::span<const Var> v) { return weighted(row_gather(v[0], idx), 21); }, {randn(3, 4, 22)});
  Tape t;
  Var x = t.parameter(Matrix::Ones(3, 1));
  t.backward(sum(row_gather(x, idx)));
  CHECK(t.grad(x)(2, 0) == 3.0);
  CHECK(t.grad(x)(0, 0) == 1.0);
}

TEST_CASE("sparse products") {
  std::vector<Triplet> tr = {{0, 1, 0.5}, {1, 0, -1.0}, {1, 2, 2.0}, {2, 2, 0.25}, {3, 0, 1.5}};
  SparseMatrix s(4, 3);
  s.setFromTriplets(tr.begin(), tr.end());
  s.makeCompressed();
  check([&](Tape&, std::span<const Var> v) { return weighted(sparse_matmul(s, v[0]), 23); }, {randn(3, 2, 24)});
  SparseMatrix pattern(3, 3);
  std::vector<Triplet> pt = {{0, 1, 1}, {1, 0, 1}, {1, 2, 1}, {2, 0, 1}};
  pattern.setFromTriplets(pt.begin(), pt.end());
  pattern.makeCompressed();
  check([&](Tape&, std::span<const Var> v) { return weighted(weighted_sparse_matmul(pattern, v[0], v[1]), 25); },
        {randn(4, 1, 26), randn(3, 2, 27)});

  // Agrees with the dense product.
  Tape t;
  Matrix vals = randn(4, 1, 28);
  Matrix d = randn(3, 2, 29);
  Var out = weighted_sparse_matmul(pattern, t.constant(vals), t.constant(d));
  Matrix dense = Matrix::Zero(3, 3);
  dense(0, 1) = vals(0, 0);
  dense(1, 0) = vals(1, 0);
  dense(1, 2) = vals(2, 0);
  dense(2, 0) = vals(3, 0);
  CHECK((out.value() - dense * d).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("normalization ops") {
  check([](Tape&, std::span<const Var> v) { return weighted(l2_row_normalize(v[0], 1e-12), 30); },
        {randn(4, 3, 31)});
  check([](Tape&, std::span<const Var> v) { return weighted(softmax(v[0]), 32); }, {randn(4, 1, 33)});

  SparseMatrix pattern(3, 3);
  std::vector<Triplet> pt = {{0, 1, 1}, {0, 2, 1}, {1, 0, 1}, {2, 0, 1}, {2, 1, 1}};
  pattern.setFromTriplets(pt.begin(), pt.end());
  pattern.makeCompressed();
  Matrix vals = randn(5, 1, 34);
  vals(0, 0) = -0.7;  // negative entries enter the degree through |s|
  check([&](Tape&, std::span<const Var> v) { return weighted(normalize_edge_values(pattern, v[0]), 35); }, {vals});
}

TEST_CASE("normalize_edge_values on a hand example") {
  // Path 0-1-2 with unit weights: degrees 1, 2, 1 -> every edge 1/sqrt(2).
  SparseMatrix pattern(3, 3);
  std::vector<Triplet> pt = {{0, 1, 1}, {1, 0, 1}, {1, 2, 1}, {2, 1, 1}};
  pattern.setFromTriplets(pt.begin(), pt.end());
  pattern.makeCompressed();
  Tape t;
  Var n = normalize_edge_values(pattern, t.constant(Matrix::Ones(4, 1)));
  for (Index e = 0; e < 4; ++e) CHECK(n.value()(e, 0) == doctest::Approx(0.7071067811865476).epsilon(1e-12));
}

TEST_CASE("kernel ops") {
  check([](Tape&, std::span<const Var> v) { return weighted(rbf_kernel(v[0], 0.7), 36); }, {randn(5, 3, 37, 0.5)});
  check([](Tape&, std::span<const Var> v) { return centered_trace(v[0], v[1]); },
        {randn(4, 4, 38), randn(4, 4, 39)});
  check([](Tape&, std::span<const Var> v) { return diag_cross_entropy(v[0]); }, {randn(4, 4, 40)});
}

TEST_CASE("diag_cross_entropy with uniform logits is log of the batch size") {
  Tape t;
  for (Index b : {2, 5, 17}) {
    Var l = t.constant(Matrix::Constant(b, b, 0.3));
    CHECK(std::abs(diag_cross_entropy(l).scalar() - std::log(static_cast<double>(b))) < 1e-12);
  }
}

TEST_CASE("backward leaves constants without gradients") {
  Tape t;
  Var c = t.constant(Matrix::Ones(2, 2));
  Var p = t.parameter(Matrix::Ones(2, 2));
  t.backward(sum(mul(c, p)));
  CHECK(t.grad(c).isZero());
  CHECK(t.grad(p).isOnes());
}
