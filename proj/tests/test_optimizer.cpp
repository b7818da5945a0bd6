#include <doctest.h>

#include <cmath>
#include <limits>

#include "ibmrec/optimizer.hpp"

using namespace ibmrec;

TEST_CASE("first Adam step moves each coordinate by the learning rate against the gradient sign") {
  Matrix p = Matrix::Zero(2, 2);
  Matrix g(2, 2);
  g << 0.5, -2.0, 1e-3, -7.0;
  Adam adam;
  adam.step({&p}, {g}, 0.1);
  CHECK(adam.steps() == 1);
  CHECK(p(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p(0, 1) == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(p(1, 1) == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(p(1, 0) == doctest::Approx(-0.1).epsilon(1e-4));
}

TEST_CASE("Adam matches a hand-unrolled second step") {
  Matrix p = Matrix::Constant(1, 1, 1.0);
  Adam adam;
  const double g1 = 0.3, g2 = -0.1, lr = 0.01;
  adam.step({&p}, {Matrix::Constant(1, 1, g1)}, lr);
  adam.step({&p}, {Matrix::Constant(1, 1, g2)}, lr);
  double m = 0, v = 0, x = 1.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? g1 : g2;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    x -= lr * mh / (std::sqrt(vh) + 1e-8);
  }
  CHECK(p(0, 0) == doctest::Approx(x).epsilon(1e-14));
  CHECK(adam.first_moments()[0](0, 0) == doctest::Approx(m).epsilon(1e-14));
}

TEST_CASE("inactive parameters are left bit-identical") {
  Matrix a = Matrix::Constant(2, 1, 0.25), b = Matrix::Constant(2, 1, 0.75);
  Adam adam;
  adam.step({&a, &b}, {Matrix::Ones(2, 1), Matrix::Ones(2, 1)}, 0.1, {"a", "b"}, {false, true});
  CHECK(a == Matrix::Constant(2, 1, 0.25));
  CHECK(b(0, 0) != 0.75);
}

TEST_CASE("non-finite gradients abort with the parameter name") {
  Matrix a = Matrix::Zero(1, 1);
  Matrix g = Matrix::Constant(1, 1, std::numeric_limits<double>::infinity());
  Adam adam;
  try {
    adam.step({&a}, {g}, 0.1, {"user_latent"});
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("user_latent") != std::string::npos);
  }
  CHECK(a(0, 0) == 0.0);
  CHECK(adam.steps() == 0);
  CHECK_THROWS_AS(adam.step({&a}, {Matrix::Zero(2, 1)}, 0.1), DimensionError);
}
