#include <cmath>
#include <numbers>

#include "doctest.h"

#include "cdgamma/geometry.hpp"

using namespace cdgamma;

namespace {

GridModel ou_grid(double h = 0.05) {
  GridSpec s;
  s.axes = {{-6, 6}};
  s.h = h;
  return discretize(ornstein_uhlenbeck(1), s);
}

const CDParams kOu(1, 1, 0, kInf);

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double normal_pdf(double x) { return std::exp(-x * x / 2) / std::sqrt(2 * std::numbers::pi); }

}  // namespace

TEST_SUITE("isoperimetry") {

TEST_CASE("threshold sets") {
  const auto g = ou_grid();
  const auto a = threshold_set(g, "x <= 0"), b = threshold_set(g, "x < 0"), c = threshold_set(g, "0 >= x");
  CHECK(a.indicator == b.indicator);
  CHECK(a.indicator == c.indicator);
  CHECK(a.count() == 121);
  CHECK(a.measure(g) + threshold_set(g, "x > 0").measure(g) == doctest::Approx(1 + g.mu[120]));
  CHECK(a.complement().measure(g) == doctest::Approx(1 - a.measure(g)));
  CHECK(node_set(g, {0, 1, 2}).count() == 3);
  CHECK_THROWS_AS(threshold_set(g, "x = 0"), std::invalid_argument);
  CHECK_THROWS_AS(node_set(g, {g.size()}), std::out_of_range);
}

TEST_CASE("perimeter of trivial sets and complements") {
  const auto g = ou_grid();
  const Semigroup P(g);
  CHECK(horizontal_perimeter(g, P, node_set(g, {}), 4) == 0);
  CHECK(horizontal_perimeter(g, P, threshold_set(g, "x <= 10"), 4) <= 1e-12);
  for (const char* set : {"x <= 0", "sin(2*x) <= 0.3", "x^2 <= 1"}) {
    const auto A = threshold_set(g, set);
    for (int k : {0, 1, 8}) {
      CHECK(std::abs(horizontal_perimeter(g, P, A, k) - horizontal_perimeter(g, P, A.complement(), k)) <= 1e-8);
    }
  }
  CHECK_THROWS_AS(horizontal_perimeter(g, P, node_set(g, {}), -1), std::invalid_argument);
}

TEST_CASE("Gaussian half-line perimeter approaches the density at the boundary") {
  const double target = normal_pdf(0);
  for (double h : {0.1, 0.05, 0.025}) {
    const auto g = ou_grid(h);
    const Semigroup P(g);
    const auto c = perimeter_curve(g, P, threshold_set(g, "x <= 0"), 8);
    // raw indicator overcounts by sqrt 2 across a single jump
    CHECK(c.values[0] == doctest::Approx(std::sqrt(2.0) * target).epsilon(0.02));
    CHECK(c.flattened);
    for (std::size_t k = c.knee + 1; k < c.values.size(); ++k) CHECK(c.values[k] <= c.values[k - 1] + 1e-12);
    CHECK(c.value() == doctest::Approx(target).epsilon(0.03));
    // further smoothing keeps lowering the estimate, as P_t 1_A has perimeter e^{-t} phi(0)
    const auto longer = perimeter_curve(g, P, threshold_set(g, "x <= 0"), 16);
    CHECK(longer.value() < c.value());
  }
}

TEST_CASE("periodic half circle has two boundary points") {
  GridSpec s;
  s.axes = {{0, 1}};
  s.h = 1.0 / 128;
  s.boundary = Boundary::kPeriodic;
  const auto g = discretize(euclidean(1), s);
  const Semigroup P(g);
  const auto A = threshold_set(g, "x <= 0.5");
  CHECK(horizontal_perimeter(g, P, A, 8) / g.mu.sum() == doctest::Approx(2).epsilon(0.02));
}

TEST_CASE("isoperimetric constant") {
  CHECK(isoperimetric_constant(kOu, 1) == doctest::Approx(std::log(2.0) / 12));
  const double m = normal_cdf(-2);
  CHECK(isoperimetric_constant(kOu, 1) * m * std::sqrt(std::log(1 / m)) == doctest::Approx(0.00256).epsilon(1e-2));
  CHECK(isoperimetric_constant(kOu, 1) * 0.5 * std::sqrt(std::log(2.0)) == doctest::Approx(0.0240).epsilon(1e-2));
  // with negative rho1 the smaller of the two scalings applies
  const CDParams p(-4, 1, 1, 2);
  CHECK(isoperimetric_constant(p, 1) == doctest::Approx(std::log(2.0) / 20 * 0.5));
  CHECK(isoperimetric_constant(p, 0.25) == doctest::Approx(std::log(2.0) / 20 * 0.125));
  CHECK_THROWS_AS(isoperimetric_constant(kOu, 0), std::invalid_argument);
}

TEST_CASE("Gaussian half-lines satisfy the isoperimetric bound by a wide factor") {
  const auto g = ou_grid();
  const Semigroup P(g);
  for (double t : {0.0, -0.5, -1.0, -2.0}) {
    const auto A = threshold_set(g, "x <= " + std::to_string(t));
    const auto r = verify_isoperimetry(g, P, A, 1, kOu);
    CHECK(r.pass);
    CHECK(r.main.worst.lhs == doctest::Approx(normal_pdf(t)).epsilon(0.01));
    CHECK(r.main.worst.lhs >= 10 * r.main.worst.rhs);
    CHECK(r.constants.at(0).expression == "ln2/(4(3+2κ/ρ₂))·min(√ρ₀, ρ₀/√ρ₁⁻)");
  }
  const auto empty = verify_isoperimetry(g, P, node_set(g, {}, "empty"), 1, kOu);
  CHECK(empty.pass);
  CHECK(empty.main.worst.lhs == 0);
  CHECK(empty.main.worst.rhs == 0);
  CHECK_THROWS_AS(verify_isoperimetry(g, P, threshold_set(g, "x <= 1"), 1, kOu), std::invalid_argument);
}

TEST_CASE("resolution of set pieces") {
  const auto g = ou_grid();
  CHECK(smallest_component(g, threshold_set(g, "x <= 0")) == 120);
  CHECK(smallest_component(g, threshold_set(g, "x^2 <= 0.01")) == 5);
  CHECK(smallest_component(g, node_set(g, {7})) == 1);
}

TEST_CASE("random threshold sets") {
  const auto g = ou_grid();
  const Semigroup P(g);
  const auto sets = random_threshold_sets(g, 50, 1);
  REQUIRE(sets.size() == 50);
  for (const auto& A : sets) {
    CHECK(A.measure(g) <= 0.5);
    CHECK(A.measure(g) > 0);
    CHECK(smallest_component(g, A) >= 16);
    CHECK(verify_isoperimetry(g, P, A, 1, kOu).pass);
    // the label alone reproduces the set
    CHECK(threshold_set(g, A.label).indicator == A.indicator);
  }
  CHECK(random_threshold_sets(g, 3, 1)[2].label == sets[2].label);
  CHECK(random_threshold_sets(g, 3, 2)[2].label != sets[2].label);
}

}  // TEST_SUITE
