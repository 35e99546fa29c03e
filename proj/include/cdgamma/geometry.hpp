#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdgamma/registry.hpp"
#include "cdgamma/semigroup.hpp"

namespace cdgamma {

// Node subset of a grid, stored as a 0/1 indicator.
struct GridSet {
  std::string label;
  Eigen::VectorXd indicator;

  double measure(const GridModel& g) const { return g.mu.dot(indicator); }
  GridSet complement() const;
  std::size_t count() const;
};

// "expr <= c" style membership; nodes on the threshold belong to the set.
// Accepts <=, <, >=, > with an expression on either side.
GridSet threshold_set(const GridModel& g, const std::string& condition);
GridSet node_set(const GridModel& g, const std::vector<std::size_t>& nodes, std::string label = "nodes");

// Fewest nodes in a connected piece of A or of its complement.
std::size_t smallest_component(const GridModel& g, const GridSet& A);

// Sets {f <= c} for seeded smooth f, with c chosen so mu(A) lands in [0.02, 0.5].
// Draws where A or its complement has a piece of fewer than min_component
// nodes are skipped, since mollification cannot resolve them.
std::vector<GridSet> random_threshold_sets(const GridModel& g, std::size_t count, std::uint64_t seed,
                                           std::size_t min_component = 16);

struct PerimeterCurve {
  double tau = 0;              // semigroup time per mollification step
  std::vector<double> values;  // values[k] = integral of sqrt(Gamma(P_{k tau} 1_A))
  std::size_t knee = 0;        // first step after which every relative drop is below flat_tol
  bool flattened = false;
  double flat_tol = 0;

  double value() const { return values.back(); }
};

// Mollified horizontal perimeter. tau <= 0 selects h^2 / 2.
PerimeterCurve perimeter_curve(const GridModel& g, const Semigroup& P, const GridSet& A, int steps,
                               double tau = 0, double flat_tol = 1e-2);
double horizontal_perimeter(const GridModel& g, const Semigroup& P, const GridSet& A, int steps);
double horizontal_perimeter(const GridModel& g, const GridSet& A, int steps);

// ln 2 / (4 (3 + 2 kappa / rho2)) min(sqrt(rho0), rho0 / sqrt(rho1^-))
double isoperimetric_constant(const CDParams& p, double rho0);

// P(A) >= c mu(A) sqrt(ln(1 / mu(A))) for mu(A) <= 1/2. The report stores the
// perimeter as lhs and the bound as rhs, with margin lhs - rhs.
InequalityReport verify_isoperimetry(const GridModel& g, const Semigroup& P, const GridSet& A, double rho0,
                                     const CDParams& params, int steps = 8);

}  // namespace cdgamma
