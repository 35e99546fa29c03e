#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdgamma/distance.hpp"
#include "cdgamma/registry.hpp"
#include "cdgamma/semigroup.hpp"

namespace cdgamma {

// Coupling restricted to the supports of its marginals.
struct CouplingPlan {
  std::vector<std::size_t> rows, cols;  // grid nodes carrying mass in mu, nu
  Eigen::MatrixXd pi;
  Eigen::VectorXd mu, nu;  // marginals on rows, cols

  double marginal_error() const;
};

enum class TransportMethod { kAuto, kExact, kSinkhorn };
std::string to_string(TransportMethod m);

struct TransportOptions {
  TransportMethod method = TransportMethod::kAuto;
  std::size_t exact_max = 2000;  // support size up to which the exact solver runs
  double eps_factor = 1e-3;      // final entropic scale as a fraction of median d^2
  double sinkhorn_tol = 1e-10;   // marginal error target
  int sinkhorn_max_iter = 20000;
};

struct TransportResult {
  double w2 = 0;
  double cost = 0;  // W2^2
  TransportMethod method = TransportMethod::kExact;
  CouplingPlan plan;
  std::optional<double> dual_objective, duality_gap;  // exact solver only
  // Kantorovich potentials on rows and cols: u_i + v_j <= d_ij^2.
  Eigen::VectorXd u, v;
  std::optional<double> epsilon;  // entropic solver only
  int iterations = 0;
};

// W2 between node measures mu and nu. Rows of d must cover the support of mu.
// The exact path solves the transportation problem as a min-cost flow with
// integer costs d^2 / h^2 and certifies it with dual potentials.
TransportResult wasserstein2(const DistanceMatrix& d, const Eigen::VectorXd& mu,
                             const Eigen::VectorXd& nu, double h, const TransportOptions& opt = {});

// Q_s phi(x) = min_y phi(y) + d(x, y)^2 / (2 s) for every source x of d.
Eigen::VectorXd inf_convolution(const Eigen::VectorXd& phi, double s, const DistanceMatrix& d);

// Ent(P_t f) <= (1 + 2 kappa / rho2 + 2 rho1^- t) / (4t) W2(mu, f mu)^2
InequalityReport verify_entropy_wasserstein(const GridModel& g, const Semigroup& P,
                                            const DistanceMatrix& d, const Eigen::VectorXd& f,
                                            const std::string& name, const std::vector<double>& times,
                                            const CDParams& params, const TransportOptions& opt = {});

struct HwiReport {
  InequalityReport hypothesis;  // W2^2 <= c Ent(f)
  InequalityReport conclusion;  // Ent(f) <= C (I(f) + I^Z(f))
  double T = 0, C = 0;
  bool T_optimized = false;
};

// Minimizer of C(T) = A(T) / (1 - c c(T)) over T > T_min, where
// A(T) = int_0^T exp(2 alpha s) ds and c(T) = (1 + 2 kappa / rho2 + 2 rho1^- T) / (4T).
double hwi_constant(const CDParams& p, double c, double T);
double hwi_min_time(const CDParams& p, double c);
double hwi_optimal_time(const CDParams& p, double c);

HwiReport verify_modified_hwi(const GridModel& g, const DistanceMatrix& d, const Eigen::VectorXd& f,
                              const std::string& name, double c, std::optional<double> T,
                              const CDParams& params, const TransportOptions& opt = {});

// Grid samples of a positive expression scaled to integrate to 1 against mu.
Eigen::VectorXd density_from_expression(const GridModel& g, const std::string& expr);
// Seeded expressions exp(a sin(b x + c) + d x) summed over the coordinates.
std::vector<std::string> random_density_expressions(const std::vector<std::string>& coords, std::size_t count,
                                                    std::uint64_t seed);

}  // namespace cdgamma
