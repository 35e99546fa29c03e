#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdgamma/operator.hpp"

namespace cdgamma {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct CDParams {
  double rho1 = 0, rho2 = 1, kappa = 0, d = kInf;

  CDParams() = default;
  // Throws std::invalid_argument unless rho2 > 0, kappa >= 0, d > 0.
  CDParams(double rho1, double rho2, double kappa, double d);

  double rho1_minus() const { return rho1 < 0 ? -rho1 : 0.0; }
  bool finite_dimension() const { return d != kInf; }
};

double alpha_of(const CDParams& p);
double t0_of(const CDParams& p, double rho0);

// Per-field nullable: unset means "to be searched". rho2_free marks models
// without a vertical frame, where rho2 does not enter the inequality.
struct ClaimedParams {
  std::optional<double> rho1, rho2, kappa, d;
  bool rho2_free = false;

  bool complete() const { return rho1 && (rho2 || rho2_free) && kappa && d; }
  CDParams resolve() const;  // throws if incomplete; a free rho2 resolves to 1
};

struct ModelDescriptor {
  std::string name;
  DiffusionOperator op;
  ClaimedParams claimed;
  bool compact = false;
  bool finite_measure = false;
  std::string notes;
};

ModelDescriptor heisenberg(int n);
ModelDescriptor grushin(int n);
// c[l][i][j] are the step-2 structure constants, antisymmetric in (i, j).
ModelDescriptor carnot_step2(int m, int k,
                             const std::vector<std::vector<std::vector<Rational>>>& c);
ModelDescriptor ornstein_uhlenbeck(int n);
ModelDescriptor euclidean(int n);

// Accepts "heisenberg(1)", "grushin(2)", "ornstein_uhlenbeck(1)", "euclidean(3)".
ModelDescriptor builtin_model(const std::string& spec);
// Built-in spec or a path to a model file.
ModelDescriptor load_model(const std::string& ref);

nlohmann::json model_to_json(const ModelDescriptor& m);
ModelDescriptor model_from_json(const nlohmann::json& j);
std::string serialize_model(const ModelDescriptor& m);
ModelDescriptor parse_model(const std::string& text);

nlohmann::json params_to_json(const CDParams& p);
CDParams params_from_json(const nlohmann::json& j);
nlohmann::json json_number(double x);
double number_from_json(const nlohmann::json& j);

}  // namespace cdgamma
