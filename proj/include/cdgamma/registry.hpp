#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdgamma/distance.hpp"
#include "cdgamma/model.hpp"
#include "cdgamma/semigroup.hpp"

namespace cdgamma {

// Floor that turns a nonnegative grid function into a member of A_eps.
inline constexpr double kFloor = 1e-8;
// Kernel values below this fraction of the row peak are not resolved.
inline constexpr double kKernelResolution = 1e-12;

const std::vector<std::string>& registry_ids();
bool is_registry_id(const std::string& id);

using Point = std::vector<double>;

struct RegistryInputs {
  std::vector<std::string> functions;  // expressions in the grid coordinates
  std::vector<double> times;
  double interior = 2.0 / 3.0;  // nodewise checks use this central fraction
  // Two-point checks use these (x, y) pairs when given, otherwise every
  // source against every evaluation node.
  std::vector<std::pair<Point, Point>> pairs;
  std::vector<Point> sources;  // default: all evaluation nodes, or a seeded sample
  std::size_t max_sources = 400;
  std::size_t sampled_sources = 16;
  std::uint64_t seed = 1;
  std::optional<double> rho0;
  std::optional<double> alpha;  // GRAD_ALPHA exponent, default -min(rho2, rho1 - kappa, 0)
  double wang_alpha = 2;
  double p = 2;  // HYPERCONTRACT source exponent
};

struct Evaluation {
  std::string function;
  double t = 0;
  std::optional<std::size_t> node, node_y;  // unset for integrated inequalities
  std::vector<double> x, y;
  double lhs = 0, rhs = 0;
  double margin = 0, tolerance = 0;
};

struct ConstantRecord {
  std::string expression;
  std::optional<double> t;
  double value = 0;
};

struct LevelReport {
  double h = 0;
  std::size_t nodes = 0;
  std::size_t evaluations = 0;
  double min_margin = 0;  // margin of the evaluation with the least slack
  double tolerance = 0;   // tolerance at that evaluation
  Evaluation worst;
  bool pass = false;  // min_margin >= -tolerance
  std::vector<std::string> notes;
};

struct InequalityReport {
  std::string id;
  CDParams params;
  std::vector<double> times;
  std::string sample;
  LevelReport main;
  std::optional<LevelReport> half_resolution;
  std::vector<ConstantRecord> constants;
  std::vector<std::string> notes;
  bool pass = false;

  double min_margin() const { return main.min_margin; }
};

nlohmann::json report_to_json(const InequalityReport& r);

// Margins are accepted down to -(1e-6 + 5 h^2 scale), with scale the larger
// side (at least 1 for inequalities compared in log form).
double inequality_tolerance(double h, double lhs, double rhs, bool log_form);

struct VerifyOptions {
  bool half_resolution = true;
  int jobs = 1;
  SemigroupOptions semigroup;
};

// Runs registry checks on a model grid and, optionally, on the grid with
// twice the spacing. P_t of every derived quantity is cached per grid.
class HeatVerifier {
 public:
  HeatVerifier(const ModelDescriptor& model, const GridSpec& spec, const CDParams& params,
               VerifyOptions opt = {});
  ~HeatVerifier();

  InequalityReport verify(const std::string& id, const RegistryInputs& in);
  std::vector<InequalityReport> verify_all(const std::vector<std::string>& ids,
                                           const RegistryInputs& in);

  const GridModel& grid() const;
  const Semigroup& semigroup() const;
  const CDParams& params() const { return params_; }

  struct Level;

 private:
  Level& coarse();

  ModelDescriptor model_;
  CDParams params_;
  VerifyOptions opt_;
  std::unique_ptr<Level> fine_, coarse_;
};

// Single-grid check without the half-resolution rerun.
InequalityReport verify_inequality(const GridModel& g, const std::string& id,
                                   const RegistryInputs& in, const CDParams& params,
                                   const SemigroupOptions& opt = {});

double lsi_dimension_constant(const CDParams& p);
// Phi(x) = (1 + x) ln(1 + x) - x ln x
double phi_entropy(double x);

}  // namespace cdgamma
