#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "json.hpp"

#include "cdgamma/expr.hpp"
#include "cdgamma/model.hpp"

namespace cdgamma {

using SparseRM = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class Boundary { kZeroFlux, kPeriodic, kTruncatedGaussian };
std::string to_string(Boundary b);
Boundary boundary_from_string(const std::string& s);

struct AxisRange {
  double lo = 0, hi = 0;
};

struct GridSpec {
  std::vector<AxisRange> axes;
  double h = 0.05;
  Boundary boundary = Boundary::kZeroFlux;

  GridSpec with_h(double new_h) const;
};

nlohmann::json grid_spec_to_json(const GridSpec& g);
GridSpec grid_spec_from_json(const nlohmann::json& j);

class GridInvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridModel {
  std::string model_name;
  OperatorForm form = OperatorForm::kSumOfSquares;
  GridSpec spec;
  std::vector<std::string> coords;
  std::vector<std::vector<double>> axes;  // node coordinates per axis
  std::vector<double> spacing;            // per axis
  std::vector<std::size_t> stride;        // last axis fastest
  Eigen::VectorXd mu;
  bool probability = false;
  SparseRM G;                // generator, rows sum to zero
  std::vector<SparseRM> D;   // horizontal difference operators
  std::vector<SparseRM> DZ;  // vertical difference operators

  std::size_t size() const { return static_cast<std::size_t>(mu.size()); }
  std::size_t dim() const { return axes.size(); }
  double h() const { return spec.h; }
  std::vector<std::size_t> multi_index(std::size_t node) const;
  std::size_t node(std::span<const std::size_t> idx) const;
  std::vector<double> point(std::size_t node) const;
  std::size_t nearest(std::span<const double> x) const;
  // Nodes whose coordinates lie in the central fraction of every axis.
  std::vector<std::size_t> interior_nodes(double fraction = 2.0 / 3.0) const;
  Eigen::VectorXd sample(const Expr& f) const;
};

// Form (b) uses midpoint-weighted second differences along the coordinate
// axes; form (a) uses exact lattice flows of the step-2 frame.
GridModel discretize(const ModelDescriptor& model, const GridSpec& spec);
void check_grid_invariants(const GridModel& g);

// Graph carre du champ 1/2 sum_m G_nm (f_m - f_n)^2 and its bilinear form.
Eigen::VectorXd grid_gamma(const GridModel& g, const Eigen::VectorXd& f);
Eigen::VectorXd grid_gamma(const GridModel& g, const Eigen::VectorXd& f, const Eigen::VectorXd& h);
// Sum over the vertical frame of (D^Z_j f)^2.
Eigen::VectorXd grid_gamma_z(const GridModel& g, const Eigen::VectorXd& f);
double integrate(const GridModel& g, const Eigen::VectorXd& f);

}  // namespace cdgamma
