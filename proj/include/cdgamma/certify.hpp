#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdgamma/model.hpp"

namespace cdgamma {

// Jet coordinates: n first partials, then the n(n+1)/2 second partials f_mn
// with m <= n in row-major order.
struct JetLayout {
  std::size_t n = 0;
  std::size_t size() const { return n + n * (n + 1) / 2; }
  std::size_t second(std::size_t a, std::size_t b) const;
};

struct JetPoint {
  std::vector<double> x;
  Eigen::VectorXd v;
};

struct QuadraticFormBundle {
  std::vector<double> base;
  Eigen::MatrixXd gamma, gamma_z, gamma2, gamma2_z;
  Eigen::VectorXd ell;  // Lf = ell . v
};

struct ExactFormBundle {
  std::size_t size = 0;
  std::vector<Rational> gamma, gamma_z, gamma2, gamma2_z;  // row-major size x size
  std::vector<Rational> ell;

  Rational quad(const std::vector<Rational>& m, const std::vector<Rational>& v) const;
};

// Symbolic tensors of an operator, evaluated on demand at base points.
class JetFormPlan {
 public:
  explicit JetFormPlan(const DiffusionOperator& op);

  const JetLayout& layout() const { return layout_; }
  QuadraticFormBundle at(std::span<const double> x) const;
  ExactFormBundle at_exact(std::span<const Rational> x) const;

 private:
  template <class S>
  void assemble(std::span<const S> x, std::vector<S>& g, std::vector<S>& gz,
                std::vector<S>& g2, std::vector<S>& g2z, std::vector<S>& ell) const;

  JetLayout layout_;
  std::size_t n_ = 0;
  // A^{kl}, b^k, B^{kl} and their first/second partials, flattened.
  std::vector<PolyExpr> A_, dA_, ddA_, b_, db_, B_, dB_, ddB_;
};

QuadraticFormBundle jet_forms(const ModelDescriptor& model, std::span<const double> point);
Eigen::VectorXd jet_of(const PolyExpr& f, std::span<const double> x);
std::vector<Rational> jet_of_exact(const PolyExpr& f, std::span<const Rational> x);

struct MarginParts {
  double a = 0, b = 0, c = 0;
};
MarginParts margin_parts(const QuadraticFormBundle& q, const Eigen::VectorXd& v, const CDParams& p);
// min over nu > 0 of a + nu b + (kappa/nu) c, i.e. a + 2 sqrt(kappa b c); -inf if b < 0.
double cd_margin_at_jet(const QuadraticFormBundle& q, const Eigen::VectorXd& v, const CDParams& p);
double cd_margin_at_nu(const QuadraticFormBundle& q, const Eigen::VectorXd& v, const CDParams& p,
                       double nu);
Eigen::MatrixXd cd_matrix(const QuadraticFormBundle& q, const CDParams& p, double nu);

std::vector<double> log_grid(double lo, double hi, int count);

struct CertifyConfig {
  double nu_lo = 1e-3, nu_hi = 1e3;
  int nu_count = 61;
  std::vector<double> nu_grid;  // overrides the log grid when nonempty
  int base_points = 200;
  double box = 2.0;
  long budget = 1'000'000;  // random jets across all base points
  double tol = 1e-9;
  std::uint64_t seed = 1;
  int jobs = 1;

  std::vector<double> grid() const;
};

enum class CdStatus { kCertified, kFalsified, kInconclusive };
std::string to_string(CdStatus s);

struct CdWitness {
  std::vector<double> x;
  std::vector<double> jet;
  double nu = 0;  // minimizing nu, 0 when the margin is attained as nu -> 0 or infinity
  double margin = 0;
  std::string kind;
};

struct CdVerdict {
  CdStatus status = CdStatus::kInconclusive;
  std::optional<CdWitness> witness;
  double min_margin = 0;       // over sampled and eigen jets, normalized to |v| = 1
  double min_eigenvalue = 0;   // over the nu grid and base points
  double nu_at_min_eigenvalue = 0;
  std::vector<double> x_at_min_eigenvalue;
  long jets_sampled = 0;
  long negative_jets = 0;
  int base_points = 0;
  std::vector<double> nu_grid;
  double tol = 0;
  long budget = 0;
  std::uint64_t seed = 0;
  std::string note;
};

CdVerdict certify(const ModelDescriptor& model, const CDParams& params, const CertifyConfig& cfg);
double recompute_margin(const ModelDescriptor& model, const CDParams& params, const CdWitness& w);

// Light predicate for search: PSD sweep and eigen-jets on 16 base points.
inline CertifyConfig search_predicate_config() {
  CertifyConfig c;
  c.base_points = 16;
  c.budget = 0;
  return c;
}

struct SearchSpec {
  // Unset entries are free.
  std::optional<double> rho1, rho2, kappa, d;
  std::string objective = "max_rho2";  // max_rho2 | pareto (two free: rho2, kappa)
  std::vector<double> kappa_grid = {0.0, 0.25, 0.5, 1.0, 2.0, 4.0};
  double rho1_lo = -4, rho1_hi = 4;
  double rho2_lo = 1e-6, rho2_hi = 8;
  double kappa_lo = 0, kappa_hi = 8;
  double d_lo = 0.5, d_hi = 1e6;
  double resolution = 1e-6;  // relative bracket width
  CertifyConfig certify = search_predicate_config();
};

struct SearchPoint {
  CDParams certified;
  std::optional<CDParams> falsified;  // first falsified point bracketing it
};

struct SearchResult {
  SearchPoint best;
  std::vector<SearchPoint> pareto;
  std::vector<std::string> free;
  std::string objective;
  int evaluations = 0;
};

class NoCertifiedPoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

SearchResult search_params(const ModelDescriptor& model, const SearchSpec& spec);

}  // namespace cdgamma
