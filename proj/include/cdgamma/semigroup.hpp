#pragma once

#include <string>

#include <Eigen/Dense>

#include "cdgamma/grid.hpp"

namespace cdgamma {

enum class Engine { kAuto, kDense, kKrylov, kCrankNicolson };
std::string to_string(Engine e);

struct SemigroupOptions {
  Engine engine = Engine::kAuto;
  std::size_t dense_max = 600;    // full eigendecomposition up to this size
  std::size_t krylov_max = 4096;  // Lanczos exponential up to this size
  int jobs = 1;
};

class StepControlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// P_t = exp(tG), computed on the symmetrized generator S = D^{1/2} G D^{-1/2}
// with D = diag(mu).
class Semigroup {
 public:
  explicit Semigroup(const GridModel& g, SemigroupOptions opt = {});

  Eigen::VectorXd apply(const Eigen::VectorXd& f, double t) const;
  // Applies P_t to every column.
  Eigen::MatrixXd apply_block(const Eigen::MatrixXd& F, double t) const;
  // p(x, ., t) = (exp(tG))_{x.} / mu
  Eigen::VectorXd kernel(std::size_t x, double t) const;

  Engine engine() const { return engine_; }
  const GridModel& grid() const { return *g_; }

 private:
  Eigen::MatrixXd exp_s(const Eigen::MatrixXd& W, double t) const;
  Eigen::VectorXd lanczos(const Eigen::VectorXd& w, double t) const;
  Eigen::MatrixXd crank_nicolson(const Eigen::MatrixXd& W, double t) const;

  const GridModel* g_;
  SemigroupOptions opt_;
  Engine engine_;
  SparseRM S_;
  Eigen::VectorXd sqrt_mu_, inv_sqrt_mu_;
  Eigen::MatrixXd Q_;
  Eigen::VectorXd lambda_;
  double max_rate_ = 0;
};

Eigen::VectorXd semigroup_apply(const GridModel& g, const Eigen::VectorXd& f, double t);
Eigen::VectorXd heat_kernel(const GridModel& g, std::size_t x, double t);

struct SpectralResult {
  double gap = 0;
  double residual = 0;
  int iterations = 0;
  bool connected = true;
  std::string warning;
  Eigen::VectorXd eigenvector;  // mu-orthogonal to constants, in node values
};

bool is_connected(const SparseRM& G);
// Smallest nonzero eigenvalue of -G in L^2(mu) by shifted inverse iteration
// with the constants deflated.
SpectralResult spectral_gap(const GridModel& g, double tol = 1e-8, int max_iter = 2000);

double entropy(const Eigen::VectorXd& mu, const Eigen::VectorXd& f);
double fisher(const GridModel& g, const Eigen::VectorXd& f);
// sum_y mu_y exp(lambda d(x0, y)^2) for a row of distances from x0.
double exp_moment(const GridModel& g, const Eigen::VectorXd& dist_from_x0, double lambda);

// Conjugate gradients on the SPD operator A, run independently on every
// column of B. A(X, out) writes A X into out.
template <class ApplyA>
void block_cg(ApplyA&& A, const Eigen::MatrixXd& B, Eigen::MatrixXd& X, double rel_tol, int max_iter) {
  const Eigen::Index k = B.cols();
  Eigen::MatrixXd R(B.rows(), k), AP(B.rows(), k);
  A(X, AP);
  R = B - AP;
  Eigen::MatrixXd P = R;
  Eigen::VectorXd rs = R.colwise().squaredNorm().transpose();
  const Eigen::VectorXd target =
      (B.colwise().squaredNorm().transpose() * (rel_tol * rel_tol)).cwiseMax(1e-300);
  Eigen::VectorXd alpha(k), beta(k), rs_new(k);
  for (int it = 0; it < max_iter; ++it) {
    if ((rs.array() <= target.array()).all()) return;
    A(P, AP);
    for (Eigen::Index j = 0; j < k; ++j) {
      const double d = P.col(j).dot(AP.col(j));
      alpha[j] = (rs[j] > target[j] && d > 0) ? rs[j] / d : 0.0;
    }
    X.noalias() += P * alpha.asDiagonal();
    R.noalias() -= AP * alpha.asDiagonal();
    rs_new = R.colwise().squaredNorm().transpose();
    for (Eigen::Index j = 0; j < k; ++j) beta[j] = rs[j] > 0 ? rs_new[j] / rs[j] : 0.0;
    P = R + P * beta.asDiagonal();
    rs = rs_new;
  }
  if ((rs.array() <= target.array()).all()) return;
  throw StepControlError("conjugate gradients did not converge in " + std::to_string(max_iter) +
                         " iterations");
}

}  // namespace cdgamma
