#include "cdgamma/semigroup.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include <Eigen/Eigenvalues>

#include "cdgamma/parallel.hpp"
#include "cdgamma/random.hpp"

namespace cdgamma {

std::string to_string(Engine e) {
  switch (e) {
    case Engine::kAuto:
      return "auto";
    case Engine::kDense:
      return "dense-eigen";
    case Engine::kKrylov:
      return "krylov";
    case Engine::kCrankNicolson:
      return "crank-nicolson";
  }
  return "?";
}

namespace {

SparseRM symmetrize(const GridModel& g, const Eigen::VectorXd& sq, const Eigen::VectorXd& isq) {
  SparseRM S = sq.asDiagonal() * g.G * isq.asDiagonal();
  SparseRM St = S.transpose();
  SparseRM r = 0.5 * (S + St);
  r.makeCompressed();
  return r;
}

}  // namespace

Semigroup::Semigroup(const GridModel& g, SemigroupOptions opt) : g_(&g), opt_(opt) {
  const std::size_t N = g.size();
  sqrt_mu_ = g.mu.cwiseSqrt();
  inv_sqrt_mu_ = sqrt_mu_.cwiseInverse();
  S_ = symmetrize(g, sqrt_mu_, inv_sqrt_mu_);
  for (std::size_t i = 0; i < N; ++i) max_rate_ = std::max(max_rate_, std::abs(g.G.coeff(i, i)));
  engine_ = opt.engine;
  if (engine_ == Engine::kAuto) {
    engine_ = N <= opt.dense_max    ? Engine::kDense
              : N <= opt.krylov_max ? Engine::kKrylov
                                    : Engine::kCrankNicolson;
  }
  if (engine_ == Engine::kDense) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(S_), Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) throw StepControlError("dense eigendecomposition failed");
    Q_ = es.eigenvectors();
    lambda_ = es.eigenvalues().cwiseMin(0.0);
  }
}

Eigen::VectorXd Semigroup::apply(const Eigen::VectorXd& f, double t) const {
  Eigen::MatrixXd F = f;
  return apply_block(F, t).col(0);
}

Eigen::MatrixXd Semigroup::apply_block(const Eigen::MatrixXd& F, double t) const {
  if (!(t >= 0)) throw std::invalid_argument("semigroup: t must be nonnegative");
  if (static_cast<std::size_t>(F.rows()) != g_->size()) {
    throw std::invalid_argument("semigroup: function size does not match the grid");
  }
  if (t == 0) return F;
  const Eigen::MatrixXd W = sqrt_mu_.asDiagonal() * F;
  return inv_sqrt_mu_.asDiagonal() * exp_s(W, t);
}

Eigen::VectorXd Semigroup::kernel(std::size_t x, double t) const {
  if (x >= g_->size()) throw std::out_of_range("heat kernel: node out of range");
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(g_->size(), 1);
  e(x, 0) = 1.0;
  if (t == 0) return e.col(0).cwiseQuotient(g_->mu);
  // (exp(tG))_{xy} = mu_x^{-1/2} (exp(tS))_{xy} mu_y^{1/2}
  const Eigen::VectorXd col = exp_s(e, t).col(0);
  return col.cwiseProduct(inv_sqrt_mu_) * inv_sqrt_mu_[x];
}

Eigen::MatrixXd Semigroup::exp_s(const Eigen::MatrixXd& W, double t) const {
  switch (engine_) {
    case Engine::kDense: {
      const Eigen::VectorXd e = (t * lambda_).array().exp();
      return Q_ * (e.asDiagonal() * (Q_.transpose() * W));
    }
    case Engine::kKrylov: {
      Eigen::MatrixXd out(W.rows(), W.cols());
      parallel_for(static_cast<std::size_t>(W.cols()), opt_.jobs,
                   [&](std::size_t j) { out.col(j) = lanczos(W.col(j), t); });
      return out;
    }
    default: {
      // columns are independent, so chunking them keeps results identical
      const std::size_t k = static_cast<std::size_t>(W.cols());
      const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(k, opt_.jobs));
      Eigen::MatrixXd out(W.rows(), W.cols());
      parallel_for(chunks, opt_.jobs, [&](std::size_t c) {
        const std::size_t a = c * k / chunks, b = (c + 1) * k / chunks;
        out.middleCols(a, b - a) = crank_nicolson(W.middleCols(a, b - a), t);
      });
      return out;
    }
  }
}

Eigen::VectorXd Semigroup::lanczos(const Eigen::VectorXd& w, double t) const {
  const double beta0 = w.norm();
  if (beta0 == 0) return w;
  const Eigen::Index N = w.size();
  const int max_m = static_cast<int>(std::min<Eigen::Index>(N, 400));
  Eigen::MatrixXd V(N, max_m + 1);
  std::vector<double> alpha, beta;
  V.col(0) = w / beta0;
  Eigen::VectorXd prev;
  for (int m = 1; m <= max_m; ++m) {
    Eigen::VectorXd u = S_ * V.col(m - 1);
    const double a = V.col(m - 1).dot(u);
    alpha.push_back(a);
    // full reorthogonalization
    for (int pass = 0; pass < 2; ++pass) {
      u -= V.leftCols(m) * (V.leftCols(m).transpose() * u);
    }
    const double b = u.norm();
    const bool breakdown = b <= 1e-14 * std::abs(a) + 1e-300;
    if (m % 8 == 0 || breakdown || m == max_m) {
      Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
      for (int i = 0; i < m; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
      const Eigen::VectorXd e = (t * es.eigenvalues().cwiseMin(0.0)).array().exp();
      const Eigen::VectorXd y =
          es.eigenvectors() * (e.asDiagonal() * es.eigenvectors().row(0).transpose());
      // a posteriori estimate: next coupling times the last coefficient
      if (breakdown || b * std::abs(y[m - 1]) * t <= 1e-14 * y.norm()) {
        return beta0 * (V.leftCols(m) * y);
      }
      if (m == max_m) break;
    }
    beta.push_back(b);
    V.col(m) = u / b;
  }
  throw StepControlError("krylov exponential did not converge in " + std::to_string(max_m) +
                         " steps");
}

Eigen::MatrixXd Semigroup::crank_nicolson(const Eigen::MatrixXd& W, double t) const {
  const double h2 = g_->h() * g_->h();
  // dt <= 2 / max rate keeps I + dt/2 G entrywise nonnegative
  const double dt_max = std::min({h2, t / 64.0, 2.0 / max_rate_});
  const long steps = static_cast<long>(std::ceil(t / dt_max - 1e-12));
  const double dt = t / static_cast<double>(steps);
  const double c = 0.5 * dt;
  auto A = [&](const Eigen::MatrixXd& X, Eigen::MatrixXd& out) {
    out.noalias() = S_ * X;
    out = X - c * out;
  };
  Eigen::MatrixXd U = W, rhs(W.rows(), W.cols());
  for (long s = 0; s < steps; ++s) {
    rhs.noalias() = S_ * U;
    rhs = U + c * rhs;
    block_cg(A, rhs, U, 1e-13, 500);
  }
  return U;
}

Eigen::VectorXd semigroup_apply(const GridModel& g, const Eigen::VectorXd& f, double t) {
  return Semigroup(g).apply(f, t);
}

Eigen::VectorXd heat_kernel(const GridModel& g, std::size_t x, double t) {
  return Semigroup(g).kernel(x, t);
}

bool is_connected(const SparseRM& G) {
  const auto N = static_cast<std::size_t>(G.rows());
  if (N == 0) return true;
  std::vector<bool> seen(N, false);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = true;
  std::size_t count = 1;
  while (!q.empty()) {
    const std::size_t i = q.front();
    q.pop();
    for (SparseRM::InnerIterator it(G, i); it; ++it) {
      const auto j = static_cast<std::size_t>(it.col());
      if (it.value() > 0 && !seen[j]) {
        seen[j] = true;
        ++count;
        q.push(j);
      }
    }
  }
  return count == N;
}

SpectralResult spectral_gap(const GridModel& g, double tol, int max_iter) {
  if (!g.probability) throw std::invalid_argument("spectral gap: needs a probability measure");
  SpectralResult res;
  if (!is_connected(g.G)) {
    res.connected = false;
    res.gap = 0;
    res.warning = "generator is disconnected; the constants are not the only harmonic functions";
    return res;
  }
  const Eigen::VectorXd sq = g.mu.cwiseSqrt();
  const SparseRM S = symmetrize(g, sq, sq.cwiseInverse());
  const Eigen::VectorXd q = sq / sq.norm();
  double max_rate = 0;
  for (std::size_t i = 0; i < g.size(); ++i) max_rate = std::max(max_rate, std::abs(S.coeff(i, i)));
  // -S + sigma q q^T is SPD, with q an eigenvector of eigenvalue sigma >= gap
  const double sigma = 2 * max_rate + 1;
  auto A = [&](const Eigen::MatrixXd& X, Eigen::MatrixXd& out) {
    out.noalias() = -(S * X);
    out.noalias() += sigma * q * (q.transpose() * X);
  };
  Rng rng(20240607);
  Eigen::VectorXd v(g.size());
  for (auto& c : v) c = rng.normal();
  v -= q * q.dot(v);
  v.normalize();
  double lam = 0;
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::MatrixXd x = v;
    block_cg(A, v, x, 1e-13, 100000);
    v = x.col(0);
    v -= q * q.dot(v);
    v.normalize();
    const Eigen::VectorXd Sv = -(S * v);
    lam = v.dot(Sv);
    res.residual = (Sv - lam * v).norm() / std::max(lam, 1e-300);
    res.iterations = it;
    if (res.residual <= tol) {
      res.gap = lam;
      res.eigenvector = v.cwiseQuotient(sq);
      return res;
    }
  }
  throw StepControlError("spectral gap: inverse iteration did not converge");
}

double entropy(const Eigen::VectorXd& mu, const Eigen::VectorXd& f) {
  if (mu.size() != f.size()) throw std::invalid_argument("entropy: size mismatch");
  if ((f.array() <= 0).any()) throw std::domain_error("entropy: f must be positive");
  const double m = mu.dot(f);
  return mu.dot((f.array() * f.array().log()).matrix()) - m * std::log(m);
}

double fisher(const GridModel& g, const Eigen::VectorXd& f) {
  if ((f.array() <= 0).any()) throw std::domain_error("fisher: f must be positive");
  return g.mu.dot(grid_gamma(g, f).cwiseQuotient(f));
}

double exp_moment(const GridModel& g, const Eigen::VectorXd& d, double lambda) {
  if (static_cast<std::size_t>(d.size()) != g.size()) {
    throw std::invalid_argument("exp_moment: distance row size");
  }
  return g.mu.dot((lambda * d.array().square()).exp().matrix());
}

}  // namespace cdgamma
