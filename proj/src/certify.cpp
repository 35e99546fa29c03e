#include "cdgamma/certify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <boost/math/tools/minima.hpp>

#include "cdgamma/parallel.hpp"
#include "cdgamma/random.hpp"

namespace cdgamma {

std::size_t JetLayout::second(std::size_t a, std::size_t b) const {
  if (a > b) std::swap(a, b);
  // rows 0..a-1 hold n, n-1, ... entries
  return n + a * n - a * (a - 1) / 2 + (b - a);
}

Rational ExactFormBundle::quad(const std::vector<Rational>& m,
                               const std::vector<Rational>& v) const {
  Rational s = 0;
  for (std::size_t i = 0; i < size; ++i) {
    if (v[i] == 0) continue;
    for (std::size_t j = 0; j < size; ++j) s += v[i] * m[i * size + j] * v[j];
  }
  return s;
}

JetFormPlan::JetFormPlan(const DiffusionOperator& op) : n_(op.dim()) {
  const std::size_t n = n_;
  layout_.n = n;
  if (n == 0 || op.horizontal().empty()) throw std::invalid_argument("jet forms: empty frame");
  auto tensor = [&](const std::vector<VectorField>& frame) {
    std::vector<PolyExpr> t(n * n, PolyExpr(n));
    for (const auto& X : frame) {
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) t[k * n + l] += X.coef[k] * X.coef[l];
      }
    }
    return t;
  };
  auto partials = [&](const std::vector<PolyExpr>& t) {
    std::vector<PolyExpr> d;
    d.reserve(t.size() * n);
    for (const auto& p : t) {
      for (std::size_t m = 0; m < n; ++m) d.push_back(p.diff(m));
    }
    return d;
  };
  A_ = tensor(op.horizontal());
  B_ = tensor(op.vertical());
  b_.assign(n, PolyExpr(n));
  for (const auto& X : op.horizontal()) {
    for (std::size_t k = 0; k < n; ++k) b_[k] += X.apply(X.coef[k]);
  }
  for (std::size_t k = 0; k < n; ++k) b_[k] += op.drift().coef[k];
  dA_ = partials(A_);
  ddA_ = partials(dA_);
  dB_ = partials(B_);
  ddB_ = partials(dB_);
  db_ = partials(b_);
}

template <class S>
void JetFormPlan::assemble(std::span<const S> x, std::vector<S>& g, std::vector<S>& gz,
                           std::vector<S>& g2, std::vector<S>& g2z, std::vector<S>& ell) const {
  const std::size_t n = n_, N = layout_.size();
  if (x.size() != n) throw ArityMismatch("jet forms: point dimension");
  auto ev = [&](const std::vector<PolyExpr>& t) {
    std::vector<S> r(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) r[i] = t[i].is_zero() ? S(0) : t[i].eval(x);
    return r;
  };
  const auto A = ev(A_), dA = ev(dA_), b = ev(b_), db = ev(db_);
  const auto B = ev(B_), dB = ev(dB_), ddB = ev(ddB_), ddA = ev(ddA_);
  const S half = S(1) / S(2);

  g.assign(N * N, S(0));
  gz.assign(N * N, S(0));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < n; ++l) {
      g[k * N + l] = A[k * n + l];
      gz[k * N + l] = B[k * n + l];
    }
  }
  ell.assign(N, S(0));
  for (std::size_t k = 0; k < n; ++k) ell[k] = b[k];
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t q = m; q < n; ++q) ell[layout_.second(m, q)] = (m == q ? S(1) : S(2)) * A[m * n + q];
  }

  // Gamma_2 built on the tensor G (A gives Gamma_2, B gives Gamma_2^Z).
  auto build = [&](const std::vector<S>& G, const std::vector<S>& dG, const std::vector<S>& ddG,
                   std::vector<S>& M) {
    M.assign(N * N, S(0));
    auto add = [&](std::size_t a, std::size_t c, const S& v) {
      if (v == 0) return;
      if (a == c) {
        M[a * N + a] += v;
      } else {
        const S h = v * half;
        M[a * N + c] += h;
        M[c * N + a] += h;
      }
    };
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t l = 0; l < n; ++l) {
        const std::size_t kl = k * n + l;
        const S& Gkl = G[kl];
        for (std::size_t m = 0; m < n; ++m) {
          add(k, l, half * b[m] * dG[kl * n + m]);
          add(k, m, -Gkl * db[m * n + l]);
          for (std::size_t q = 0; q < n; ++q) {
            const S& Amq = A[m * n + q];
            add(k, l, half * Amq * ddG[(kl * n + m) * n + q]);
            add(layout_.second(k, q), l, S(2) * Amq * dG[kl * n + m]);
            add(layout_.second(k, m), layout_.second(l, q), Amq * Gkl);
            add(k, layout_.second(m, q), -Gkl * dA[(m * n + q) * n + l]);
          }
        }
      }
    }
  };
  build(A, dA, ddA, g2);
  build(B, dB, ddB, g2z);
}

QuadraticFormBundle JetFormPlan::at(std::span<const double> x) const {
  std::vector<double> g, gz, g2, g2z, ell;
  assemble<double>(x, g, gz, g2, g2z, ell);
  const auto N = static_cast<Eigen::Index>(layout_.size());
  auto mat = [&](const std::vector<double>& v) {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
               v.data(), N, N)
        .eval();
  };
  QuadraticFormBundle q;
  q.base.assign(x.begin(), x.end());
  q.gamma = mat(g);
  q.gamma_z = mat(gz);
  q.gamma2 = mat(g2);
  q.gamma2_z = mat(g2z);
  q.ell = Eigen::Map<const Eigen::VectorXd>(ell.data(), N);
  return q;
}

ExactFormBundle JetFormPlan::at_exact(std::span<const Rational> x) const {
  ExactFormBundle q;
  q.size = layout_.size();
  assemble<Rational>(x, q.gamma, q.gamma_z, q.gamma2, q.gamma2_z, q.ell);
  return q;
}

QuadraticFormBundle jet_forms(const ModelDescriptor& model, std::span<const double> point) {
  return JetFormPlan(model.op).at(point);
}

Eigen::VectorXd jet_of(const PolyExpr& f, std::span<const double> x) {
  JetLayout lay{f.arity()};
  Eigen::VectorXd v(lay.size());
  for (std::size_t k = 0; k < lay.n; ++k) {
    const PolyExpr fk = f.diff(k);
    v[k] = fk.eval(x);
    for (std::size_t l = k; l < lay.n; ++l) v[lay.second(k, l)] = fk.diff(l).eval(x);
  }
  return v;
}

std::vector<Rational> jet_of_exact(const PolyExpr& f, std::span<const Rational> x) {
  JetLayout lay{f.arity()};
  std::vector<Rational> v(lay.size());
  for (std::size_t k = 0; k < lay.n; ++k) {
    const PolyExpr fk = f.diff(k);
    v[k] = fk.eval(x);
    for (std::size_t l = k; l < lay.n; ++l) v[lay.second(k, l)] = fk.diff(l).eval(x);
  }
  return v;
}

MarginParts margin_parts(const QuadraticFormBundle& q, const Eigen::VectorXd& v,
                         const CDParams& p) {
  MarginParts r;
  const double gv = v.dot(q.gamma * v);
  r.a = v.dot(q.gamma2 * v) - p.rho1 * gv - p.rho2 * v.dot(q.gamma_z * v);
  if (p.finite_dimension()) {
    const double lf = q.ell.dot(v);
    r.a -= lf * lf / p.d;
  }
  r.b = v.dot(q.gamma2_z * v);
  r.c = gv;
  return r;
}

namespace {

// Negative b beyond roundoff makes the margin unbounded below as nu grows.
bool b_negative(const QuadraticFormBundle& q, const Eigen::VectorXd& v, double b) {
  const double scale = 1.0 + v.squaredNorm() * q.gamma2_z.cwiseAbs().maxCoeff();
  return b < -1e-12 * scale;
}

double argmin_nu(const MarginParts& m, const CDParams& p) {
  if (p.kappa > 0 && m.b > 0 && m.c > 0) return std::sqrt(p.kappa * m.c / m.b);
  return 0.0;
}

}  // namespace

double cd_margin_at_jet(const QuadraticFormBundle& q, const Eigen::VectorXd& v,
                        const CDParams& p) {
  const MarginParts m = margin_parts(q, v, p);
  if (b_negative(q, v, m.b)) return -kInf;
  return m.a + 2.0 * std::sqrt(p.kappa * std::max(m.b, 0.0) * std::max(m.c, 0.0));
}

double cd_margin_at_nu(const QuadraticFormBundle& q, const Eigen::VectorXd& v, const CDParams& p,
                       double nu) {
  if (!(nu > 0)) throw std::invalid_argument("cd_margin_at_nu: nu must be positive");
  const MarginParts m = margin_parts(q, v, p);
  return m.a + nu * m.b + p.kappa / nu * m.c;
}

Eigen::MatrixXd cd_matrix(const QuadraticFormBundle& q, const CDParams& p, double nu) {
  Eigen::MatrixXd M = q.gamma2 - p.rho1 * q.gamma - p.rho2 * q.gamma_z + nu * q.gamma2_z +
                      (p.kappa / nu) * q.gamma;
  if (p.finite_dimension()) M -= (q.ell * q.ell.transpose()) / p.d;
  return M;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0) || !(hi >= lo) || count < 1) throw std::invalid_argument("log_grid: bad range");
  std::vector<double> g(count);
  if (count == 1) {
    g[0] = lo;
    return g;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < count; ++i) g[i] = std::exp(a + (b - a) * i / (count - 1));
  return g;
}

std::vector<double> CertifyConfig::grid() const {
  return nu_grid.empty() ? log_grid(nu_lo, nu_hi, nu_count) : nu_grid;
}

std::string to_string(CdStatus s) {
  switch (s) {
    case CdStatus::kCertified:
      return "certified";
    case CdStatus::kFalsified:
      return "falsified";
    case CdStatus::kInconclusive:
      return "inconclusive";
  }
  return "?";
}

namespace {

struct PointResult {
  std::vector<double> x;
  double min_eig = kInf, nu_min_eig = 0;
  double min_margin = kInf;
  Eigen::VectorXd witness;
  double witness_nu = 0;
  std::string kind;
  long jets = 0, negative = 0;
};

Eigen::VectorXd random_jet(Rng& rng, const JetLayout& lay, const QuadraticFormBundle& q,
                           int kind) {
  const std::size_t n = lay.n, N = lay.size();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(N);
  auto gauss = [&](Eigen::Index from, Eigen::Index to) {
    for (Eigen::Index i = from; i < to; ++i) v[i] = rng.normal();
  };
  const Eigen::MatrixXd Bz = q.gamma_z.topLeftCorner(n, n);
  switch (kind) {
    case 0:  // rank-one Hessian
    {
      gauss(0, n);
      Eigen::VectorXd w(n);
      for (std::size_t i = 0; i < n; ++i) w[i] = rng.normal();
      const double s = rng.uniform() < 0.5 ? -1.0 : 1.0;
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a; b < n; ++b) v[lay.second(a, b)] = s * w[a] * w[b];
      }
      break;
    }
    case 1:  // gradient in the vertical span
    case 2:  // gradient annihilated by the vertical frame
    {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Bz);
      const double cut = 1e-12 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff());
      Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
      for (std::size_t i = 0; i < n; ++i) {
        const bool vertical = es.eigenvalues()[i] > cut;
        if (vertical == (kind == 1)) g += rng.normal() * es.eigenvectors().col(i);
      }
      v.head(n) = g;
      gauss(n, N);
      break;
    }
    case 3:  // second order only
      gauss(n, N);
      break;
    default:
      gauss(0, N);
  }
  const double nv = v.norm();
  if (nv > 0) v /= nv;
  return v;
}

const char* jet_kind_name(int kind) {
  switch (kind) {
    case 0:
      return "rank-one";
    case 1:
      return "vertical";
    case 2:
      return "horizontal";
    case 3:
      return "hessian";
    default:
      return "gaussian";
  }
}

void check_forms(const QuadraticFormBundle& q) {
  auto min_eig = [](const Eigen::MatrixXd& M) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M, Eigen::EigenvaluesOnly)
        .eigenvalues()
        .minCoeff();
  };
  for (const auto* M : {&q.gamma, &q.gamma_z}) {
    const double tol = 1e-10 * (1.0 + M->cwiseAbs().maxCoeff());
    if (min_eig(*M) < -tol) throw std::runtime_error("jet forms: carre du champ is not PSD");
  }
}

}  // namespace

CdVerdict certify(const ModelDescriptor& model, const CDParams& params, const CertifyConfig& cfg) {
  if (cfg.base_points < 1) throw std::invalid_argument("certify: need at least one base point");
  if (cfg.budget < 0) throw std::invalid_argument("certify: negative jet budget");
  const JetFormPlan plan(model.op);
  const JetLayout& lay = plan.layout();
  const std::size_t n = lay.n;
  const std::vector<double> grid = cfg.grid();
  for (double nu : grid) {
    if (!(nu > 0)) throw std::invalid_argument("certify: nu grid must be positive");
  }
  const Rng master(cfg.seed);
  const auto P = static_cast<std::size_t>(cfg.base_points);
  std::vector<PointResult> results(P);

  parallel_for(P, cfg.jobs, [&](std::size_t i) {
    PointResult& r = results[i];
    r.x.assign(n, 0.0);
    if (i > 0) {
      Rng prng = master.split(2 * i);
      for (auto& c : r.x) c = prng.uniform(-cfg.box, cfg.box);
    }
    const QuadraticFormBundle q = plan.at(r.x);
    check_forms(q);
    auto consider = [&](const Eigen::VectorXd& v, const char* kind) {
      const double m = cd_margin_at_jet(q, v, params);
      if (m < r.min_margin) {
        r.min_margin = m;
        r.witness = v;
        r.kind = kind;
        r.witness_nu = argmin_nu(margin_parts(q, v, params), params);
      }
      return m;
    };
    auto sweep = [&](double nu) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cd_matrix(q, params, nu));
      const double lam = es.eigenvalues()[0];
      if (lam < r.min_eig) {
        r.min_eig = lam;
        r.nu_min_eig = nu;
      }
      consider(es.eigenvectors().col(0), "eigen");
      return lam;
    };
    std::size_t arg = 0;
    double low = kInf;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double lam = sweep(grid[k]);
      if (lam < low) low = lam, arg = k;
    }
    // refine between the neighbours of the worst grid value
    if (grid.size() > 2) {
      const double a = std::log(grid[arg == 0 ? 0 : arg - 1]);
      const double b = std::log(grid[std::min(arg + 1, grid.size() - 1)]);
      boost::math::tools::brent_find_minima([&](double s) { return sweep(std::exp(s)); },
                                            std::min(a, b), std::max(a, b), 30);
    }
    const long per = cfg.budget / static_cast<long>(P) +
                     (static_cast<long>(i) < cfg.budget % static_cast<long>(P) ? 1 : 0);
    Rng jrng = master.split(2 * i + 1);
    for (long j = 0; j < per; ++j) {
      // half Gaussian, the rest split among the structured families
      const int kind = (j % 2 == 0) ? 4 : static_cast<int>((j / 2) % 4);
      const Eigen::VectorXd v = random_jet(jrng, lay, q, kind);
      if (consider(v, jet_kind_name(kind)) < -cfg.tol) ++r.negative;
    }
    r.jets = per;
  });

  CdVerdict out;
  out.nu_grid = grid;
  out.tol = cfg.tol;
  out.budget = cfg.budget;
  out.seed = cfg.seed;
  out.base_points = cfg.base_points;
  out.min_margin = kInf;
  out.min_eigenvalue = kInf;
  const PointResult* worst = nullptr;
  for (const auto& r : results) {
    out.jets_sampled += r.jets;
    out.negative_jets += r.negative;
    if (r.min_eig < out.min_eigenvalue) {
      out.min_eigenvalue = r.min_eig;
      out.nu_at_min_eigenvalue = r.nu_min_eig;
      out.x_at_min_eigenvalue = r.x;
    }
    if (!worst || r.min_margin < worst->min_margin) worst = &r;
  }
  out.min_margin = worst->min_margin;
  if (out.min_margin < -cfg.tol) {
    out.status = CdStatus::kFalsified;
    CdWitness w;
    w.x = worst->x;
    w.jet.assign(worst->witness.data(), worst->witness.data() + worst->witness.size());
    w.nu = worst->witness_nu;
    w.margin = worst->min_margin;
    w.kind = worst->kind;
    out.witness = w;
  } else if (out.min_eigenvalue >= -cfg.tol) {
    out.status = CdStatus::kCertified;
  } else {
    out.status = CdStatus::kInconclusive;
  }
  std::ostringstream note;
  note << "sampled, not exhausted: " << cfg.base_points << " base points in [-" << cfg.box << ", "
       << cfg.box << "]^" << n << ", " << out.jets_sampled << " random unit jets, " << grid.size()
       << " nu values in the PSD sweep";
  out.note = note.str();
  return out;
}

double recompute_margin(const ModelDescriptor& model, const CDParams& params, const CdWitness& w) {
  const QuadraticFormBundle q = jet_forms(model, w.x);
  const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(w.jet.data(), w.jet.size());
  if (v.size() != q.ell.size()) throw std::invalid_argument("recompute_margin: jet size");
  return cd_margin_at_jet(q, v, params);
}

namespace {

enum class Param { kRho1, kRho2, kKappa, kD };

const char* param_name(Param p) {
  switch (p) {
    case Param::kRho1:
      return "rho1";
    case Param::kRho2:
      return "rho2";
    case Param::kKappa:
      return "kappa";
    case Param::kD:
      return "d";
  }
  return "?";
}

double& slot(CDParams& c, Param p) {
  switch (p) {
    case Param::kRho1:
      return c.rho1;
    case Param::kRho2:
      return c.rho2;
    case Param::kKappa:
      return c.kappa;
    case Param::kD:
      return c.d;
  }
  return c.rho1;
}

class Searcher {
 public:
  Searcher(const ModelDescriptor& model, const SearchSpec& spec)
      : model_(model), spec_(spec) {}

  bool certified(const CDParams& p) {
    ++evaluations;
    return certify(model_, p, spec_.certify).status == CdStatus::kCertified;
  }

  // Bisection between an end where certification is easiest and one where it
  // is hardest. Certification is monotone in each parameter.
  SearchPoint bisect(CDParams base, Param which) {
    double good = 0, bad = 0;
    bool geometric = false;
    switch (which) {
      case Param::kRho1:
        good = spec_.rho1_lo, bad = spec_.rho1_hi;
        break;
      case Param::kRho2:
        good = spec_.rho2_lo, bad = spec_.rho2_hi;
        break;
      case Param::kKappa:
        good = spec_.kappa_hi, bad = spec_.kappa_lo;
        break;
      case Param::kD:
        good = spec_.d_hi, bad = spec_.d_lo;
        geometric = true;
        break;
    }
    auto at = [&](double v) {
      CDParams c = base;
      slot(c, which) = v;
      return CDParams(c.rho1, c.rho2, c.kappa, c.d);
    };
    if (!certified(at(good))) {
      throw NoCertifiedPoint(std::string("search: no certified ") + param_name(which) +
                             " in the search box");
    }
    if (certified(at(bad))) return {at(bad), std::nullopt};
    while (std::abs(good - bad) > spec_.resolution * std::max(1.0, std::abs(good))) {
      const double mid = geometric ? std::sqrt(good * bad) : 0.5 * (good + bad);
      if (certified(at(mid))) {
        good = mid;
      } else {
        bad = mid;
      }
    }
    return {at(good), at(bad)};
  }

  int evaluations = 0;

 private:
  const ModelDescriptor& model_;
  const SearchSpec& spec_;
};

}  // namespace

SearchResult search_params(const ModelDescriptor& model, const SearchSpec& spec) {
  if (spec.objective != "max_rho2" && spec.objective != "pareto") {
    throw std::invalid_argument("search: unknown objective '" + spec.objective + "'");
  }
  SearchResult res;
  res.objective = spec.objective;
  CDParams base;
  std::vector<Param> free;
  auto take = [&](const std::optional<double>& v, Param p, double placeholder) {
    if (v) {
      slot(base, p) = *v;
    } else {
      slot(base, p) = placeholder;
      free.push_back(p);
      res.free.push_back(param_name(p));
    }
  };
  take(spec.rho1, Param::kRho1, 0.0);
  take(spec.rho2, Param::kRho2, 1.0);
  take(spec.kappa, Param::kKappa, 0.0);
  take(spec.d, Param::kD, kInf);
  Searcher s(model, spec);

  if (free.size() == 1) {
    res.best = s.bisect(base, free[0]);
    res.pareto = {res.best};
  } else if (free.size() == 2 && free[0] == Param::kRho2 && free[1] == Param::kKappa) {
    std::vector<SearchPoint> found;
    for (double k : spec.kappa_grid) {
      if (k < spec.kappa_lo || k > spec.kappa_hi) continue;
      CDParams b = base;
      b.kappa = k;
      try {
        found.push_back(s.bisect(b, Param::kRho2));
      } catch (const NoCertifiedPoint&) {
      }
    }
    if (found.empty()) throw NoCertifiedPoint("search: no certified (rho2, kappa) on the grid");
    const double tol = spec.resolution * 8;
    // keep points not dominated by a smaller kappa with an equal or larger rho2
    for (std::size_t i = 0; i < found.size(); ++i) {
      bool dominated = false;
      for (std::size_t j = 0; j < found.size(); ++j) {
        if (j != i && found[j].certified.kappa < found[i].certified.kappa &&
            found[j].certified.rho2 >= found[i].certified.rho2 - tol) {
          dominated = true;
        }
      }
      if (!dominated) res.pareto.push_back(found[i]);
    }
    res.best = res.pareto.front();
    for (const auto& p : res.pareto) {
      if (p.certified.rho2 > res.best.certified.rho2 + tol) res.best = p;
    }
  } else if (free.empty()) {
    throw std::invalid_argument("search: no free parameter");
  } else {
    std::string names;
    for (const auto& f : res.free) names += (names.empty() ? "" : ", ") + f;
    throw std::invalid_argument("search: unsupported free set {" + names +
                                "}; supported are one parameter or {rho2, kappa}");
  }
  res.evaluations = s.evaluations;
  return res;
}

}  // namespace cdgamma
