#include "cdgamma/transport.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/successive_shortest_path_nonnegative_weights.hpp>
#include <boost/math/tools/minima.hpp>

#include "cdgamma/expr.hpp"
#include "cdgamma/random.hpp"

namespace cdgamma {

double CouplingPlan::marginal_error() const {
  if (pi.size() == 0) return 0;
  return std::max((pi.rowwise().sum() - mu).cwiseAbs().maxCoeff(),
                  (pi.colwise().sum().transpose() - nu).cwiseAbs().maxCoeff());
}

std::string to_string(TransportMethod m) {
  switch (m) {
    case TransportMethod::kAuto:
      return "auto";
    case TransportMethod::kExact:
      return "exact-min-cost-flow";
    case TransportMethod::kSinkhorn:
      return "entropic-sinkhorn";
  }
  return "?";
}

namespace {

using Traits = boost::adjacency_list_traits<boost::vecS, boost::vecS, boost::directedS>;
using FlowGraph = boost::adjacency_list<
    boost::vecS, boost::vecS, boost::directedS, boost::no_property,
    boost::property<boost::edge_capacity_t, double,
                    boost::property<boost::edge_residual_capacity_t, double,
                                    boost::property<boost::edge_reverse_t, Traits::edge_descriptor,
                                                    boost::property<boost::edge_weight_t, double>>>>>;
using Edge = Traits::edge_descriptor;

Edge add_arc(FlowGraph& g, std::size_t a, std::size_t b, double cap, double w) {
  const Edge e = boost::add_edge(a, b, g).first;
  const Edge r = boost::add_edge(b, a, g).first;
  boost::put(boost::edge_capacity, g, e, cap);
  boost::put(boost::edge_capacity, g, r, 0.0);
  boost::put(boost::edge_weight, g, e, w);
  boost::put(boost::edge_weight, g, r, -w);
  boost::put(boost::edge_reverse, g, e, r);
  boost::put(boost::edge_reverse, g, r, e);
  return e;
}

std::vector<std::size_t> support(const Eigen::VectorXd& m) {
  std::vector<std::size_t> s;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (m[i] > 0) s.push_back(static_cast<std::size_t>(i));
  }
  return s;
}

// Squared distances on the supports, in units of unit.
Eigen::MatrixXd cost_matrix(const DistanceMatrix& d, const std::vector<std::size_t>& rows,
                            const std::vector<std::size_t>& cols, double h, double& unit) {
  Eigen::MatrixXd D(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = d.row_of(rows[i]);
    for (std::size_t j = 0; j < cols.size(); ++j) {
      D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          d.d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cols[j]));
    }
  }
  if (!D.allFinite()) throw std::invalid_argument("transport: infinite distance between supports");
  // graph distances are whole multiples of h, which makes d^2 / h^2 an exact integer
  bool lattice = h > 0;
  for (Eigen::Index k = 0; k < D.size() && lattice; ++k) {
    const double q = D.data()[k] / h;
    lattice = std::abs(q - std::round(q)) <= 1e-9 * std::max(1.0, q);
  }
  Eigen::MatrixXd C(D.rows(), D.cols());
  if (lattice) {
    unit = h * h;
    C = (D / h).array().round().square();
  } else {
    const double m = D.cwiseAbs2().maxCoeff();
    unit = m > 0 ? std::ldexp(m, -40) : 1.0;
    C = (D.cwiseAbs2() / unit).array().round();
  }
  return C;
}

TransportResult solve_exact(const Eigen::MatrixXd& C, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const std::size_t n = static_cast<std::size_t>(a.size()), m = static_cast<std::size_t>(b.size());
  FlowGraph g(n + m + 2);
  const std::size_t s = 0, t = n + m + 1;
  const double big = a.sum() + b.sum() + 1;
  std::vector<Edge> arcs(n * m);
  for (std::size_t i = 0; i < n; ++i) add_arc(g, s, 1 + i, a[static_cast<Eigen::Index>(i)], 0);
  for (std::size_t j = 0; j < m; ++j) add_arc(g, 1 + n + j, t, b[static_cast<Eigen::Index>(j)], 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      arcs[i * m + j] =
          add_arc(g, 1 + i, 1 + n + j, big, C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  boost::successive_shortest_path_nonnegative_weights(g, s, t);

  TransportResult r;
  r.method = TransportMethod::kExact;
  r.plan.pi.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const Edge e = arcs[i * m + j];
      r.plan.pi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          big - boost::get(boost::edge_residual_capacity, g, e);
    }
  }
  // flows below this are rounding residue of the augmentations
  const double tiny = 1e-13 * a.sum();
  r.plan.pi = (r.plan.pi.array() > tiny).select(r.plan.pi, 0.0);
  // Potentials from shortest paths in the final residual graph certify
  // optimality: pi_j <= pi_i + c_ij always, with equality wherever flow runs.
  Eigen::VectorXd pot = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n + m));
  std::deque<std::size_t> queue;
  std::vector<char> queued(n + m, 1);
  for (std::size_t k = 0; k < n + m; ++k) queue.push_back(k);
  std::vector<std::size_t> enqueued(n + m, 1);
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    queued[u] = 0;
    auto relax = [&](std::size_t v, double w) {
      if (pot[static_cast<Eigen::Index>(u)] + w < pot[static_cast<Eigen::Index>(v)]) {
        pot[static_cast<Eigen::Index>(v)] = pot[static_cast<Eigen::Index>(u)] + w;
        if (!queued[v]) {
          queued[v] = 1;
          queue.push_back(v);
          if (++enqueued[v] > n + m + 1) throw std::logic_error("transport: residual graph has a negative cycle");
        }
      }
    };
    if (u < n) {
      for (std::size_t j = 0; j < m; ++j) relax(n + j, C(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(j)));
    } else {
      const std::size_t j = u - n;
      for (std::size_t i = 0; i < n; ++i) {
        if (r.plan.pi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0) {
          relax(i, -C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        }
      }
    }
  }
  r.u = -pot.head(static_cast<Eigen::Index>(n));
  r.v = pot.tail(static_cast<Eigen::Index>(m));
  return r;
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double mx = x.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((x.array() - mx).exp().sum());
}

TransportResult solve_sinkhorn(const Eigen::MatrixXd& C, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                               const TransportOptions& opt) {
  const Eigen::Index n = a.size(), m = b.size();
  const Eigen::VectorXd la = a.array().log(), lb = b.array().log();
  std::vector<double> pos;
  for (Eigen::Index k = 0; k < C.size(); ++k) {
    if (C.data()[k] > 0) pos.push_back(C.data()[k]);
  }
  double eps_final = 1;
  if (!pos.empty()) {
    std::nth_element(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(pos.size() / 2), pos.end());
    eps_final = opt.eps_factor * pos[pos.size() / 2];
  }
  double eps = std::max(C.maxCoeff(), eps_final);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n), g = Eigen::VectorXd::Zero(m);
  TransportResult r;
  r.method = TransportMethod::kSinkhorn;
  Eigen::VectorXd tmp;
  auto plan = [&] {
    Eigen::MatrixXd P(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) P(i, j) = std::exp((f[i] + g[j] - C(i, j)) / eps + la[i] + lb[j]);
    }
    return P;
  };
  while (true) {
    const bool last = eps <= eps_final;
    const double target = last ? opt.sinkhorn_tol : 1e-6;
    const int cap = last ? opt.sinkhorn_max_iter : 2000;
    for (int it = 0; it < cap; ++it, ++r.iterations) {
      for (Eigen::Index i = 0; i < n; ++i) {
        tmp = (g - C.row(i).transpose()) / eps + lb;
        f[i] = -eps * log_sum_exp(tmp);
      }
      for (Eigen::Index j = 0; j < m; ++j) {
        tmp = (f - C.col(j)) / eps + la;
        g[j] = -eps * log_sum_exp(tmp);
      }
      if (it % 10 == 9 || it == cap - 1) {
        const Eigen::MatrixXd P = plan();
        if ((P.rowwise().sum() - a).cwiseAbs().sum() <= target) break;
      }
    }
    if (last) break;
    eps = std::max(eps_final, 0.5 * eps);
  }
  r.plan.pi = plan();
  r.u = f;
  r.v = g;
  r.epsilon = eps;
  return r;
}

InequalityReport single_report(const std::string& id, const CDParams& p, std::vector<double> times,
                               const std::string& sample, const std::vector<Evaluation>& evals,
                               const GridModel& g) {
  InequalityReport r;
  r.id = id;
  r.params = p;
  r.times = std::move(times);
  r.sample = sample;
  r.main.h = g.h();
  r.main.nodes = g.size();
  r.main.evaluations = evals.size();
  double slack = kInf;
  for (const auto& e : evals) {
    const double s = e.margin + e.tolerance;
    if (r.main.worst.function.empty() || s < slack) {
      slack = s;
      r.main.worst = e;
    }
  }
  r.main.min_margin = r.main.worst.margin;
  r.main.tolerance = r.main.worst.tolerance;
  r.main.pass = !evals.empty() && r.main.min_margin >= -r.main.tolerance;
  r.pass = r.main.pass;
  return r;
}

Evaluation make_eval(const std::string& name, double t, double lhs, double rhs, double h) {
  Evaluation e;
  e.function = name;
  e.t = t;
  e.lhs = lhs;
  e.rhs = rhs;
  e.margin = rhs - lhs;
  e.tolerance = inequality_tolerance(h, lhs, rhs, false);
  return e;
}

void check_density(const GridModel& g, const Eigen::VectorXd& f, bool strict) {
  if (!g.probability) throw std::invalid_argument("transport: needs a probability measure on the grid");
  if (static_cast<std::size_t>(f.size()) != g.size()) throw std::invalid_argument("transport: size mismatch");
  if (strict ? (f.array() <= 0).any() : (f.array() < 0).any()) {
    throw std::invalid_argument(strict ? "transport: f must be positive" : "transport: f must be nonnegative");
  }
  if (std::abs(g.mu.dot(f) - 1) > 1e-8) throw std::invalid_argument("transport: f must integrate to 1");
}

double harnack_c(const CDParams& p, double t) {
  return (1 + 2 * p.kappa / p.rho2 + 2 * p.rho1_minus() * t) / (4 * t);
}

}  // namespace

TransportResult wasserstein2(const DistanceMatrix& d, const Eigen::VectorXd& mu, const Eigen::VectorXd& nu,
                             double h, const TransportOptions& opt) {
  if (mu.size() != nu.size() || mu.size() != d.d.cols()) throw std::invalid_argument("transport: size mismatch");
  if ((mu.array() < 0).any() || (nu.array() < 0).any()) {
    throw std::invalid_argument("transport: measures must be nonnegative");
  }
  if (std::abs(mu.sum() - nu.sum()) > 1e-9 * std::max(1.0, mu.sum())) {
    throw std::invalid_argument("transport: marginal totals differ");
  }
  TransportResult r;
  const auto rows = support(mu), cols = support(nu);
  Eigen::VectorXd a(rows.size()), b(cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) a[static_cast<Eigen::Index>(i)] = mu[static_cast<Eigen::Index>(rows[i])];
  for (std::size_t j = 0; j < cols.size(); ++j) b[static_cast<Eigen::Index>(j)] = nu[static_cast<Eigen::Index>(cols[j])];
  double unit = 1;
  const Eigen::MatrixXd C = cost_matrix(d, rows, cols, h, unit);
  TransportMethod method = opt.method;
  if (method == TransportMethod::kAuto) {
    method = std::max(rows.size(), cols.size()) <= opt.exact_max ? TransportMethod::kExact
                                                                  : TransportMethod::kSinkhorn;
  }
  if (method == TransportMethod::kExact) {
    r = solve_exact(C, a, b);
    const double primal = r.plan.pi.cwiseProduct(C).sum();
    const double dual = a.dot(r.u) + b.dot(r.v);
    r.dual_objective = dual * unit;
    r.duality_gap = std::abs(primal - dual) / std::max(std::abs(primal), 1e-300);
    if (primal == 0) r.duality_gap = std::abs(dual);
  } else {
    r = solve_sinkhorn(C * unit, a, b, opt);
    r.u /= unit;
    r.v /= unit;
  }
  r.plan.rows = rows;
  r.plan.cols = cols;
  r.plan.mu = a;
  r.plan.nu = b;
  r.cost = r.plan.pi.cwiseProduct(C).sum() * unit;
  r.u *= unit;
  r.v *= unit;
  r.w2 = std::sqrt(std::max(0.0, r.cost));
  return r;
}

Eigen::VectorXd inf_convolution(const Eigen::VectorXd& phi, double s, const DistanceMatrix& d) {
  if (!(s > 0)) throw std::invalid_argument("inf-convolution: s must be positive");
  if (phi.size() != d.d.cols()) throw std::invalid_argument("inf-convolution: size mismatch");
  Eigen::VectorXd q(static_cast<Eigen::Index>(d.sources.size()));
  for (Eigen::Index r = 0; r < q.size(); ++r) {
    q[r] = (phi + d.d.row(r).transpose().cwiseAbs2() / (2 * s)).minCoeff();
  }
  return q;
}

InequalityReport verify_entropy_wasserstein(const GridModel& g, const Semigroup& P, const DistanceMatrix& d,
                                            const Eigen::VectorXd& f, const std::string& name,
                                            const std::vector<double>& times, const CDParams& params,
                                            const TransportOptions& opt) {
  check_density(g, f, false);
  if (times.empty()) throw std::invalid_argument("entropy-wasserstein: no times");
  const TransportResult w = wasserstein2(d, g.mu, g.mu.cwiseProduct(f), g.h(), opt);
  std::vector<Evaluation> evals;
  std::vector<ConstantRecord> constants;
  bool floored = false;
  for (double t : times) {
    if (!(t > 0)) throw std::invalid_argument("entropy-wasserstein: times must be positive");
    Eigen::VectorXd u = P.apply(f, t);
    floored = floored || (u.array() < kFloor).any();
    u = u.cwiseMax(kFloor);
    const double c = harnack_c(params, t);
    evals.push_back(make_eval(name, t, entropy(g.mu, u), c * w.cost, g.h()));
    constants.push_back({"(1+2κ/ρ₂+2ρ₁⁻t)/(4t)", t, c});
  }
  InequalityReport r = single_report("ENTROPY_WASSERSTEIN", params, times,
                                     "1 density x " + std::to_string(times.size()) + " times", evals, g);
  r.constants = std::move(constants);
  r.constants.push_back({"W2(μ,ν)", {}, w.w2});
  r.notes.push_back("W2 by " + to_string(w.method) + " on jump-graph distances");
  if (floored) r.notes.push_back("P_t f floored at 1e-8");
  return r;
}

double hwi_min_time(const CDParams& p, double c) {
  const double rm = p.rho1_minus();
  if (!(c > 0) || (rm > 0 && !(c < 2 / rm))) {
    throw std::invalid_argument("modified HWI: c must lie in (0, 2/rho1^-)");
  }
  return c * (1 + 2 * p.kappa / p.rho2) / (4 * (1 - c * rm / 2));
}

double hwi_constant(const CDParams& p, double c, double T) {
  const double a = alpha_of(p);
  const double A = a > 0 ? std::expm1(2 * a * T) / (2 * a) : T;
  const double denom = 1 - c * harnack_c(p, T);
  if (!(denom > 0)) throw std::invalid_argument("modified HWI: T too small for this c");
  return A / denom;
}

double hwi_optimal_time(const CDParams& p, double c) {
  const double lo = hwi_min_time(p, c);
  // C blows up at lo and grows at least linearly for large T
  const double a = std::log(lo * (1 + 1e-9) + 1e-12), b = std::log(100 * (lo + 1));
  const auto r = boost::math::tools::brent_find_minima(
      [&](double s) { return hwi_constant(p, c, std::exp(s)); }, a, b, 40);
  return std::exp(r.first);
}

HwiReport verify_modified_hwi(const GridModel& g, const DistanceMatrix& d, const Eigen::VectorXd& f,
                              const std::string& name, double c, std::optional<double> T,
                              const CDParams& params, const TransportOptions& opt) {
  check_density(g, f, true);
  hwi_min_time(params, c);
  HwiReport out;
  out.T_optimized = !T.has_value();
  out.T = T ? *T : hwi_optimal_time(params, c);
  out.C = hwi_constant(params, c, out.T);
  const TransportResult w = wasserstein2(d, g.mu, g.mu.cwiseProduct(f), g.h(), opt);
  const double ent = entropy(g.mu, f);
  out.hypothesis = single_report("HWI_HYPOTHESIS", params, {}, "1 density",
                                 {make_eval(name, 0, w.cost, c * ent, g.h())}, g);
  out.hypothesis.constants = {{"c", {}, c}, {"W2(μ,ν)", {}, w.w2}};
  const double fisher_h = g.mu.dot(grid_gamma(g, f).cwiseQuotient(f));
  const double fisher_z = g.mu.dot(grid_gamma_z(g, f).cwiseQuotient(f));
  out.conclusion = single_report("MODIFIED_HWI", params, {out.T}, "1 density",
                                 {make_eval(name, out.T, ent, out.C * (fisher_h + fisher_z), g.h())}, g);
  out.conclusion.constants = {
      {"α = -min(ρ₂, ρ₁-κ, 0)", {}, alpha_of(params)},
      {"C₁ = C₂ = (∫₀ᵀ exp(2αs) ds)/(1 - c(1+2κ/ρ₂+2ρ₁⁻T)/(4T))", out.T, out.C}};
  out.conclusion.notes.push_back("constants derived from the proof; T " +
                                 std::string(out.T_optimized ? "minimizes C" : "supplied"));
  return out;
}

Eigen::VectorXd density_from_expression(const GridModel& g, const std::string& expr) {
  const Eigen::VectorXd f = g.sample(Expr::parse(expr, g.coords));
  if ((f.array() < 0).any() || !f.allFinite()) throw std::invalid_argument("density must be finite and nonnegative: " + expr);
  const double z = g.mu.dot(f);
  if (!(z > 0)) throw std::invalid_argument("density has zero mass: " + expr);
  return f / z;
}

std::vector<std::string> random_density_expressions(const std::vector<std::string>& coords, std::size_t count,
                                                    std::uint64_t seed) {
  const Rng root(seed);
  std::vector<std::string> out;
  for (std::size_t k = 0; k < count; ++k) {
    Rng rng = root.split(k);
    std::ostringstream e;
    e.precision(6);
    e << "exp(0";
    for (const auto& c : coords) {
      const double a = rng.uniform(-1, 1), b = rng.uniform(0.3, 2), ph = rng.uniform(0, 3), d = rng.uniform(-0.5, 0.5);
      e << (a < 0 ? "-" : "+") << std::abs(a) << "*sin(" << b << "*" << c << "+" << ph << ")"
        << (d < 0 ? "-" : "+") << std::abs(d) << "*" << c;
    }
    e << ")";
    out.push_back(e.str());
  }
  return out;
}

}  // namespace cdgamma
