#include "cdgamma/registry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>

#include "cdgamma/parallel.hpp"
#include "cdgamma/random.hpp"

namespace cdgamma {

using nlohmann::json;

const std::vector<std::string>& registry_ids() {
  static const std::vector<std::string> ids = {
      "GRAD_LOG",     "GRAD",         "GRAD_ALPHA",   "POINCARE",      "MLSI_VERTICAL",
      "REV_LSI",      "REV_POINCARE", "REG_BOUND",    "WANG_HARNACK",  "LOG_HARNACK",
      "KERNEL_LOWER", "LSI",          "HYPERCONTRACT", "L1_SMOOTHING", "L1_SMOOTHING_PROOF",
      "LSI_DIM_CONST"};
  return ids;
}

bool is_registry_id(const std::string& id) {
  const auto& ids = registry_ids();
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

double inequality_tolerance(double h, double lhs, double rhs, bool log_form) {
  double scale = std::max(std::abs(lhs), std::abs(rhs));
  if (log_form) scale = std::max(1.0, scale);
  if (!std::isfinite(scale)) return 1e-6;
  return 1e-6 + 5 * h * h * scale;
}

double phi_entropy(double x) {
  if (x < 0) throw std::invalid_argument("phi: x must be nonnegative");
  return (1 + x) * std::log1p(x) - (x > 0 ? x * std::log(x) : 0.0);
}

double lsi_dimension_constant(const CDParams& p) {
  if (!(p.rho1 > 0)) throw std::invalid_argument("LSI_DIM_CONST: needs rho1 > 0");
  if (!p.finite_dimension()) return kInf;
  const double x = 0.5 * p.d * (1 + 1.5 * p.kappa / p.rho2);
  return 3 * (p.rho2 + p.kappa) / (p.rho1 * p.rho2) * (1 + phi_entropy(x));
}

namespace {

std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct IdTraits {
  bool needs_rho1_positive = false;
  bool needs_probability = false;
  bool needs_rho0 = false;
  bool two_point = false;
  bool time_free = false;
};

IdTraits traits_of(const std::string& id) {
  IdTraits t;
  t.needs_rho1_positive = id == "GRAD_LOG" || id == "GRAD" || id == "POINCARE" ||
                          id == "MLSI_VERTICAL" || id == "LSI_DIM_CONST";
  t.needs_probability = id == "POINCARE" || id == "MLSI_VERTICAL" || id == "LSI" ||
                        id == "LSI_DIM_CONST" || id == "KERNEL_LOWER" || id == "HYPERCONTRACT";
  t.needs_rho0 = id == "LSI" || id == "HYPERCONTRACT";
  t.two_point = id == "WANG_HARNACK" || id == "LOG_HARNACK" || id == "KERNEL_LOWER";
  t.time_free = id == "POINCARE" || id == "MLSI_VERTICAL" || id == "LSI" || id == "LSI_DIM_CONST";
  return t;
}

// (1 + 2 kappa / rho2 + 2 rho1^- t)
double harnack_numerator(const CDParams& p, double t) {
  return 1 + 2 * p.kappa / p.rho2 + 2 * p.rho1_minus() * t;
}

double harnack_c(const CDParams& p, double t) { return harnack_numerator(p, t) / (4 * t); }

double smoothing_inner(const CDParams& p, double t) {
  return 0.5 + p.kappa / p.rho2 + p.rho1_minus() * t;
}

double grad_alpha(const CDParams& p, const RegistryInputs& in) {
  return in.alpha ? *in.alpha : alpha_of(p);
}

std::vector<std::string> derived_kinds(const std::string& id, const RegistryInputs& in) {
  if (id == "GRAD_LOG" || id == "GRAD_ALPHA") return {"fe", "fGlog", "fGZlog"};
  if (id == "GRAD") return {"f", "G", "GZ"};
  if (id == "REV_LSI") return {"fe", "flnf"};
  if (id == "REV_POINCARE") return {"f", "f2"};
  if (id == "REG_BOUND" || id == "HYPERCONTRACT" || id == "L1_SMOOTHING" ||
      id == "L1_SMOOTHING_PROOF") {
    return {"f"};
  }
  if (id == "WANG_HARNACK") return {"fe", "pow:" + format_number(in.wang_alpha)};
  if (id == "LOG_HARNACK") return {"fe", "lnf"};
  return {};
}

// Streaming reduction that keeps the evaluation with the least slack.
struct Reducer {
  double h = 0;
  std::size_t count = 0, unresolved = 0;
  bool have = false;
  double slack = std::numeric_limits<double>::infinity();
  Evaluation best;

  void consider(const std::string& fn, double t, std::optional<std::size_t> node,
                std::optional<std::size_t> node_y,
                double lhs, double rhs, bool log_form) {
    ++count;
    const double margin = std::isnan(lhs) || std::isnan(rhs) ? -kInf : rhs - lhs;
    const double tol = inequality_tolerance(h, lhs, rhs, log_form);
    const double s = margin + tol;
    if (!have || s < slack) {
      have = true;
      slack = s;
      best.function = fn;
      best.t = t;
      best.node = node;
      best.node_y = node_y;
      best.lhs = lhs;
      best.rhs = rhs;
      best.margin = margin;
      best.tolerance = tol;
    }
  }

  void merge(const Reducer& o) {
    count += o.count;
    unresolved += o.unresolved;
    if (o.have && (!have || o.slack < slack)) {
      have = true;
      slack = o.slack;
      best = o.best;
    }
  }
};

}  // namespace

struct HeatVerifier::Level {
  GridModel g;
  Semigroup P;
  std::map<std::string, Eigen::VectorXd> base;
  std::map<std::tuple<std::string, std::string, double>, Eigen::VectorXd> cache;
  std::map<std::vector<std::size_t>, DistanceMatrix> distances;
  std::set<std::string> floored;
  std::vector<std::size_t> component;
  std::size_t components = 1;
  int jobs = 1;

  Level(GridModel grid, const SemigroupOptions& opt)
      : g(std::move(grid)), P(g, opt), component(component_labels(g.G)), jobs(opt.jobs) {
    components = 1 + *std::max_element(component.begin(), component.end());
  }

  const Eigen::VectorXd& sampled(const std::string& expr) {
    auto it = base.find("f|" + expr);
    if (it != base.end()) return it->second;
    return base["f|" + expr] = g.sample(Expr::parse(expr, g.coords));
  }

  const Eigen::VectorXd& derived(const std::string& expr, const std::string& kind) {
    const std::string key = kind + "|" + expr;
    auto it = base.find(key);
    if (it != base.end()) return it->second;
    const Eigen::VectorXd& f = sampled(expr);
    Eigen::VectorXd v;
    if (kind == "f") return f;
    if (kind == "fe") {
      if ((f.array() < kFloor).any()) floored.insert(expr);
      v = f.cwiseMax(kFloor);
    } else if (kind == "f2") {
      v = f.cwiseAbs2();
    } else if (kind == "lnf") {
      v = derived(expr, "fe").array().log();
    } else if (kind == "flnf") {
      const Eigen::VectorXd& e = derived(expr, "fe");
      v = e.array() * e.array().log();
    } else if (kind == "fGlog") {
      v = derived(expr, "fe").cwiseProduct(grid_gamma(g, derived(expr, "lnf")));
    } else if (kind == "fGZlog") {
      v = derived(expr, "fe").cwiseProduct(grid_gamma_z(g, derived(expr, "lnf")));
    } else if (kind == "G") {
      v = grid_gamma(g, f);
    } else if (kind == "GZ") {
      v = grid_gamma_z(g, f);
    } else if (kind.rfind("pow:", 0) == 0) {
      v = derived(expr, "fe").array().pow(std::stod(kind.substr(4)));
    } else {
      throw std::logic_error("registry: unknown derived quantity " + kind);
    }
    return base[key] = std::move(v);
  }

  // Computes every missing P_t column with one block application per time.
  void prefetch(const std::vector<std::pair<std::string, std::string>>& cols,
                const std::vector<double>& times) {
    for (double t : times) {
      std::vector<std::pair<std::string, std::string>> missing;
      for (const auto& c : cols) {
        if (!cache.count({c.first, c.second, t}) &&
            std::find(missing.begin(), missing.end(), c) == missing.end()) {
          missing.push_back(c);
        }
      }
      if (missing.empty()) continue;
      Eigen::MatrixXd F(g.size(), missing.size());
      for (std::size_t j = 0; j < missing.size(); ++j) {
        F.col(static_cast<Eigen::Index>(j)) = derived(missing[j].first, missing[j].second);
      }
      const Eigen::MatrixXd R = P.apply_block(F, t);
      for (std::size_t j = 0; j < missing.size(); ++j) {
        cache[{missing[j].first, missing[j].second, t}] = R.col(static_cast<Eigen::Index>(j));
      }
    }
  }

  const Eigen::VectorXd& heat(const std::string& expr, const std::string& kind, double t) {
    auto it = cache.find({expr, kind, t});
    if (it != cache.end()) return it->second;
    prefetch({{expr, kind}}, {t});
    return cache.at({expr, kind, t});
  }

  const DistanceMatrix& distance(const std::vector<std::size_t>& sources) {
    auto it = distances.find(sources);
    if (it != distances.end()) return it->second;
    return distances[sources] = subriemannian_distance(g, sources, jobs, true);
  }
};

namespace {

using Level = HeatVerifier::Level;

struct PairPlan {
  std::vector<std::size_t> sources;
  // targets per source
  std::vector<std::vector<std::size_t>> targets;
};

// Pairs are only formed inside one component of the jump graph.
PairPlan plan_pairs(const Level& L, const RegistryInputs& in, const std::vector<std::size_t>& eval) {
  const GridModel& g = L.g;
  PairPlan plan;
  if (!in.pairs.empty()) {
    for (const auto& [x, y] : in.pairs) {
      const std::size_t a = g.nearest(x), b = g.nearest(y);
      if (L.component[a] != L.component[b]) {
        throw std::invalid_argument("registry: pair joins two components of the jump graph");
      }
      auto it = std::find(plan.sources.begin(), plan.sources.end(), a);
      if (it == plan.sources.end()) {
        plan.sources.push_back(a);
        plan.targets.emplace_back();
        it = plan.sources.end() - 1;
      }
      plan.targets[static_cast<std::size_t>(it - plan.sources.begin())].push_back(b);
    }
    return plan;
  }
  if (!in.sources.empty()) {
    for (const auto& x : in.sources) {
      const std::size_t a = g.nearest(x);
      if (std::find(plan.sources.begin(), plan.sources.end(), a) == plan.sources.end()) {
        plan.sources.push_back(a);
      }
    }
  } else if (eval.size() <= in.max_sources) {
    plan.sources = eval;
  } else {
    // partial Fisher-Yates over the evaluation nodes
    std::vector<std::size_t> pool = eval;
    Rng rng(in.seed);
    const std::size_t k = std::min(in.sampled_sources, pool.size());
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    plan.sources.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  for (std::size_t s : plan.sources) {
    plan.targets.emplace_back();
    for (std::size_t y : eval) {
      if (L.component[y] == L.component[s]) plan.targets.back().push_back(y);
    }
  }
  return plan;
}

double norm_p(const Eigen::VectorXd& mu, const Eigen::VectorXd& f, double p) {
  return std::pow(mu.dot(f.cwiseAbs().array().pow(p).matrix()), 1 / p);
}

double variance(const Eigen::VectorXd& mu, const Eigen::VectorXd& f) {
  const double m = mu.dot(f);
  return mu.dot((f.array() - m).square().matrix());
}

double max_over(const Eigen::VectorXd& v, const std::vector<std::size_t>& nodes, std::size_t& arg) {
  double best = -kInf;
  for (std::size_t n : nodes) {
    if (v[n] > best) {
      best = v[n];
      arg = n;
    }
  }
  return best;
}

void check_preconditions(const std::string& id, const GridModel& g, const RegistryInputs& in,
                         const CDParams& p) {
  if (!is_registry_id(id)) throw std::invalid_argument("registry: unknown inequality id " + id);
  const IdTraits tr = traits_of(id);
  if (tr.needs_rho1_positive && !(p.rho1 > 0)) {
    throw std::invalid_argument(id + ": needs rho1 > 0");
  }
  if (tr.needs_probability && !g.probability) {
    throw std::invalid_argument(id + ": needs a probability measure on the grid");
  }
  if (tr.needs_rho0 && !(in.rho0 && *in.rho0 > 0)) {
    throw std::invalid_argument(id + ": needs rho0 > 0");
  }
  if (!tr.time_free && id != "KERNEL_LOWER" && in.functions.empty()) {
    throw std::invalid_argument(id + ": no test functions");
  }
  if (tr.time_free && in.functions.empty()) throw std::invalid_argument(id + ": no test functions");
  if (!tr.time_free && in.times.empty()) throw std::invalid_argument(id + ": no times");
  for (double t : in.times) {
    if (!(t > 0)) throw std::invalid_argument(id + ": times must be positive");
  }
  if (id == "WANG_HARNACK" && !(in.wang_alpha > 1)) {
    throw std::invalid_argument("WANG_HARNACK: alpha must exceed 1");
  }
  if (id == "HYPERCONTRACT" && !(in.p > 1)) throw std::invalid_argument("HYPERCONTRACT: p must exceed 1");
}

LevelReport run_level(Level& L, const std::string& id, const RegistryInputs& in, const CDParams& p) {
  const GridModel& g = L.g;
  const IdTraits tr = traits_of(id);
  const std::vector<std::size_t> eval = g.interior_nodes(in.interior);
  const auto& F = in.functions;
  const std::vector<double> times = tr.time_free ? std::vector<double>{0.0} : in.times;

  std::vector<std::pair<std::string, std::string>> cols;
  for (const auto& f : F) {
    for (const auto& k : derived_kinds(id, in)) cols.emplace_back(f, k);
  }
  if (!tr.time_free) L.prefetch(cols, times);

  PairPlan pairs;
  const DistanceMatrix* dist = nullptr;
  if (tr.two_point) {
    pairs = plan_pairs(L, in, eval);
    dist = &L.distance(pairs.sources);
  }

  const std::size_t nf = id == "KERNEL_LOWER" ? pairs.sources.size() : F.size();
  const std::size_t tasks = nf * times.size();
  std::vector<Reducer> red(tasks);
  for (auto& r : red) r.h = g.h();

  auto H = [&](std::size_t fi, const std::string& kind, double t) -> const Eigen::VectorXd& {
    return L.cache.at({F[fi], kind, t});
  };
  // the workers below only read from the level
  for (const auto& f : F) L.sampled(f);
  if (tr.time_free || id == "L1_SMOOTHING" || id == "L1_SMOOTHING_PROOF") {
    for (const auto& f : F) {
      L.derived(f, "G");
      L.derived(f, "GZ");
    }
  }
  std::vector<Eigen::VectorXd> kernels;
  if (id == "KERNEL_LOWER") {
    kernels.resize(tasks);
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      for (std::size_t s = 0; s < pairs.sources.size(); ++s) {
        kernels[s * times.size() + ti] = L.P.kernel(pairs.sources[s], 2 * times[ti]);
      }
    }
  }

  parallel_for(tasks, L.jobs, [&](std::size_t task) {
    const std::size_t fi = task / times.size(), ti = task % times.size();
    const double t = times[ti];
    Reducer& R = red[task];
    if (id == "KERNEL_LOWER") {
      const Eigen::VectorXd& k = kernels[task];
      const double c = harnack_c(p, t);
      // entries this far below the peak are at the rounding level of the kernel
      const double resolved = kKernelResolution * k.maxCoeff();
      for (std::size_t y : pairs.targets[fi]) {
        if (k[y] < resolved) {
          ++R.unresolved;
          continue;
        }
        const double d = dist->d(static_cast<Eigen::Index>(fi), static_cast<Eigen::Index>(y));
        const double rhs = k[y] > 0 ? std::log(k[y]) : -kInf;
        R.consider("heat kernel", t, pairs.sources[fi], y, -c * d * d, rhs, true);
      }
      return;
    }
    const std::string& fn = F[fi];
    const Eigen::VectorXd& f = L.base.at("f|" + fn);
    if (id == "GRAD_LOG" || id == "GRAD_ALPHA") {
      const Eigen::VectorXd u = H(fi, "fe", t).cwiseMax(kFloor);
      const Eigen::VectorXd lu = u.array().log();
      const Eigen::VectorXd a = u.cwiseProduct(grid_gamma(g, lu));
      const Eigen::VectorXd b = u.cwiseProduct(grid_gamma_z(g, lu));
      const Eigen::VectorXd& pa = H(fi, "fGlog", t);
      const Eigen::VectorXd& pb = H(fi, "fGZlog", t);
      double c = 1, k = 1;
      if (id == "GRAD_LOG") {
        c = (p.kappa + p.rho2) / p.rho1;
        k = std::exp(-2 * p.rho1 * p.rho2 * t / (p.kappa + p.rho2));
      } else {
        k = std::exp(2 * grad_alpha(p, in) * t);
      }
      for (std::size_t n : eval) R.consider(fn, t, n, {}, a[n] + c * b[n], k * (pa[n] + c * pb[n]), false);
    } else if (id == "GRAD") {
      const Eigen::VectorXd& u = H(fi, "f", t);
      const Eigen::VectorXd a = grid_gamma(g, u), b = grid_gamma_z(g, u);
      const double c = (p.kappa + p.rho2) / p.rho1;
      const double k = std::exp(-2 * p.rho1 * p.rho2 * t / (p.kappa + p.rho2));
      const Eigen::VectorXd& pa = H(fi, "G", t);
      const Eigen::VectorXd& pb = H(fi, "GZ", t);
      for (std::size_t n : eval) R.consider(fn, t, n, {}, a[n] + c * b[n], k * (pa[n] + c * pb[n]), false);
    } else if (id == "REV_LSI") {
      const Eigen::VectorXd u = H(fi, "fe", t).cwiseMax(kFloor);
      const Eigen::VectorXd lu = u.array().log();
      const Eigen::VectorXd a = grid_gamma(g, lu), b = grid_gamma_z(g, lu);
      const Eigen::VectorXd& pf = H(fi, "flnf", t);
      const double k = harnack_numerator(p, t);
      for (std::size_t n : eval) {
        const double lhs = t * u[n] * a[n] + p.rho2 * t * t * u[n] * b[n];
        R.consider(fn, t, n, {}, lhs, k * (pf[n] - u[n] * lu[n]), false);
      }
    } else if (id == "REV_POINCARE") {
      const Eigen::VectorXd& u = H(fi, "f", t);
      const Eigen::VectorXd a = grid_gamma(g, u), b = grid_gamma_z(g, u);
      const Eigen::VectorXd& p2 = H(fi, "f2", t);
      const double k = 0.5 * harnack_numerator(p, t);
      for (std::size_t n : eval) {
        R.consider(fn, t, n, {}, t * a[n] + p.rho2 * t * t * b[n], k * (p2[n] - u[n] * u[n]), false);
      }
    } else if (id == "REG_BOUND") {
      const Eigen::VectorXd s = grid_gamma(g, H(fi, "f", t)).cwiseSqrt();
      std::size_t arg = eval.empty() ? 0 : eval[0];
      const double lhs = max_over(s, eval, arg);
      const double rhs = std::sqrt(smoothing_inner(p, t) / t) * f.cwiseAbs().maxCoeff();
      R.consider(fn, t, arg, {}, lhs, rhs, false);
    } else if (id == "WANG_HARNACK") {
      const double al = in.wang_alpha;
      const Eigen::VectorXd lu = H(fi, "fe", t).cwiseMax(kFloor).array().log();
      const Eigen::VectorXd lw =
          H(fi, "pow:" + format_number(al), t).cwiseMax(std::numeric_limits<double>::min()).array().log();
      const double c = al / (al - 1) * harnack_c(p, t);
      for (std::size_t s = 0; s < pairs.sources.size(); ++s) {
        const std::size_t x = pairs.sources[s];
        for (std::size_t y : pairs.targets[s]) {
          const double d = dist->d(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(y));
          R.consider(fn, t, x, y, al * lu[x], lw[y] + c * d * d, true);
        }
      }
    } else if (id == "LOG_HARNACK") {
      const Eigen::VectorXd lu = H(fi, "fe", t).cwiseMax(kFloor).array().log();
      const Eigen::VectorXd& pl = H(fi, "lnf", t);
      const double c = harnack_c(p, t);
      for (std::size_t s = 0; s < pairs.sources.size(); ++s) {
        const std::size_t x = pairs.sources[s];
        for (std::size_t y : pairs.targets[s]) {
          const double d = dist->d(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(y));
          R.consider(fn, t, x, y, pl[x], lu[y] + c * d * d, true);
        }
      }
    } else if (id == "POINCARE") {
      const double c = (p.kappa + p.rho2) / (p.rho1 * p.rho2);
      R.consider(fn, 0, {}, {}, variance(g.mu, f), c * g.mu.dot(L.base.at("G|" + fn)), false);
    } else if (id == "MLSI_VERTICAL") {
      const double c = 2 * (p.kappa + p.rho2) / (p.rho1 * p.rho2);
      const double cz = (p.kappa + p.rho2) / p.rho1;
      const double ent = entropy(g.mu, f.cwiseAbs2().cwiseMax(kFloor));
      const double rhs = c * (g.mu.dot(L.base.at("G|" + fn)) + cz * g.mu.dot(L.base.at("GZ|" + fn)));
      R.consider(fn, 0, {}, {}, ent, rhs, false);
    } else if (id == "LSI" || id == "LSI_DIM_CONST") {
      const double c = id == "LSI" ? 2 / *in.rho0 : lsi_dimension_constant(p);
      const double ent = entropy(g.mu, f.cwiseAbs2().cwiseMax(kFloor));
      const double energy = g.mu.dot(L.base.at("G|" + fn));
      R.consider(fn, 0, {}, {}, ent, std::isinf(c) ? kInf : c * energy, false);
    } else if (id == "HYPERCONTRACT") {
      const double q = 1 + (in.p - 1) * std::exp(2 * *in.rho0 * t);
      R.consider(fn, t, {}, {}, norm_p(g.mu, H(fi, "f", t), q), norm_p(g.mu, f, in.p), false);
    } else if (id == "L1_SMOOTHING" || id == "L1_SMOOTHING_PROOF") {
      const double lhs = g.mu.dot((f - H(fi, "f", t)).cwiseAbs());
      const double grad = g.mu.dot(L.base.at("G|" + fn).cwiseSqrt());
      const double c = id == "L1_SMOOTHING" ? smoothing_inner(p, t) * std::sqrt(t)
                                            : 2 * std::sqrt(smoothing_inner(p, t) * t);
      R.consider(fn, t, {}, {}, lhs, c * grad, false);
    }
  });

  Reducer all;
  all.h = g.h();
  for (const auto& r : red) all.merge(r);

  LevelReport rep;
  rep.h = g.h();
  rep.nodes = g.size();
  rep.evaluations = all.count;
  rep.worst = all.best;
  if (rep.worst.node) rep.worst.x = g.point(*rep.worst.node);
  if (rep.worst.node_y) rep.worst.y = g.point(*rep.worst.node_y);
  rep.min_margin = all.best.margin;
  rep.tolerance = all.best.tolerance;
  rep.pass = all.have && rep.min_margin >= -rep.tolerance;
  for (const auto& f : F) {
    if (L.floored.count(f)) rep.notes.push_back("floored at 1e-8: " + f);
  }
  if (all.unresolved > 0) {
    rep.notes.push_back(std::to_string(all.unresolved) +
                        " pairs skipped: kernel below 1e-12 of its peak, under the solver's resolution");
  }
  if (tr.two_point && L.components > 1) {
    rep.notes.push_back("the jump graph has " + std::to_string(L.components) +
                        " components; pairs are taken within the source's component");
  }
  return rep;
}

std::vector<ConstantRecord> constants_of(const std::string& id, const CDParams& p,
                                         const RegistryInputs& in) {
  std::vector<ConstantRecord> c;
  auto per_t = [&](const std::string& e, auto fn) {
    for (double t : in.times) c.push_back({e, t, fn(t)});
  };
  if (id == "GRAD_LOG" || id == "GRAD") {
    c.push_back({"(κ+ρ₂)/ρ₁", {}, (p.kappa + p.rho2) / p.rho1});
    per_t("exp(-2ρ₁ρ₂t/(κ+ρ₂))",
          [&](double t) { return std::exp(-2 * p.rho1 * p.rho2 * t / (p.kappa + p.rho2)); });
  } else if (id == "GRAD_ALPHA") {
    const double a = grad_alpha(p, in);
    c.push_back({in.alpha ? "α" : "α = -min(ρ₂, ρ₁-κ, 0)", {}, a});
    per_t("exp(2αt)", [&](double t) { return std::exp(2 * a * t); });
  } else if (id == "POINCARE") {
    c.push_back({"(κ+ρ₂)/(ρ₁ρ₂)", {}, (p.kappa + p.rho2) / (p.rho1 * p.rho2)});
  } else if (id == "MLSI_VERTICAL") {
    c.push_back({"2(κ+ρ₂)/(ρ₁ρ₂)", {}, 2 * (p.kappa + p.rho2) / (p.rho1 * p.rho2)});
    c.push_back({"(κ+ρ₂)/ρ₁", {}, (p.kappa + p.rho2) / p.rho1});
  } else if (id == "REV_LSI") {
    per_t("1+2κ/ρ₂+2ρ₁⁻t", [&](double t) { return harnack_numerator(p, t); });
  } else if (id == "REV_POINCARE") {
    per_t("(1+2κ/ρ₂+2ρ₁⁻t)/2", [&](double t) { return 0.5 * harnack_numerator(p, t); });
  } else if (id == "REG_BOUND") {
    per_t("sqrt((1/2+κ/ρ₂+ρ₁⁻t)/t)", [&](double t) { return std::sqrt(smoothing_inner(p, t) / t); });
  } else if (id == "WANG_HARNACK") {
    const double a = in.wang_alpha;
    c.push_back({"α", {}, a});
    per_t("(α/(α-1))(1+2κ/ρ₂+2ρ₁⁻t)/(4t)", [&](double t) { return a / (a - 1) * harnack_c(p, t); });
  } else if (id == "LOG_HARNACK" || id == "KERNEL_LOWER") {
    per_t("(1+2κ/ρ₂+2ρ₁⁻t)/(4t)", [&](double t) { return harnack_c(p, t); });
  } else if (id == "LSI") {
    c.push_back({"2/ρ₀", {}, 2 / *in.rho0});
  } else if (id == "LSI_DIM_CONST") {
    c.push_back({"3(ρ₂+κ)/(ρ₁ρ₂)(1+Φ((d/2)(1+3κ/(2ρ₂)))), Φ(x)=(1+x)ln(1+x)-x ln x", {},
                 lsi_dimension_constant(p)});
  } else if (id == "HYPERCONTRACT") {
    c.push_back({"p", {}, in.p});
    per_t("q = 1+(p-1)exp(2ρ₀t)", [&](double t) { return 1 + (in.p - 1) * std::exp(2 * *in.rho0 * t); });
  } else if (id == "L1_SMOOTHING") {
    per_t("(1/2+κ/ρ₂+ρ₁⁻t)sqrt(t)", [&](double t) { return smoothing_inner(p, t) * std::sqrt(t); });
  } else if (id == "L1_SMOOTHING_PROOF") {
    per_t("2sqrt(1/2+κ/ρ₂+ρ₁⁻t)sqrt(t)", [&](double t) { return 2 * std::sqrt(smoothing_inner(p, t) * t); });
  }
  return c;
}

std::vector<std::string> notes_of(const std::string& id, const CDParams& p, const RegistryInputs& in) {
  std::vector<std::string> n;
  const IdTraits tr = traits_of(id);
  if (tr.two_point) {
    n.push_back("distances are jump-graph path lengths, an upper bound on the control distance");
  }
  if (!tr.time_free && id != "KERNEL_LOWER" && id != "REG_BOUND" && id != "HYPERCONTRACT" &&
      id != "L1_SMOOTHING" && id != "L1_SMOOTHING_PROOF") {
    n.push_back("nodewise sides are compared on the central " + format_number(in.interior) +
                " of every axis");
  }
  if (tr.time_free) n.push_back("time-independent inequality; evaluated once per function");
  if (id == "LSI_DIM_CONST") {
    n.push_back("formula evaluation with consistency checks only: no model in numeric scope has finite "
                "dimension together with rho1 > 0");
    if (!p.finite_dimension()) n.push_back("the constant is infinite for d = inf; the check is vacuous");
  }
  if (id == "L1_SMOOTHING") {
    n.push_back("integrating sqrt(c/s) over [0, t] gives 2 sqrt(c t); that constant is checked as "
                "L1_SMOOTHING_PROOF");
  }
  return n;
}

std::string sample_of(const std::string& id, const RegistryInputs& in, const LevelReport& r) {
  const IdTraits tr = traits_of(id);
  std::string s = id == "KERNEL_LOWER" ? std::string("heat kernel")
                                       : std::to_string(in.functions.size()) + " functions";
  if (!tr.time_free) s += " x " + std::to_string(in.times.size()) + " times";
  s += ", " + std::to_string(r.evaluations) + " evaluations";
  return s;
}

InequalityReport assemble(const std::string& id, const RegistryInputs& in, const CDParams& p,
                          LevelReport main, std::optional<LevelReport> coarse) {
  InequalityReport r;
  r.id = id;
  r.params = p;
  r.times = traits_of(id).time_free ? std::vector<double>{} : in.times;
  r.sample = sample_of(id, in, main);
  r.main = std::move(main);
  r.half_resolution = std::move(coarse);
  r.constants = constants_of(id, p, in);
  r.notes = notes_of(id, p, in);
  r.pass = r.main.pass && (!r.half_resolution || r.half_resolution->pass);
  return r;
}

json evaluation_to_json(const Evaluation& e) {
  json j = {{"function", e.function},
            {"t", e.t},
            {"lhs", json_number(e.lhs)},
            {"rhs", json_number(e.rhs)},
            {"margin", json_number(e.margin)},
            {"tolerance", e.tolerance}};
  if (e.node) {
    j["node"] = *e.node;
    j["x"] = e.x;
  }
  if (e.node_y) {
    j["node_y"] = *e.node_y;
    j["y"] = e.y;
  }
  return j;
}

json level_to_json(const LevelReport& l) {
  return {{"h", l.h},
          {"nodes", l.nodes},
          {"evaluations", l.evaluations},
          {"min_margin", json_number(l.min_margin)},
          {"tolerance", l.tolerance},
          {"worst", evaluation_to_json(l.worst)},
          {"verdict", l.pass ? "pass" : "fail"},
          {"notes", l.notes}};
}

}  // namespace

json report_to_json(const InequalityReport& r) {
  json constants = json::array();
  for (const auto& c : r.constants) {
    json e = {{"expression", c.expression}, {"value", json_number(c.value)}};
    if (c.t) e["t"] = *c.t;
    constants.push_back(e);
  }
  json j = {{"id", r.id},
            {"params", params_to_json(r.params)},
            {"times", r.times},
            {"sample", r.sample},
            {"min_margin", json_number(r.main.min_margin)},
            {"tolerance", r.main.tolerance},
            {"worst", evaluation_to_json(r.main.worst)},
            {"grid", level_to_json(r.main)},
            {"constants", constants},
            {"notes", r.notes},
            {"verdict", r.pass ? "pass" : "fail"}};
  j["half_resolution"] = r.half_resolution ? level_to_json(*r.half_resolution) : json(nullptr);
  return j;
}

HeatVerifier::HeatVerifier(const ModelDescriptor& model, const GridSpec& spec, const CDParams& params,
                           VerifyOptions opt)
    : model_(model), params_(params), opt_(opt) {
  opt_.semigroup.jobs = opt_.jobs;
  fine_ = std::make_unique<Level>(discretize(model, spec), opt_.semigroup);
}

HeatVerifier::~HeatVerifier() = default;

const GridModel& HeatVerifier::grid() const { return fine_->g; }
const Semigroup& HeatVerifier::semigroup() const { return fine_->P; }

HeatVerifier::Level& HeatVerifier::coarse() {
  if (!coarse_) {
    coarse_ = std::make_unique<Level>(discretize(model_, fine_->g.spec.with_h(2 * fine_->g.h())),
                                      opt_.semigroup);
  }
  return *coarse_;
}

InequalityReport HeatVerifier::verify(const std::string& id, const RegistryInputs& in) {
  check_preconditions(id, fine_->g, in, params_);
  LevelReport main = run_level(*fine_, id, in, params_);
  std::optional<LevelReport> half;
  if (opt_.half_resolution) half = run_level(coarse(), id, in, params_);
  return assemble(id, in, params_, std::move(main), std::move(half));
}

std::vector<InequalityReport> HeatVerifier::verify_all(const std::vector<std::string>& ids,
                                                       const RegistryInputs& in) {
  for (const auto& id : ids) check_preconditions(id, fine_->g, in, params_);
  // one block solve per time covers every id
  std::vector<std::pair<std::string, std::string>> cols;
  for (const auto& id : ids) {
    if (traits_of(id).time_free) continue;
    for (const auto& f : in.functions) {
      for (const auto& k : derived_kinds(id, in)) cols.emplace_back(f, k);
    }
  }
  fine_->prefetch(cols, in.times);
  if (opt_.half_resolution) coarse().prefetch(cols, in.times);
  std::vector<InequalityReport> out;
  for (const auto& id : ids) out.push_back(verify(id, in));
  return out;
}

InequalityReport verify_inequality(const GridModel& g, const std::string& id, const RegistryInputs& in,
                                   const CDParams& params, const SemigroupOptions& opt) {
  check_preconditions(id, g, in, params);
  Level L(g, opt);
  return assemble(id, in, params, run_level(L, id, in, params), std::nullopt);
}

}  // namespace cdgamma
