#include "cdgamma/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cdgamma {

std::string to_string(Boundary b) {
  switch (b) {
    case Boundary::kZeroFlux:
      return "zero-flux";
    case Boundary::kPeriodic:
      return "periodic";
    case Boundary::kTruncatedGaussian:
      return "truncated-gaussian";
  }
  return "?";
}

Boundary boundary_from_string(const std::string& s) {
  if (s == "zero-flux") return Boundary::kZeroFlux;
  if (s == "periodic") return Boundary::kPeriodic;
  if (s == "truncated-gaussian") return Boundary::kTruncatedGaussian;
  throw std::invalid_argument("unknown boundary '" + s +
                              "' (expected zero-flux, periodic or truncated-gaussian)");
}

GridSpec GridSpec::with_h(double new_h) const {
  GridSpec g = *this;
  g.h = new_h;
  return g;
}

nlohmann::json grid_spec_to_json(const GridSpec& g) {
  nlohmann::json axes = nlohmann::json::array();
  for (const auto& a : g.axes) axes.push_back({{"lo", a.lo}, {"hi", a.hi}});
  return {{"axes", axes}, {"h", g.h}, {"boundary", to_string(g.boundary)}};
}

GridSpec grid_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("grid: expected an object");
  for (const auto& [k, v] : j.items()) {
    if (k != "axes" && k != "h" && k != "boundary") {
      throw std::invalid_argument("grid: unknown key '" + k + "'");
    }
  }
  GridSpec g;
  if (!j.contains("axes") || !j["axes"].is_array() || j["axes"].empty()) {
    throw std::invalid_argument("grid: 'axes' must be a nonempty array");
  }
  for (const auto& a : j["axes"]) {
    for (const auto& [k, v] : a.items()) {
      if (k != "lo" && k != "hi") throw std::invalid_argument("grid axis: unknown key '" + k + "'");
    }
    if (!a.contains("lo") || !a.contains("hi") || !a["lo"].is_number() || !a["hi"].is_number()) {
      throw std::invalid_argument("grid axis: need numeric 'lo' and 'hi'");
    }
    g.axes.push_back({a["lo"].get<double>(), a["hi"].get<double>()});
  }
  if (!j.contains("h") || !j["h"].is_number()) throw std::invalid_argument("grid: need numeric 'h'");
  g.h = j["h"].get<double>();
  if (j.contains("boundary")) {
    if (!j["boundary"].is_string()) throw std::invalid_argument("grid: 'boundary' must be a string");
    g.boundary = boundary_from_string(j["boundary"].get<std::string>());
  }
  return g;
}

std::vector<std::size_t> GridModel::multi_index(std::size_t n) const {
  std::vector<std::size_t> idx(dim());
  for (std::size_t k = 0; k < dim(); ++k) {
    idx[k] = n / stride[k];
    n %= stride[k];
  }
  return idx;
}

std::size_t GridModel::node(std::span<const std::size_t> idx) const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < dim(); ++k) n += idx[k] * stride[k];
  return n;
}

std::vector<double> GridModel::point(std::size_t n) const {
  std::vector<double> x(dim());
  for (std::size_t k = 0; k < dim(); ++k) {
    x[k] = axes[k][n / stride[k]];
    n %= stride[k];
  }
  return x;
}

std::size_t GridModel::nearest(std::span<const double> x) const {
  if (x.size() != dim()) throw std::invalid_argument("nearest: point dimension");
  std::vector<std::size_t> idx(dim());
  for (std::size_t k = 0; k < dim(); ++k) {
    const auto& a = axes[k];
    auto it = std::lower_bound(a.begin(), a.end(), x[k]);
    std::size_t i = static_cast<std::size_t>(it - a.begin());
    if (i == a.size() || (i > 0 && x[k] - a[i - 1] <= a[i] - x[k])) --i;
    idx[k] = i;
  }
  return node(idx);
}

std::vector<std::size_t> GridModel::interior_nodes(double fraction) const {
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < size(); ++n) {
    const auto x = point(n);
    bool inside = true;
    for (std::size_t k = 0; k < dim() && inside; ++k) {
      const double c = 0.5 * (spec.axes[k].lo + spec.axes[k].hi);
      const double half = 0.5 * (spec.axes[k].hi - spec.axes[k].lo);
      inside = std::abs(x[k] - c) <= fraction * half + 1e-12 * (1 + half);
    }
    if (inside) out.push_back(n);
  }
  return out;
}

Eigen::VectorXd GridModel::sample(const Expr& f) const {
  Eigen::VectorXd v(size());
  for (std::size_t n = 0; n < size(); ++n) v[n] = f.eval(point(n));
  return v;
}

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

std::vector<double> axis_nodes(const AxisRange& a, double h, bool periodic, std::size_t k) {
  if (!(a.hi > a.lo)) throw std::invalid_argument("grid: axis " + std::to_string(k) + " is empty");
  const double cells = (a.hi - a.lo) / h;
  const double rc = std::round(cells);
  if (std::abs(cells - rc) > 1e-9 * std::max(1.0, cells)) {
    throw std::invalid_argument("grid: axis " + std::to_string(k) + " length is not a multiple of h");
  }
  const std::size_t count = static_cast<std::size_t>(rc) + (periodic ? 0 : 1);
  std::vector<double> nodes(count);
  for (std::size_t i = 0; i < count; ++i) nodes[i] = a.lo + h * static_cast<double>(i);
  return nodes;
}

void set_strides(GridModel& g) {
  g.stride.assign(g.dim(), 1);
  for (std::size_t k = g.dim(); k-- > 1;) g.stride[k - 1] = g.stride[k] * g.axes[k].size();
}

std::size_t total_nodes(const GridModel& g) {
  std::size_t n = 1;
  for (const auto& a : g.axes) {
    if (a.size() < 8) throw std::invalid_argument("grid: fewer than 8 nodes on an axis");
    n *= a.size();
  }
  return n;
}

// Sparse matrix from per-row off-diagonal rates; the diagonal is minus the
// sum of the row, accumulated in the same order so rows sum to exactly zero.
SparseRM generator_from_rates(std::size_t N, const std::vector<std::vector<std::pair<std::size_t, double>>>& rates) {
  Triplets t;
  for (std::size_t i = 0; i < N; ++i) {
    double s = 0;
    for (const auto& [j, r] : rates[i]) {
      t.emplace_back(i, j, r);
      s += r;
    }
    t.emplace_back(i, i, -s);
  }
  SparseRM G(N, N);
  G.setFromTriplets(t.begin(), t.end());
  G.makeCompressed();
  return G;
}

// Difference along axis k: central, one-sided at edges, wrapped when periodic.
void add_axis_difference(const GridModel& g, std::size_t n, std::size_t k, double coef,
                         bool periodic, Triplets& t) {
  const auto idx = g.multi_index(n);
  const std::size_t m = g.axes[k].size();
  const double s = g.spacing[k];
  auto shifted = [&](std::size_t i) {
    auto j = idx;
    j[k] = i;
    return g.node(j);
  };
  if (periodic) {
    t.emplace_back(n, shifted((idx[k] + 1) % m), coef / (2 * s));
    t.emplace_back(n, shifted((idx[k] + m - 1) % m), -coef / (2 * s));
  } else if (idx[k] == 0) {
    t.emplace_back(n, shifted(1), coef / s);
    t.emplace_back(n, n, -coef / s);
  } else if (idx[k] + 1 == m) {
    t.emplace_back(n, n, coef / s);
    t.emplace_back(n, shifted(m - 2), -coef / s);
  } else {
    t.emplace_back(n, shifted(idx[k] + 1), coef / (2 * s));
    t.emplace_back(n, shifted(idx[k] - 1), -coef / (2 * s));
  }
}

SparseRM field_difference(const GridModel& g, const VectorField& Z, bool periodic) {
  Triplets t;
  for (std::size_t n = 0; n < g.size(); ++n) {
    const auto x = g.point(n);
    for (std::size_t k = 0; k < g.dim(); ++k) {
      if (Z.coef[k].is_zero()) continue;
      const double c = Z.coef[k].eval(x);
      if (c != 0) add_axis_difference(g, n, k, c, periodic, t);
    }
  }
  SparseRM D(g.size(), g.size());
  D.setFromTriplets(t.begin(), t.end());
  D.makeCompressed();
  return D;
}

void discretize_weighted(const ModelDescriptor& model, const GridSpec& spec, GridModel& g) {
  const auto& op = model.op;
  const bool periodic = spec.boundary == Boundary::kPeriodic;
  if (periodic && !op.potential().is_constant()) {
    throw std::invalid_argument("grid: periodic boundary needs a constant potential");
  }
  if (spec.boundary == Boundary::kTruncatedGaussian && !model.finite_measure) {
    throw std::invalid_argument("grid: truncated-gaussian boundary needs a finite measure");
  }
  for (std::size_t k = 0; k < g.dim(); ++k) {
    g.axes[k] = axis_nodes(spec.axes[k], spec.h, periodic, k);
    g.spacing[k] = spec.h;
  }
  set_strides(g);
  const std::size_t N = total_nodes(g);
  const double h2 = spec.h * spec.h;
  std::vector<double> V(N);
  for (std::size_t n = 0; n < N; ++n) V[n] = op.potential().eval(g.point(n));
  const double vmin = *std::min_element(V.begin(), V.end());
  double cell = 1;
  for (double s : g.spacing) cell *= s;
  g.mu.resize(N);
  for (std::size_t n = 0; n < N; ++n) g.mu[n] = std::exp(vmin - V[n]) * cell;
  g.probability = model.finite_measure || periodic;
  if (g.probability) g.mu /= g.mu.sum();

  std::vector<std::vector<std::pair<std::size_t, double>>> rates(N);
  g.D.assign(g.dim(), SparseRM());
  for (std::size_t n = 0; n < N; ++n) {
    const auto idx = g.multi_index(n);
    const auto x = g.point(n);
    for (std::size_t k = 0; k < g.dim(); ++k) {
      const std::size_t m = g.axes[k].size();
      for (int dir : {-1, 1}) {
        std::size_t i;
        if (dir < 0) {
          if (idx[k] == 0 && !periodic) continue;
          i = (idx[k] + m - 1) % m;
        } else {
          if (idx[k] + 1 == m && !periodic) continue;
          i = (idx[k] + 1) % m;
        }
        auto j = idx;
        j[k] = i;
        double rate = 1.0 / h2;
        if (!periodic) {
          auto mid = x;
          mid[k] += 0.5 * dir * spec.h;
          rate = std::exp(V[n] - op.potential().eval(mid)) / h2;
        }
        rates[n].emplace_back(g.node(j), rate);
      }
    }
  }
  g.G = generator_from_rates(N, rates);
  for (std::size_t k = 0; k < g.dim(); ++k) {
    g.D[k] = field_difference(g, coordinate_field(g.dim(), k), periodic);
  }
  for (const auto& Z : op.vertical()) g.DZ.push_back(field_difference(g, Z, periodic));
}

Rational rational_gcd(const Rational& a, const Rational& b) {
  if (a == 0) return abs(b);
  if (b == 0) return abs(a);
  mpz_class num = gcd(a.get_num() * b.get_den(), b.get_num() * a.get_den());
  Rational r(num, a.get_den() * b.get_den());
  r.canonicalize();
  return abs(r);
}

void discretize_flows(const ModelDescriptor& model, const GridSpec& spec, GridModel& g) {
  const auto& op = model.op;
  if (spec.boundary != Boundary::kZeroFlux) {
    throw std::invalid_argument("grid: sum-of-squares models support zero-flux boxes only");
  }
  const std::size_t n = g.dim();
  const auto& H = op.horizontal();
  // Weight-one coordinates carry constant integer coefficients in every field.
  std::vector<bool> w1(n, true);
  for (std::size_t k = 0; k < n; ++k) {
    for (const auto& X : H) {
      if (!X.coef[k].is_constant()) w1[k] = false;
    }
  }
  // a[i][k] constant coefficient, c[i][k][j] linear coefficient in weight-one x_j
  std::vector<std::vector<Rational>> a(H.size(), std::vector<Rational>(n, 0));
  std::vector<std::vector<std::vector<Rational>>> c(
      H.size(), std::vector<std::vector<Rational>>(n, std::vector<Rational>(n, 0)));
  for (std::size_t i = 0; i < H.size(); ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const PolyExpr& p = H[i].coef[k];
      if (w1[k]) {
        a[i][k] = p.coeff(Monomial{});
        if (a[i][k].get_den() != 1) {
          throw std::invalid_argument("grid: lattice flows need integer horizontal coefficients");
        }
        continue;
      }
      for (const auto& [mono, coef] : p.terms()) {
        std::size_t j = n;
        if (mono.degree() != 1) {
          throw std::invalid_argument("grid: lattice flows need coefficients linear in the first layer");
        }
        for (std::size_t v = 0; v < n; ++v) {
          if (mono.e[v]) j = v;
        }
        if (!w1[j]) throw std::invalid_argument("grid: lattice flows need a step-2 frame");
        c[i][k][j] = coef;
      }
    }
  }
  std::vector<Rational> q(n, 0);
  std::vector<std::vector<Rational>> second(H.size(), std::vector<Rational>(n, 0));
  for (std::size_t k = 0; k < n; ++k) {
    if (w1[k]) continue;
    for (std::size_t i = 0; i < H.size(); ++i) {
      Rational s2 = 0;
      for (std::size_t j = 0; j < n; ++j) {
        q[k] = rational_gcd(q[k], c[i][k][j]);
        s2 += a[i][j] * c[i][k][j];
      }
      second[i][k] = s2 / 2;
      q[k] = rational_gcd(q[k], second[i][k]);
    }
    if (q[k] == 0) throw std::invalid_argument("grid: coordinate " + g.coords[k] + " is never reached");
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double s = w1[k] ? spec.h : spec.h * spec.h * q[k].get_d();
    const auto& r = spec.axes[k];
    if (!(r.lo <= 0 && 0 <= r.hi)) throw std::invalid_argument("grid: lattice boxes must contain the origin");
    const long lo = static_cast<long>(std::ceil(r.lo / s - 1e-9));
    const long hi = static_cast<long>(std::floor(r.hi / s + 1e-9));
    g.axes[k].clear();
    for (long m = lo; m <= hi; ++m) g.axes[k].push_back(static_cast<double>(m) * s);
    g.spacing[k] = s;
  }
  set_strides(g);
  const std::size_t N = total_nodes(g);
  std::vector<long> origin(n);
  for (std::size_t k = 0; k < n; ++k) {
    origin[k] = static_cast<long>(std::llround(-g.axes[k][0] / g.spacing[k]));
  }
  double cell = 1;
  for (double s : g.spacing) cell *= s;
  g.mu = Eigen::VectorXd::Constant(N, cell);
  g.probability = false;

  const double rate = 1.0 / (spec.h * spec.h);
  std::vector<std::vector<std::pair<std::size_t, double>>> rates(N);
  std::vector<Triplets> dtrip(H.size());
  Rational inc;
  for (std::size_t node = 0; node < N; ++node) {
    const auto idx = g.multi_index(node);
    std::vector<long> m(n);
    for (std::size_t k = 0; k < n; ++k) m[k] = static_cast<long>(idx[k]) - origin[k];
    for (std::size_t i = 0; i < H.size(); ++i) {
      std::size_t target[2];
      bool inside[2];
      for (int d = 0; d < 2; ++d) {
        const long sigma = d == 0 ? 1 : -1;
        std::vector<std::size_t> t(n);
        inside[d] = true;
        for (std::size_t k = 0; k < n; ++k) {
          long step;
          if (w1[k]) {
            step = sigma * a[i][k].get_num().get_si();
          } else {
            // s X(x_k) + s^2/2 X(X(x_k)) in units of h^2 q_k
            inc = second[i][k];
            for (std::size_t j = 0; j < n; ++j) {
              if (c[i][k][j] != 0) inc += sigma * m[j] * c[i][k][j];
            }
            inc /= q[k];
            if (inc.get_den() != 1) throw std::logic_error("grid: flow target off the lattice");
            step = inc.get_num().get_si();
          }
          const long pos = static_cast<long>(idx[k]) + step;
          if (pos < 0 || pos >= static_cast<long>(g.axes[k].size())) {
            inside[d] = false;
            break;
          }
          t[k] = static_cast<std::size_t>(pos);
        }
        if (inside[d]) {
          target[d] = g.node(t);
          if (target[d] != node) rates[node].emplace_back(target[d], rate);
        }
      }
      // X_i f by central flow differences, one-sided at the box edge
      const double h = spec.h;
      if (inside[0] && inside[1]) {
        dtrip[i].emplace_back(node, target[0], 0.5 / h);
        dtrip[i].emplace_back(node, target[1], -0.5 / h);
      } else if (inside[0]) {
        dtrip[i].emplace_back(node, target[0], 1 / h);
        dtrip[i].emplace_back(node, node, -1 / h);
      } else if (inside[1]) {
        dtrip[i].emplace_back(node, node, 1 / h);
        dtrip[i].emplace_back(node, target[1], -1 / h);
      }
    }
  }
  g.G = generator_from_rates(N, rates);
  for (auto& t : dtrip) {
    SparseRM D(N, N);
    D.setFromTriplets(t.begin(), t.end());
    D.makeCompressed();
    g.D.push_back(std::move(D));
  }
  for (const auto& Z : op.vertical()) g.DZ.push_back(field_difference(g, Z, false));
}

}  // namespace

GridModel discretize(const ModelDescriptor& model, const GridSpec& spec) {
  if (!(spec.h > 0)) throw std::invalid_argument("grid: h must be positive");
  if (spec.axes.size() != model.op.dim()) {
    throw std::invalid_argument("grid: " + std::to_string(spec.axes.size()) + " axes for a " +
                                std::to_string(model.op.dim()) + "-dimensional model");
  }
  GridModel g;
  g.model_name = model.name;
  g.form = model.op.form();
  g.spec = spec;
  g.coords = model.op.coords();
  g.axes.resize(model.op.dim());
  g.spacing.resize(model.op.dim());
  if (g.form == OperatorForm::kWeightedLaplacian) {
    discretize_weighted(model, spec, g);
  } else {
    discretize_flows(model, spec, g);
  }
  check_grid_invariants(g);
  return g;
}

void check_grid_invariants(const GridModel& g) {
  const std::size_t N = g.size();
  for (std::size_t i = 0; i < N; ++i) {
    double off = 0, diag = 0;
    for (SparseRM::InnerIterator it(g.G, i); it; ++it) {
      if (static_cast<std::size_t>(it.col()) == i) {
        diag = it.value();
      } else {
        if (it.value() < 0) {
          std::ostringstream m;
          m << "grid: negative rate G(" << i << "," << it.col() << ") = " << it.value();
          throw GridInvariantError(m.str());
        }
        off += it.value();
      }
    }
    if (std::abs(off + diag) > 1e-12 * std::max(1.0, std::abs(diag))) {
      std::ostringstream m;
      m << "grid: row " << i << " sums to " << off + diag;
      throw GridInvariantError(m.str());
    }
  }
  for (std::size_t i = 0; i < N; ++i) {
    for (SparseRM::InnerIterator it(g.G, i); it; ++it) {
      const auto j = static_cast<std::size_t>(it.col());
      if (j <= i) continue;
      const double a = g.mu[i] * it.value(), b = g.mu[j] * g.G.coeff(j, i);
      if (std::abs(a - b) > 1e-12 * std::max(std::abs(a), std::abs(b))) {
        std::ostringstream m;
        m << "grid: detailed balance fails between nodes " << i << " and " << j << " (" << a
          << " vs " << b << ")";
        throw GridInvariantError(m.str());
      }
    }
  }
}

Eigen::VectorXd grid_gamma(const GridModel& g, const Eigen::VectorXd& f) {
  return grid_gamma(g, f, f);
}

Eigen::VectorXd grid_gamma(const GridModel& g, const Eigen::VectorXd& f, const Eigen::VectorXd& h) {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = 0;
    for (SparseRM::InnerIterator it(g.G, i); it; ++it) {
      const auto j = it.col();
      if (static_cast<std::size_t>(j) == i) continue;
      s += it.value() * (f[j] - f[i]) * (h[j] - h[i]);
    }
    r[i] = 0.5 * s;
  }
  return r;
}

Eigen::VectorXd grid_gamma_z(const GridModel& g, const Eigen::VectorXd& f) {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(g.size());
  for (const auto& D : g.DZ) r += (D * f).cwiseAbs2();
  return r;
}

double integrate(const GridModel& g, const Eigen::VectorXd& f) { return g.mu.dot(f); }

}  // namespace cdgamma
