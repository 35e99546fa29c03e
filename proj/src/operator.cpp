#include "cdgamma/operator.hpp"

namespace cdgamma {

PolyExpr VectorField::apply(const PolyExpr& f) const {
  if (f.arity() != coef.size()) {
    throw ArityMismatch("VectorField::apply: function arity " + std::to_string(f.arity()) +
                        " vs field dimension " + std::to_string(coef.size()));
  }
  PolyExpr r(f.arity());
  for (std::size_t k = 0; k < coef.size(); ++k) {
    if (coef[k].is_zero()) continue;
    r += coef[k] * f.diff(k);
  }
  return r;
}

PolyExpr VectorField::divergence() const {
  PolyExpr r(coef.size());
  for (std::size_t k = 0; k < coef.size(); ++k) r += coef[k].diff(k);
  return r;
}

VectorField lie_bracket(const VectorField& a, const VectorField& b) {
  if (a.dim() != b.dim()) throw ArityMismatch("lie_bracket: dimension mismatch");
  VectorField r;
  for (std::size_t k = 0; k < a.dim(); ++k) r.coef.push_back(a.apply(b.coef[k]) - b.apply(a.coef[k]));
  return r;
}

VectorField coordinate_field(std::size_t dim, std::size_t i) {
  VectorField v;
  for (std::size_t k = 0; k < dim; ++k) v.coef.push_back(PolyExpr::constant(dim, k == i ? 1 : 0));
  return v;
}

namespace {

void check_fields(std::size_t dim, const std::vector<VectorField>& fields, const char* what) {
  for (const auto& v : fields) {
    if (v.dim() != dim) throw ArityMismatch(std::string(what) + " field has wrong dimension");
    for (const auto& c : v.coef) {
      if (c.arity() != dim) throw ArityMismatch(std::string(what) + " coefficient arity");
    }
  }
}

}  // namespace

DiffusionOperator DiffusionOperator::sum_of_squares(std::vector<std::string> coords,
                                                    std::vector<VectorField> horizontal,
                                                    std::vector<VectorField> vertical) {
  DiffusionOperator op;
  const std::size_t n = coords.size();
  if (horizontal.empty()) throw std::invalid_argument("sum_of_squares: empty horizontal frame");
  check_fields(n, horizontal, "horizontal");
  check_fields(n, vertical, "vertical");
  op.coords_ = std::move(coords);
  op.form_ = OperatorForm::kSumOfSquares;
  op.horizontal_ = std::move(horizontal);
  op.vertical_ = std::move(vertical);
  op.potential_ = PolyExpr(n);
  op.drift_.coef.assign(n, PolyExpr(n));
  for (std::size_t i = 0; i < op.horizontal_.size(); ++i) {
    if (!op.horizontal_[i].divergence().is_zero()) {
      throw std::invalid_argument("sum_of_squares: horizontal field " + std::to_string(i) +
                                  " is not divergence free");
    }
  }
  op.check_symmetric();
  return op;
}

DiffusionOperator DiffusionOperator::weighted_laplacian(std::vector<std::string> coords,
                                                        PolyExpr potential,
                                                        std::vector<VectorField> vertical) {
  DiffusionOperator op;
  const std::size_t n = coords.size();
  if (n == 0) throw std::invalid_argument("weighted_laplacian: no coordinates");
  if (potential.arity() != n) throw ArityMismatch("weighted_laplacian: potential arity");
  check_fields(n, vertical, "vertical");
  op.coords_ = std::move(coords);
  op.form_ = OperatorForm::kWeightedLaplacian;
  for (std::size_t i = 0; i < n; ++i) op.horizontal_.push_back(coordinate_field(n, i));
  op.vertical_ = std::move(vertical);
  op.potential_ = std::move(potential);
  for (std::size_t i = 0; i < n; ++i) op.drift_.coef.push_back(-op.potential_.diff(i));
  return op;
}

PolyExpr DiffusionOperator::apply(const PolyExpr& f) const {
  if (f.arity() != dim()) throw ArityMismatch("DiffusionOperator::apply: arity mismatch");
  PolyExpr r(dim());
  for (const auto& x : horizontal_) r += x.apply(x.apply(f));
  r += drift_.apply(f);
  return r;
}

void DiffusionOperator::check_symmetric() const {
  // Small fixed battery: coordinate monomials and one mixed product.
  const std::size_t n = dim();
  std::vector<PolyExpr> battery;
  for (std::size_t i = 0; i < n; ++i) {
    PolyExpr xi = PolyExpr::variable(n, i);
    battery.push_back(xi * xi + xi);
  }
  PolyExpr mix = PolyExpr::constant(n, 1);
  for (std::size_t i = 0; i < n; ++i) mix = mix * (PolyExpr::variable(n, i) + PolyExpr::constant(n, i + 1));
  if (mix.degree() <= 4) battery.push_back(mix);
  for (std::size_t a = 0; a < battery.size(); ++a) {
    for (std::size_t b = a; b < battery.size(); ++b) {
      if (!symmetry_residual(*this, battery[a], battery[b]).is_zero()) {
        throw std::invalid_argument("DiffusionOperator: symmetry identity fails");
      }
    }
  }
}

PolyExpr gamma(const DiffusionOperator& op, const PolyExpr& f, const PolyExpr& g) {
  PolyExpr r = op.apply(f * g) - f * op.apply(g) - g * op.apply(f);
  return r * Rational(1, 2);
}

PolyExpr gamma_frame(const DiffusionOperator& op, const PolyExpr& f, const PolyExpr& g) {
  if (f.arity() != op.dim() || g.arity() != op.dim()) throw ArityMismatch("gamma_frame: arity");
  PolyExpr r(op.dim());
  for (const auto& x : op.horizontal()) r += x.apply(f) * x.apply(g);
  return r;
}

PolyExpr gamma_z(const DiffusionOperator& op, const PolyExpr& f, const PolyExpr& g) {
  if (f.arity() != op.dim() || g.arity() != op.dim()) throw ArityMismatch("gamma_z: arity");
  PolyExpr r(op.dim());
  for (const auto& z : op.vertical()) r += z.apply(f) * z.apply(g);
  return r;
}

PolyExpr gamma2(const DiffusionOperator& op, const PolyExpr& f) {
  PolyExpr r = op.apply(gamma(op, f, f)) - Rational(2) * gamma(op, f, op.apply(f));
  return r * Rational(1, 2);
}

PolyExpr gamma2_z(const DiffusionOperator& op, const PolyExpr& f) {
  PolyExpr r = op.apply(gamma_z(op, f, f)) - Rational(2) * gamma_z(op, f, op.apply(f));
  return r * Rational(1, 2);
}

PolyExpr gamma2_direct(const DiffusionOperator& op, const PolyExpr& f) {
  const PolyExpr lf = op.apply(f);
  PolyExpr sq(op.dim()), cross(op.dim());
  for (const auto& x : op.horizontal()) {
    PolyExpr xf = x.apply(f);
    sq += xf * xf;
    cross += xf * x.apply(lf);
  }
  return op.apply(sq) * Rational(1, 2) - cross;
}

PolyExpr check_h2(const DiffusionOperator& op, const PolyExpr& f) {
  return gamma(op, f, gamma_z(op, f, f)) - gamma_z(op, f, gamma(op, f, f));
}

PolyExpr symmetry_residual(const DiffusionOperator& op, const PolyExpr& f, const PolyExpr& g) {
  PolyExpr r = g * op.apply(f) + gamma(op, f, g);
  for (const auto& x : op.horizontal()) {
    PolyExpr w = g * x.apply(f);
    VectorField flux;
    for (const auto& c : x.coef) flux.coef.push_back(w * c);
    r -= flux.divergence();
  }
  return r;
}

}  // namespace cdgamma
