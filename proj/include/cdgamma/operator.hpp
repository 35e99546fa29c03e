#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cdgamma/poly.hpp"

namespace cdgamma {

struct VectorField {
  std::vector<PolyExpr> coef;  // one per coordinate

  std::size_t dim() const { return coef.size(); }
  PolyExpr apply(const PolyExpr& f) const;
  PolyExpr divergence() const;
  bool operator==(const VectorField&) const = default;
};

VectorField lie_bracket(const VectorField& a, const VectorField& b);
VectorField coordinate_field(std::size_t dim, std::size_t i);

enum class OperatorForm {
  kSumOfSquares,      // L = sum X_i^2, div X_i = 0, Lebesgue measure
  kWeightedLaplacian  // L = Laplacian - grad V . grad, measure e^{-V} dx
};

class DiffusionOperator {
 public:
  // Form (a). Throws if some X_i is not divergence free.
  static DiffusionOperator sum_of_squares(std::vector<std::string> coords,
                                          std::vector<VectorField> horizontal,
                                          std::vector<VectorField> vertical);
  // Form (b) with coordinate frame.
  static DiffusionOperator weighted_laplacian(std::vector<std::string> coords,
                                              PolyExpr potential,
                                              std::vector<VectorField> vertical = {});

  std::size_t dim() const { return coords_.size(); }
  const std::vector<std::string>& coords() const { return coords_; }
  OperatorForm form() const { return form_; }
  const std::vector<VectorField>& horizontal() const { return horizontal_; }
  const std::vector<VectorField>& vertical() const { return vertical_; }
  const PolyExpr& potential() const { return potential_; }
  // First-order part of L; zero in form (a), -grad V in form (b).
  const VectorField& drift() const { return drift_; }

  PolyExpr apply(const PolyExpr& f) const;
  PolyExpr parse(std::string_view text) const { return parse_poly(text, coords_); }
  std::string print(const PolyExpr& p) const { return to_string(p, coords_); }

 private:
  void check_symmetric() const;

  std::vector<std::string> coords_;
  OperatorForm form_ = OperatorForm::kSumOfSquares;
  std::vector<VectorField> horizontal_, vertical_;
  PolyExpr potential_;
  VectorField drift_;
};

// Carre du champ through its definition 1/2 (L(fg) - f Lg - g Lf).
PolyExpr gamma(const DiffusionOperator& op, const PolyExpr& f, const PolyExpr& g);
// Same form through the frame, sum (X_i f)(X_i g).
PolyExpr gamma_frame(const DiffusionOperator& op, const PolyExpr& f, const PolyExpr& g);
PolyExpr gamma_z(const DiffusionOperator& op, const PolyExpr& f, const PolyExpr& g);

PolyExpr gamma2(const DiffusionOperator& op, const PolyExpr& f);
PolyExpr gamma2_z(const DiffusionOperator& op, const PolyExpr& f);
// Independent expansion: 1/2 L(sum (X_i f)^2) - sum (X_i f)(X_i Lf).
PolyExpr gamma2_direct(const DiffusionOperator& op, const PolyExpr& f);

// Gamma(f, Gamma^Z(f)) - Gamma^Z(f, Gamma(f)); zero iff the commutation holds for f.
PolyExpr check_h2(const DiffusionOperator& op, const PolyExpr& f);

// g Lf + Gamma(f,g) - div(sum_i g (X_i f) X_i). Vanishes identically for
// divergence-free frames, which makes L symmetric on compactly supported pairs.
PolyExpr symmetry_residual(const DiffusionOperator& op, const PolyExpr& f,
                           const PolyExpr& g);

}  // namespace cdgamma
