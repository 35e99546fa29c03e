#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "cdgamma/poly.hpp"

namespace cdgamma {

// mt19937_64 is fully specified by the standard; the distributions below are
// hand-rolled so that draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}

  std::uint64_t next() { return g_(); }

  double uniform() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do r = g_();
    while (r >= limit);
    return r % n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  // Independent stream for sub-task i.
  Rng split(std::uint64_t i) const {
    std::seed_seq seq{static_cast<std::uint32_t>(seed_hash_ & 0xffffffffu),
                      static_cast<std::uint32_t>(seed_hash_ >> 32),
                      static_cast<std::uint32_t>(i & 0xffffffffu),
                      static_cast<std::uint32_t>(i >> 32)};
    std::uint64_t s = 0;
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    s = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    return Rng(s);
  }

 private:
  std::mt19937_64 g_;
  std::uint64_t seed_hash_ = g_();
  double spare_ = 0;
  bool has_spare_ = false;
};

// Rational coefficients p/q with q in 1..4 and |p/q| <= 3; monomials of total
// degree <= max_degree; between 1 and max_terms terms before cancellation.
inline PolyExpr random_polynomial(Rng& rng, std::size_t arity, int max_degree, int max_terms) {
  PolyExpr p(arity);
  const int nterms = 1 + static_cast<int>(rng.below(max_terms));
  for (int t = 0; t < nterms; ++t) {
    Monomial m;
    int deg = static_cast<int>(rng.below(max_degree + 1));
    for (int k = 0; k < deg; ++k) ++m.e[rng.below(arity)];
    const long q = 1 + static_cast<long>(rng.below(4));
    const long num = static_cast<long>(rng.below(6 * q + 1)) - 3 * q;
    Rational c(num, q);
    c.canonicalize();
    p += PolyExpr::term(arity, m, c);
  }
  return p;
}

}  // namespace cdgamma
