#include <cmath>
#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "json.hpp"

#include "cdgamma/certify.hpp"
#include "cdgamma/random.hpp"
#include "test_util.hpp"

using namespace cdgamma;

namespace {

ModelDescriptor random_carnot(Rng& rng, int m, int k) {
  std::vector<std::vector<std::vector<Rational>>> c(
      k, std::vector<std::vector<Rational>>(m, std::vector<Rational>(m, 0)));
  for (int l = 0; l < k; ++l) {
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {
        Rational v(static_cast<long>(rng.below(7)) - 3, 1 + static_cast<long>(rng.below(2)));
        v.canonicalize();
        c[l][i][j] = v;
        c[l][j][i] = -v;
      }
    }
  }
  return carnot_step2(m, k, c);
}

std::vector<Rational> random_point(Rng& rng, std::size_t n) {
  std::vector<Rational> x(n);
  for (auto& c : x) {
    c = Rational(static_cast<long>(rng.below(9)) - 4, 1 + static_cast<long>(rng.below(3)));
    c.canonicalize();
  }
  return x;
}

std::vector<double> to_double(const std::vector<Rational>& x) {
  std::vector<double> r;
  for (const auto& c : x) r.push_back(c.get_d());
  return r;
}

CertifyConfig quick(std::uint64_t seed = 7) {
  CertifyConfig c;
  c.base_points = 24;
  c.budget = 20000;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("certify") {

TEST_CASE("jet forms agree exactly with the symbolic operators") {
  Rng rng(61);
  std::vector<ModelDescriptor> models = {heisenberg(1), heisenberg(2), grushin(1),
                                         ornstein_uhlenbeck(2), euclidean(2),
                                         random_carnot(rng, 3, 2)};
  for (const auto& m : models) {
    JetFormPlan plan(m.op);
    for (int t = 0; t < 6; ++t) {
      const PolyExpr f = random_polynomial(rng, m.op.dim(), 4, 6);
      const auto x = random_point(rng, m.op.dim());
      const ExactFormBundle q = plan.at_exact(x);
      const auto v = jet_of_exact(f, x);
      CHECK(q.quad(q.gamma, v) == gamma(m.op, f, f).eval(x));
      CHECK(q.quad(q.gamma_z, v) == gamma_z(m.op, f, f).eval(x));
      CHECK(q.quad(q.gamma2, v) == gamma2(m.op, f).eval(x));
      CHECK(q.quad(q.gamma2_z, v) == gamma2_z(m.op, f).eval(x));
      Rational lf = 0;
      for (std::size_t i = 0; i < v.size(); ++i) lf += q.ell[i] * v[i];
      CHECK(lf == m.op.apply(f).eval(x));
      for (std::size_t i = 0; i < q.size; ++i) {
        for (std::size_t j = 0; j < q.size; ++j) {
          CHECK(q.gamma2[i * q.size + j] == q.gamma2[j * q.size + i]);
        }
      }
    }
  }
}

TEST_CASE("double jet forms match the exact ones") {
  auto h = heisenberg(2);
  JetFormPlan plan(h.op);
  Rng rng(67);
  const auto x = random_point(rng, 5);
  const ExactFormBundle e = plan.at_exact(x);
  const QuadraticFormBundle d = plan.at(to_double(x));
  for (std::size_t i = 0; i < e.size; ++i) {
    for (std::size_t j = 0; j < e.size; ++j) {
      CHECK(d.gamma2(i, j) == doctest::Approx(e.gamma2[i * e.size + j].get_d()));
      CHECK(d.gamma2_z(i, j) == doctest::Approx(e.gamma2_z[i * e.size + j].get_d()));
    }
  }
}

TEST_CASE("margin equals the nu-minimized symbolic inequality") {
  auto h = heisenberg(1);
  const CDParams p(0.2, 0.3, 1.5, 2);
  Rng rng(71);
  for (int t = 0; t < 20; ++t) {
    const PolyExpr f = random_polynomial(rng, 3, 3, 5);
    const auto xr = random_point(rng, 3);
    const auto x = to_double(xr);
    const double a = gamma2(h.op, f).eval(x) - p.rho1 * gamma(h.op, f, f).eval(x) -
                     p.rho2 * gamma_z(h.op, f, f).eval(x) -
                     std::pow(h.op.apply(f).eval(x), 2) / p.d;
    const double b = gamma2_z(h.op, f).eval(x), c = gamma(h.op, f, f).eval(x);
    const double expect = a + 2 * std::sqrt(p.kappa * b * c);
    const auto q = jet_forms(h, x);
    CHECK(cd_margin_at_jet(q, jet_of(f, x), p) ==
          doctest::Approx(expect).epsilon(1e-10).scale(1.0 + std::abs(expect)));
  }
}

TEST_CASE("nu elimination matches a dense nu sweep") {
  auto g = grushin(1);
  const CDParams p(0, 0.4, 1.3, 2);
  Rng rng(73);
  const auto nus = log_grid(1e-5, 1e5, 20001);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> x = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const auto q = jet_forms(g, x);
    Eigen::VectorXd v(q.ell.size());
    for (auto& c : v) c = rng.normal();
    const double closed = cd_margin_at_jet(q, v, p);
    double best = kInf;
    for (double nu : nus) best = std::min(best, cd_margin_at_nu(q, v, p, nu));
    CHECK(best >= closed - 1e-9 * (1 + std::abs(closed)));
    CHECK(best <= closed + 1e-6 * (1 + std::abs(closed)));
  }
}

TEST_CASE("margin is quadratic in the jet") {
  auto h = heisenberg(1);
  const CDParams p(-0.5, 0.5, 1, 2);
  Rng rng(79);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const auto q = jet_forms(h, x);
    Eigen::VectorXd v(q.ell.size());
    for (auto& c : v) c = rng.normal();
    const double lam = rng.uniform(0.1, 10);
    const double m1 = cd_margin_at_jet(q, v, p), m2 = cd_margin_at_jet(q, lam * v, p);
    CHECK(m2 == doctest::Approx(lam * lam * m1).epsilon(1e-9).scale(1 + std::abs(m2)));
  }
}

TEST_CASE("carre du champ forms are PSD everywhere") {
  Rng rng(83);
  std::vector<ModelDescriptor> models = {heisenberg(1), heisenberg(2), grushin(1), grushin(2),
                                         ornstein_uhlenbeck(1), random_carnot(rng, 3, 2)};
  for (const auto& m : models) {
    JetFormPlan plan(m.op);
    for (int t = 0; t < 25; ++t) {
      std::vector<double> x(m.op.dim());
      for (auto& c : x) c = rng.uniform(-3, 3);
      const auto q = plan.at(x);
      for (const auto* M : {&q.gamma, &q.gamma_z}) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*M);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10 * (1 + M->cwiseAbs().maxCoeff()));
      }
    }
  }
}

TEST_CASE("Euclidean line: CD(0, rho2, 0, 1) holds, d < 1 fails") {
  auto e = euclidean(1);
  CHECK(certify(e, CDParams(0, 1, 0, 1), quick()).status == CdStatus::kCertified);
  auto bad = certify(e, CDParams(0, 1, 0, 0.9), quick());
  CHECK(bad.status == CdStatus::kFalsified);
  CHECK(certify(e, CDParams(0.01, 1, 0, kInf), quick()).status == CdStatus::kFalsified);
}

TEST_CASE("OU satisfies CD(1, rho2, 0, inf) and nothing stronger") {
  auto ou = ornstein_uhlenbeck(1);
  CHECK(certify(ou, CDParams(1, 1, 0, kInf), quick()).status == CdStatus::kCertified);
  auto v = certify(ou, CDParams(1.01, 1, 0, kInf), quick());
  REQUIRE(v.status == CdStatus::kFalsified);
  // f = x at any point: Gamma_2 = Gamma = 1, margin -0.01 per unit gradient
  CHECK(v.witness->margin == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(certify(ou, CDParams(1, 1, 0, 50), quick()).status == CdStatus::kFalsified);
}

TEST_CASE("Heisenberg CD(0, 1/2, 1, 2) is certified and tight") {
  auto h = heisenberg(1);
  auto ok = certify(h, CDParams(0, 0.5, 1, 2), quick());
  CHECK(ok.status == CdStatus::kCertified);
  CHECK(ok.min_eigenvalue >= -1e-9);
  CHECK(ok.note.find("not exhausted") != std::string::npos);
  CHECK(certify(h, CDParams(0, 0.501, 1, 2), quick()).status == CdStatus::kFalsified);
  CHECK(certify(h, CDParams(0, 0.5, 0.999, 2), quick()).status == CdStatus::kFalsified);
  CHECK(certify(h, CDParams(0, 0.5, 1, 1.99), quick()).status == CdStatus::kFalsified);
}

TEST_CASE("Heisenberg CD(0.1, ...) is falsified with a reproducible witness") {
  auto h = heisenberg(1);
  const CDParams p(0.1, 0.5, 1, 2);
  auto v = certify(h, p, quick());
  REQUIRE(v.status == CdStatus::kFalsified);
  REQUIRE(v.witness.has_value());
  CHECK(v.witness->margin < -1e-9);
  CHECK(recompute_margin(h, p, *v.witness) == doctest::Approx(v.witness->margin));
  // f = x at the origin gives exactly -rho1 |grad|^2
  std::vector<double> o = {0, 0, 0};
  const auto q = jet_forms(h, o);
  CHECK(cd_margin_at_jet(q, jet_of(h.op.parse("x"), o), p) == doctest::Approx(-0.1));
}

TEST_CASE("certification is monotone in each parameter") {
  auto h = heisenberg(1);
  Rng rng(89);
  CertifyConfig c = search_predicate_config();
  for (int t = 0; t < 12; ++t) {
    CDParams p(rng.uniform(-0.3, 0.1), rng.uniform(0.1, 0.7), rng.uniform(0.5, 2),
               rng.uniform(1.5, 4));
    if (certify(h, p, c).status != CdStatus::kCertified) continue;
    CHECK(certify(h, CDParams(p.rho1 - 0.1, p.rho2, p.kappa, p.d), c).status ==
          CdStatus::kCertified);
    CHECK(certify(h, CDParams(p.rho1, p.rho2 * 0.9, p.kappa, p.d), c).status ==
          CdStatus::kCertified);
    CHECK(certify(h, CDParams(p.rho1, p.rho2, p.kappa + 0.5, p.d), c).status ==
          CdStatus::kCertified);
    CHECK(certify(h, CDParams(p.rho1, p.rho2, p.kappa, p.d * 2), c).status ==
          CdStatus::kCertified);
  }
}

TEST_CASE("verdicts do not depend on the worker count") {
  auto h = heisenberg(1);
  const CDParams p(0.05, 0.5, 1, 2);
  CertifyConfig a = quick(11), b = quick(11);
  b.jobs = 3;
  auto va = certify(h, p, a), vb = certify(h, p, b);
  CHECK(va.min_margin == vb.min_margin);
  CHECK(va.min_eigenvalue == vb.min_eigenvalue);
  CHECK(va.witness->jet == vb.witness->jet);
  CHECK(va.negative_jets == vb.negative_jets);
}

TEST_CASE("rho1 search on OU and Heisenberg") {
  SearchSpec s;
  s.rho2 = 1;
  s.kappa = 0;
  s.d = kInf;
  s.resolution = 1e-6;
  auto r = search_params(ornstein_uhlenbeck(1), s);
  CHECK(r.best.certified.rho1 == doctest::Approx(1).epsilon(1e-5));
  REQUIRE(r.best.falsified.has_value());
  CHECK(r.best.falsified->rho1 > r.best.certified.rho1);

  SearchSpec t;
  t.rho2 = 0.5;
  t.kappa = 1;
  t.d = 2;
  t.rho1_lo = -1;
  t.rho1_hi = 1;
  auto rh = search_params(heisenberg(1), t);
  CHECK(std::abs(rh.best.certified.rho1) <= 1e-5);

  SearchSpec u;
  u.rho1 = 0.5;
  CHECK_THROWS_AS(search_params(heisenberg(1), u), std::invalid_argument);
}

TEST_CASE("Grushin (rho2, kappa) search") {
  auto g = grushin(1);
  SearchSpec s;
  s.rho1 = 0;
  s.d = 2;
  auto r = search_params(g, s);
  CHECK(r.free == std::vector<std::string>{"rho2", "kappa"});
  // independent numpy oracle (eigenvalue sweep over x and nu): no feasible rho2
  // below kappa = 1, then rho2* = 1/2, 2 sqrt(2) - 2 and 1 at kappa = 1, 2, 4
  REQUIRE(r.pareto.size() == 3);
  CHECK(r.pareto[0].certified.kappa == 1.0);
  CHECK(r.pareto[0].certified.rho2 == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(r.pareto[1].certified.rho2 == doctest::Approx(2 * std::sqrt(2.0) - 2).epsilon(1e-5));
  CHECK(r.pareto[2].certified.rho2 == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(r.best.certified.kappa == 4.0);
  CHECK(r.best.certified.rho2 == doctest::Approx(1.0).epsilon(1e-5));
  REQUIRE(r.best.falsified.has_value());
  CHECK(r.best.falsified->rho2 > r.best.certified.rho2);

  nlohmann::json j;
  j["model"] = g.name;
  j["kappa_grid"] = s.kappa_grid;
  j["best"] = {{"kappa", r.best.certified.kappa},
               {"rho2", std::round(r.best.certified.rho2 * 1e6) / 1e6}};
  nlohmann::json front = nlohmann::json::array();
  for (const auto& p : r.pareto) {
    front.push_back({{"kappa", p.certified.kappa}, {"rho2", std::round(p.certified.rho2 * 1e6) / 1e6}});
  }
  j["pareto"] = front;
  const std::string path = source_path("tests/golden/grushin1_cd_search.json");
  const std::string text = j.dump(2) + "\n";
  if (std::getenv("CDGAMMA_REGEN_GOLDEN")) std::ofstream(path) << text;
  CHECK(read_file(path) == text);
}

}  // TEST_SUITE
