#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdgamma/certify.hpp"
#include "cdgamma/geometry.hpp"
#include "cdgamma/operator.hpp"
#include "cdgamma/random.hpp"
#include "cdgamma/registry.hpp"
#include "cdgamma/semigroup.hpp"
#include "cdgamma/transport.hpp"

using namespace cdgamma;
using nlohmann::json;

namespace {

// Pinned tolerances and budgets.
constexpr int kPolysPerModel = 50;
constexpr int kMaxPolyDegree = 4;
constexpr long kCertifyJets = 1'000'000;
constexpr double kCertifyFloor = -1e-9;
constexpr double kWitnessCeiling = -1e-4;
constexpr double kRho1Tolerance = 1e-3;
constexpr double kGapLo = 0.98, kGapHi = 1.02;
constexpr double kCircleGapTolerance = 0.02;
constexpr double kKernelTolerance = 1e-3;
constexpr double kShiftSlackInH = 2;
constexpr std::size_t kRandomDensities = 20;
constexpr double kHwiEqualityTolerance = 0.02;
constexpr double kIsoRatio = 10;
constexpr std::size_t kRandomSets = 50;
constexpr double kHeisenbergH = 0.25;
constexpr std::uint64_t kSeed = 1;

struct Outcome {
  bool pass = true;
  std::string detail;
  json records = json::array();
};

struct Criterion {
  int number;
  std::string title;
  double budget_seconds;  // 0 when no time limit applies
  std::function<Outcome()> run;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

GridSpec box(std::vector<AxisRange> axes, double h, Boundary b = Boundary::kZeroFlux) {
  GridSpec g;
  g.axes = std::move(axes);
  g.h = h;
  g.boundary = b;
  return g;
}

GridSpec ou_spec() { return box({{-6, 6}}, 0.05); }

const GridModel& ou_grid() {
  static const GridModel g = discretize(ornstein_uhlenbeck(1), ou_spec());
  return g;
}

const CDParams kOu(1, 1, 0, kInf);
const CDParams kHeis(0, 0.5, 1, 2);

double mehler(double x, double y, double t) {
  const double e = std::exp(-t), e2 = std::exp(-2 * t);
  return std::exp(-(e2 * x * x - 2 * e * x * y + e2 * y * y) / (2 * (1 - e2))) / std::sqrt(1 - e2);
}

double normal_pdf(double x) { return std::exp(-x * x / 2) / std::sqrt(2 * std::numbers::pi); }

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

json verdict_json(const std::string& label, const CdVerdict& v) {
  json j = {{"label", label},
            {"status", to_string(v.status)},
            {"min_margin", v.min_margin},
            {"min_eigenvalue", v.min_eigenvalue},
            {"jets", v.jets_sampled},
            {"negative_jets", v.negative_jets}};
  if (v.witness) j["witness"] = {{"x", v.witness->x}, {"jet", v.witness->jet}, {"margin", v.witness->margin}};
  return j;
}

// 1: commutation identity

Outcome identity() {
  Outcome o;
  Rng rng(kSeed);
  std::vector<ModelDescriptor> models = {heisenberg(1), heisenberg(2), grushin(1)};
  Rng carnot_rng = rng.split(99);
  models.push_back(random_carnot(carnot_rng, 3, 2));
  int nonzero = 0;
  for (std::size_t k = 0; k < models.size(); ++k) {
    Rng r = rng.split(k);
    int bad = 0;
    for (int i = 0; i < kPolysPerModel; ++i) {
      const PolyExpr f = random_polynomial(r, models[k].op.dim(), kMaxPolyDegree, 8);
      if (!check_h2(models[k].op, f).is_zero()) ++bad;
    }
    nonzero += bad;
    o.records.push_back({{"model", models[k].name}, {"polynomials", kPolysPerModel}, {"nonzero_residuals", bad}});
  }
  o.pass = nonzero == 0;
  o.detail = std::to_string(nonzero) + " nonzero residuals over " +
             std::to_string(kPolysPerModel * models.size()) + " polynomials";
  return o;
}

// 2: CD certification

Outcome certification() {
  Outcome o;
  CertifyConfig cfg;
  cfg.budget = kCertifyJets;
  cfg.seed = kSeed;
  const auto h = heisenberg(1);
  const auto ok = certify(h, kHeis, cfg);
  const bool ok_pass = ok.status == CdStatus::kCertified && ok.min_margin >= kCertifyFloor;
  o.records.push_back(verdict_json("heisenberg CD(0,1/2,1,2)", ok));

  const CDParams strong(0.1, 0.5, 1, 2);
  const auto bad = certify(h, strong, cfg);
  double recomputed = 0;
  if (bad.witness) recomputed = recompute_margin(h, strong, *bad.witness);
  const bool bad_pass = bad.status == CdStatus::kFalsified && bad.witness && recomputed < kWitnessCeiling;
  o.records.push_back(verdict_json("heisenberg CD(0.1,1/2,1,2)", bad));
  o.records.back()["recomputed_margin"] = recomputed;

  const auto ou = certify(ornstein_uhlenbeck(1), kOu, cfg);
  const bool ou_pass = ou.status == CdStatus::kCertified && ou.min_margin >= kCertifyFloor;
  o.records.push_back(verdict_json("ou CD(1,1,0,inf)", ou));

  SearchSpec s;
  s.rho2 = 1;
  s.kappa = 0;
  s.d = kInf;
  const double rho1 = search_params(ornstein_uhlenbeck(1), s).best.certified.rho1;
  const bool search_pass = std::abs(rho1 - 1) <= kRho1Tolerance;
  o.records.push_back({{"label", "ou rho1 search"}, {"rho1", rho1}});

  o.pass = ok_pass && bad_pass && ou_pass && search_pass;
  o.detail = "heisenberg " + to_string(ok.status) + " (margin " + fmt(ok.min_margin) + "), strong " +
             to_string(bad.status) + " (witness " + fmt(recomputed) + "), ou " + to_string(ou.status) +
             ", rho1 " + fmt(rho1);
  return o;
}

// 3: Grushin parameter search against the frozen golden

Outcome grushin_search() {
  Outcome o;
  SearchSpec s;
  s.rho1 = 0;
  s.d = 2;
  const auto r = search_params(grushin(1), s);
  const auto round6 = [](double x) { return std::round(x * 1e6) / 1e6; };
  json found = {{"kappa", r.best.certified.kappa}, {"rho2", round6(r.best.certified.rho2)}};
  json front = json::array();
  for (const auto& p : r.pareto) front.push_back({{"kappa", p.certified.kappa}, {"rho2", round6(p.certified.rho2)}});
  std::ifstream in(std::string(CDGAMMA_SOURCE_DIR) + "/tests/golden/grushin1_cd_search.json");
  const json golden = json::parse(in);
  const bool exists = r.best.certified.rho2 > 0 && r.best.certified.kappa >= 0;
  const bool matches = golden["best"] == found && golden["pareto"] == front;
  o.records.push_back({{"best", found}, {"pareto", front}});
  o.pass = exists && matches;
  o.detail = "certified (rho2, kappa) = (" + fmt(r.best.certified.rho2) + ", " + fmt(r.best.certified.kappa) +
             "), golden " + (matches ? "matches" : "differs");
  return o;
}

// 4: spectral anchors

Outcome spectral() {
  Outcome o;
  const double gap = spectral_gap(ou_grid()).gap;
  const auto circle = discretize(euclidean(1), box({{0, 1}}, 1.0 / 128, Boundary::kPeriodic));
  const double four_pi2 = 4 * std::numbers::pi * std::numbers::pi;
  const double cgap = spectral_gap(circle).gap;
  const double crel = std::abs(cgap / four_pi2 - 1);
  o.pass = gap >= kGapLo && gap <= kGapHi && crel <= kCircleGapTolerance;
  o.records.push_back({{"ou_gap", gap}, {"circle_gap", cgap}, {"circle_rel_error", crel}});
  o.detail = "ou gap " + fmt(gap) + ", circle gap relative error " + fmt(crel);
  return o;
}

// 5: heat kernel oracle

Outcome kernel_oracle() {
  Outcome o;
  const auto& g = ou_grid();
  const Semigroup P(g);
  const std::vector<double> xs = {-1, 0, 1}, ts = {0.1, 0.5, 1};
  double worst = 0;
  int over = 0;
  for (double t : ts) {
    for (double x : xs) {
      const std::size_t n = g.nearest(std::vector<double>{x});
      const double rel = std::abs(P.kernel(n, t)[static_cast<Eigen::Index>(n)] / mehler(x, x, t) - 1);
      worst = std::max(worst, rel);
      if (rel > kKernelTolerance) ++over;
      o.records.push_back({{"x", x}, {"y", x}, {"t", t}, {"rel_error", rel}});
    }
  }
  RegistryInputs in;
  in.times = ts;
  for (double x : xs) in.pairs.push_back({{x}, {x}});
  const auto lower = verify_inequality(g, "KERNEL_LOWER", in, kOu);
  o.records.push_back(report_to_json(lower));
  o.pass = over == 0 && lower.pass;
  o.detail = std::to_string(over) + "/9 probes above " + fmt(kKernelTolerance) + " (worst " + fmt(worst) +
             "), KERNEL_LOWER " + (lower.pass ? "pass" : "fail");
  return o;
}

// 6, 7: registry sweeps

Outcome sweep(HeatVerifier& hv, const std::vector<std::string>& ids, const RegistryInputs& in) {
  Outcome o;
  std::string failed;
  for (const auto& r : hv.verify_all(ids, in)) {
    o.records.push_back(report_to_json(r));
    if (!r.pass) {
      o.pass = false;
      failed += (failed.empty() ? "" : ", ") + r.id + " (margin " + fmt(r.main.min_margin) + ", tolerance " +
                fmt(r.main.tolerance) + ")";
    }
  }
  o.detail = std::to_string(ids.size()) + " inequalities, " + std::to_string(in.functions.size()) +
             " functions" + (failed.empty() ? "" : "; failing: " + failed);
  return o;
}

Outcome ou_sweep() {
  RegistryInputs in;
  in.functions = {"1+0.5*sin(x)", "2+cos(2*x)",        "exp(x/2)",        "exp(-x^2/2)+0.1",
                  "1+x^2",        "1+tanh(x)",         "1.5+tanh(3*x)",   "1+0.9*sin(3*x)",
                  "exp(sin(x))",  "2+x/(1+x^2)",       "1+exp(-(x-1)^2)", "1.2+cos(x)*exp(-x^2/4)",
                  "sqrt(1+x^2)",  "1+0.5*tanh(10*x)",  "exp(x)",          "1+abs(x)",
                  "3+sin(x)+cos(2*x)", "log(2+x^2)",   "1+exp(-4*x^2)",   "1+0.5*sin(5*x)"};
  in.times = {0.05, 0.1, 0.5, 1};
  in.rho0 = 1;
  in.seed = kSeed;
  HeatVerifier hv(ornstein_uhlenbeck(1), ou_spec(), kOu);
  return sweep(hv,
               {"GRAD_LOG", "GRAD", "GRAD_ALPHA", "POINCARE", "MLSI_VERTICAL", "REV_LSI", "REV_POINCARE",
                "REG_BOUND", "WANG_HARNACK", "LOG_HARNACK", "LSI", "HYPERCONTRACT", "L1_SMOOTHING"},
               in);
}

Outcome heisenberg_sweep() {
  RegistryInputs in;
  in.functions = {"1+0.5*sin(x)", "2+cos(y)",         "exp(-(x^2+y^2)/2)+0.1", "2+sin(z)",
                  "1.5+tanh(x+y)", "2+cos(x)*sin(y)", "exp(0.3*(x-z))",        "3+sin(x+z)+cos(y)"};
  in.times = {0.05, 0.1, 0.5, 1};
  in.alpha = 1;
  in.seed = kSeed;
  HeatVerifier hv(heisenberg(1), box({{-2, 2}, {-2, 2}, {-2, 2}}, kHeisenbergH), kHeis);
  return sweep(hv, {"REV_LSI", "REV_POINCARE", "REG_BOUND", "WANG_HARNACK", "LOG_HARNACK", "GRAD_ALPHA", "L1_SMOOTHING"},
               in);
}

// 8: transport

Eigen::VectorXd shift_density(const GridModel& g, double m) {
  Eigen::VectorXd f(static_cast<Eigen::Index>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    f[static_cast<Eigen::Index>(i)] = std::exp(m * g.point(i)[0] - m * m / 2);
  }
  return f / g.mu.dot(f);
}

Outcome transport() {
  Outcome o;
  const auto& g = ou_grid();
  const Semigroup P(g);
  const auto d = all_pairs_distance(g);
  const std::vector<double> shifts = {0.25, 0.5, 1.0};

  double worst_shift = 0;
  for (double m : shifts) {
    const auto r = wasserstein2(d, g.mu, g.mu.cwiseProduct(shift_density(g, m)), g.h());
    worst_shift = std::max(worst_shift, std::abs(r.w2 - m));
    o.records.push_back({{"shift", m}, {"w2", r.w2}});
  }
  const bool shift_pass = worst_shift <= kShiftSlackInH * g.h();

  double prop_margin = kInf;
  for (const auto& e : random_density_expressions(g.coords, kRandomDensities, kSeed)) {
    const auto r = verify_entropy_wasserstein(g, P, d, density_from_expression(g, e), e, {0.1, 0.5, 1}, kOu);
    prop_margin = std::min(prop_margin, r.main.min_margin);
    o.records.push_back(report_to_json(r));
  }
  const bool prop_pass = prop_margin >= 0;

  double worst_equality = 0, hwi_margin = kInf;
  for (double m : shifts) {
    const auto r = verify_modified_hwi(g, d, shift_density(g, m), "shift " + fmt(m), 2, std::nullopt, kOu);
    const double lhs = r.hypothesis.main.worst.lhs, rhs = r.hypothesis.main.worst.rhs;
    worst_equality = std::max(worst_equality, std::abs(lhs - rhs) / rhs);
    hwi_margin = std::min(hwi_margin, r.conclusion.main.min_margin);
    o.records.push_back(report_to_json(r.hypothesis));
    o.records.push_back(report_to_json(r.conclusion));
  }
  const bool hwi_pass = worst_equality <= kHwiEqualityTolerance && hwi_margin >= 0;

  o.pass = shift_pass && prop_pass && hwi_pass;
  o.detail = "shift error " + fmt(worst_shift) + " (limit " + fmt(kShiftSlackInH * g.h()) +
             "), entropy-W2 min margin " + fmt(prop_margin) + ", HWI hypothesis gap " + fmt(worst_equality) +
             ", conclusion min margin " + fmt(hwi_margin);
  return o;
}

// 9: isoperimetry

Outcome isoperimetry() {
  Outcome o;
  const auto& g = ou_grid();
  const Semigroup P(g);
  double min_ratio = kInf;
  bool lines = true;
  for (double t : {0.0, -0.5, -1.0, -2.0}) {
    const auto A = threshold_set(g, "x <= " + fmt(t));
    const auto r = verify_isoperimetry(g, P, A, 1, kOu);
    const double ratio = r.main.worst.lhs / r.main.worst.rhs;
    min_ratio = std::min(min_ratio, ratio);
    lines = lines && r.pass && ratio >= kIsoRatio;
    o.records.push_back(report_to_json(r));
    o.records.back()["density_at_threshold"] = normal_pdf(t);
  }
  int failed = 0;
  for (const auto& A : random_threshold_sets(g, kRandomSets, kSeed)) {
    const auto r = verify_isoperimetry(g, P, A, 1, kOu);
    if (!r.pass) ++failed;
    o.records.push_back(report_to_json(r));
  }
  o.pass = lines && failed == 0;
  o.detail = "half-line min ratio " + fmt(min_ratio) + ", " + std::to_string(failed) + "/" +
             std::to_string(kRandomSets) + " random sets failing";
  return o;
}

void print_line(int number, bool pass, const std::string& title, double seconds, const std::string& detail) {
  std::cout << "criterion " << number << (number < 10 ? "  " : " ") << (pass ? "PASS" : "FAIL") << "  " << title
            << " [" << fmt(seconds) << " s]  " << detail << std::endl;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "commutation identity", 30, identity},
      {2, "CD certification", 180, certification},
      {3, "Grushin parameter search", 180, grushin_search},
      {4, "spectral anchors", 60, spectral},
      {5, "heat kernel oracle", 60, kernel_oracle},
      {6, "OU registry sweep", 300, ou_sweep},
      {7, "Heisenberg registry sweep", 300, heisenberg_sweep},
      {8, "transport", 180, transport},
      {9, "isoperimetry", 120, isoperimetry},
  };
  std::vector<std::string> first;
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string detail = o.detail;
    if (c.budget_seconds > 0 && s > c.budget_seconds) detail += "; over the " + fmt(c.budget_seconds) + " s budget";
    const bool pass = o.pass && (c.budget_seconds <= 0 || s <= c.budget_seconds);
    if (!pass) ++failures;
    print_line(c.number, pass, c.title, s, detail);
    first.push_back(o.records.dump());
  }

  // 10: rerun everything with the same seed and compare check records byte for byte
  const auto t0 = std::chrono::steady_clock::now();
  std::string differing;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    std::string again;
    try {
      again = criteria[i].run().records.dump();
    } catch (const std::exception&) {
      again = "error";
    }
    if (again != first[i]) differing += (differing.empty() ? "" : ", ") + std::to_string(criteria[i].number);
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool pass = differing.empty();
  if (!pass) ++failures;
  print_line(10, pass, "determinism", s,
             pass ? "criteria 1-9 rerun with identical check records" : "records differ for criteria " + differing);

  std::cout << (10 - failures) << "/10 criteria pass" << std::endl;
  return failures == 0 ? 0 : 1;
}
