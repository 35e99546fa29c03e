#include "cdgamma/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "cdgamma/certify.hpp"
#include "cdgamma/distance.hpp"
#include "cdgamma/geometry.hpp"
#include "cdgamma/parallel.hpp"
#include "cdgamma/registry.hpp"
#include "cdgamma/semigroup.hpp"
#include "cdgamma/transport.hpp"

namespace cdgamma::cli {

using nlohmann::json;

const std::vector<std::string>& commands() {
  static const std::vector<std::string> c = {"certify-cd", "heat-verify", "spectral",
                                             "transport",  "isoperimetry", "report"};
  return c;
}

namespace {

// ---- schema helpers

void require_object(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw SchemaError(where + ": unknown key '" + k + "'");
  }
}

double as_number(const json& j, const std::string& where) {
  try {
    return number_from_json(j);
  } catch (const std::invalid_argument&) {
    throw SchemaError(where + ": expected a number");
  }
}

std::optional<double> opt_number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return std::nullopt;
  return as_number(j.at(key), where + "." + key);
}

std::optional<long long> opt_integer(const json& j, const char* key, const std::string& where, long long lo) {
  if (!j.contains(key)) return std::nullopt;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < lo) {
    throw SchemaError(where + "." + key + ": expected an integer >= " + std::to_string(lo));
  }
  return v.get<long long>();
}

std::optional<std::string> opt_string(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return std::nullopt;
  if (!j.at(key).is_string()) throw SchemaError(where + "." + key + ": expected a string");
  return j.at(key).get<std::string>();
}

std::optional<bool> opt_bool(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return std::nullopt;
  if (!j.at(key).is_boolean()) throw SchemaError(where + "." + key + ": expected true or false");
  return j.at(key).get<bool>();
}

std::vector<std::string> string_list(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return {};
  const json& v = j.at(key);
  if (!v.is_array()) throw SchemaError(where + "." + key + ": expected a list of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw SchemaError(where + "." + key + ": expected a list of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::vector<double> number_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw SchemaError(where + ": expected a list of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(as_number(e, where));
  return out;
}

std::vector<double> number_list(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return {};
  return number_list(j.at(key), where + "." + key);
}

// ---- command sections

struct HeatJob {
  std::vector<std::string> ids, functions;
  std::vector<double> times = {0.05, 0.1, 0.5, 1};
  std::vector<std::pair<Point, Point>> pairs;
  std::vector<Point> sources;
  std::optional<double> interior, rho0, alpha, wang_alpha, p;
  std::optional<long long> max_sources, sampled_sources;
  bool half_resolution = true;
};

HeatJob heat_job(const json& j) {
  const std::string w = "heat";
  require_object(j, w, {"ids", "functions", "times", "pairs", "sources", "interior", "rho0", "alpha",
                        "wang_alpha", "p", "max_sources", "sampled_sources", "half_resolution"});
  HeatJob h;
  h.ids = string_list(j, "ids", w);
  for (const auto& id : h.ids) {
    if (!is_registry_id(id)) throw SchemaError("heat.ids: unknown inequality id '" + id + "'");
  }
  h.functions = string_list(j, "functions", w);
  if (j.contains("times")) h.times = number_list(j, "times", w);
  if (j.contains("pairs")) {
    if (!j["pairs"].is_array()) throw SchemaError("heat.pairs: expected a list of [x, y] point pairs");
    for (const auto& pr : j["pairs"]) {
      if (!pr.is_array() || pr.size() != 2) throw SchemaError("heat.pairs: expected a list of [x, y] point pairs");
      h.pairs.emplace_back(number_list(pr[0], "heat.pairs"), number_list(pr[1], "heat.pairs"));
    }
  }
  if (j.contains("sources")) {
    if (!j["sources"].is_array()) throw SchemaError("heat.sources: expected a list of points");
    for (const auto& s : j["sources"]) h.sources.push_back(number_list(s, "heat.sources"));
  }
  h.interior = opt_number(j, "interior", w);
  h.rho0 = opt_number(j, "rho0", w);
  h.alpha = opt_number(j, "alpha", w);
  h.wang_alpha = opt_number(j, "wang_alpha", w);
  h.p = opt_number(j, "p", w);
  h.max_sources = opt_integer(j, "max_sources", w, 1);
  h.sampled_sources = opt_integer(j, "sampled_sources", w, 1);
  h.half_resolution = opt_bool(j, "half_resolution", w).value_or(true);
  return h;
}

CertifyConfig certify_job(const json& j) {
  const std::string w = "certify";
  require_object(j, w, {"budget", "base_points", "box", "nu_lo", "nu_hi", "nu_count", "nu_grid"});
  CertifyConfig c;
  if (auto v = opt_integer(j, "budget", w, 0)) c.budget = static_cast<long>(*v);
  if (auto v = opt_integer(j, "base_points", w, 1)) c.base_points = static_cast<int>(*v);
  if (auto v = opt_number(j, "box", w)) c.box = *v;
  if (auto v = opt_number(j, "nu_lo", w)) c.nu_lo = *v;
  if (auto v = opt_number(j, "nu_hi", w)) c.nu_hi = *v;
  if (auto v = opt_integer(j, "nu_count", w, 1)) c.nu_count = static_cast<int>(*v);
  c.nu_grid = number_list(j, "nu_grid", w);
  return c;
}

struct SpectralJob {
  int max_iter = 2000;
};

SpectralJob spectral_job(const json& j) {
  require_object(j, "spectral", {"max_iter"});
  SpectralJob s;
  if (auto v = opt_integer(j, "max_iter", "spectral", 1)) s.max_iter = static_cast<int>(*v);
  return s;
}

struct TransportJob {
  std::vector<std::string> densities;
  std::size_t random_densities = 0;
  std::vector<double> times = {0.1, 0.5, 1};
  bool hwi = true;
  double hwi_c = 2;
  std::optional<double> hwi_T;
  TransportOptions options;
};

TransportJob transport_job(const json& j) {
  const std::string w = "transport";
  require_object(j, w, {"densities", "random_densities", "times", "hwi", "hwi_c", "hwi_T", "method", "exact_max"});
  TransportJob t;
  t.densities = string_list(j, "densities", w);
  if (auto v = opt_integer(j, "random_densities", w, 0)) t.random_densities = static_cast<std::size_t>(*v);
  if (j.contains("times")) t.times = number_list(j, "times", w);
  t.hwi = opt_bool(j, "hwi", w).value_or(true);
  if (auto v = opt_number(j, "hwi_c", w)) t.hwi_c = *v;
  t.hwi_T = opt_number(j, "hwi_T", w);
  if (auto m = opt_string(j, "method", w)) {
    if (*m == "auto") t.options.method = TransportMethod::kAuto;
    else if (*m == "exact") t.options.method = TransportMethod::kExact;
    else if (*m == "sinkhorn") t.options.method = TransportMethod::kSinkhorn;
    else throw SchemaError("transport.method: expected auto, exact or sinkhorn");
  }
  if (auto v = opt_integer(j, "exact_max", w, 1)) t.options.exact_max = static_cast<std::size_t>(*v);
  return t;
}

struct IsoJob {
  std::vector<std::string> sets;
  std::vector<std::vector<std::size_t>> node_sets;
  std::size_t random_sets = 0;
  std::optional<double> rho0;
  int steps = 8;
};

IsoJob iso_job(const json& j) {
  const std::string w = "isoperimetry";
  require_object(j, w, {"sets", "node_sets", "random_sets", "rho0", "steps"});
  IsoJob s;
  s.sets = string_list(j, "sets", w);
  if (j.contains("node_sets")) {
    if (!j["node_sets"].is_array()) throw SchemaError("isoperimetry.node_sets: expected a list of node lists");
    for (const auto& ns : j["node_sets"]) {
      if (!ns.is_array()) throw SchemaError("isoperimetry.node_sets: expected a list of node lists");
      std::vector<std::size_t> nodes;
      for (const auto& n : ns) {
        if (!n.is_number_unsigned()) throw SchemaError("isoperimetry.node_sets: node indices must be nonnegative integers");
        nodes.push_back(n.get<std::size_t>());
      }
      s.node_sets.push_back(std::move(nodes));
    }
  }
  if (auto v = opt_integer(j, "random_sets", w, 0)) s.random_sets = static_cast<std::size_t>(*v);
  s.rho0 = opt_number(j, "rho0", w);
  if (auto v = opt_integer(j, "steps", w, 0)) s.steps = static_cast<int>(*v);
  return s;
}

std::vector<std::string> report_inputs(const json& j) {
  require_object(j, "report", {"inputs"});
  return string_list(j, "inputs", "report");
}

// ---- records

json certify_record(const ModelDescriptor& m, const CDParams& p, const CdVerdict& v) {
  json j = {{"id", "CD"},
            {"label", m.name},
            {"params", params_to_json(p)},
            {"status", to_string(v.status)},
            {"verdict", v.status == CdStatus::kCertified ? "pass" : "fail"},
            {"min_margin", json_number(v.min_margin)},
            {"tolerance", v.tol},
            {"min_eigenvalue", json_number(v.min_eigenvalue)},
            {"nu_at_min_eigenvalue", v.nu_at_min_eigenvalue},
            {"x_at_min_eigenvalue", v.x_at_min_eigenvalue},
            {"jets_sampled", v.jets_sampled},
            {"negative_jets", v.negative_jets},
            {"base_points", v.base_points},
            {"nu_grid", v.nu_grid},
            {"budget", v.budget},
            {"seed", v.seed},
            {"notes", v.note.empty() ? json::array() : json::array({v.note})}};
  if (v.witness) {
    j["witness"] = {{"x", v.witness->x},
                    {"jet", v.witness->jet},
                    {"nu", v.witness->nu},
                    {"margin", json_number(v.witness->margin)},
                    {"kind", v.witness->kind},
                    {"recomputed_margin", json_number(recompute_margin(m, p, *v.witness))}};
  } else {
    j["witness"] = nullptr;
  }
  return j;
}

json spectral_record(const GridModel& g, const CDParams& p, const SpectralResult& r) {
  json j = {{"id", "SPECTRAL_GAP"},
            {"label", g.model_name},
            {"params", params_to_json(p)},
            {"gap", r.gap},
            {"residual", r.residual},
            {"iterations", r.iterations},
            {"connected", r.connected},
            {"h", g.h()},
            {"nodes", g.size()}};
  json notes = json::array();
  if (!r.warning.empty()) notes.push_back(r.warning);
  if (g.probability && p.rho1 > 0) {
    // Poincare with constant (kappa+rho2)/(rho1 rho2) bounds the gap from below
    const double bound = p.rho1 * p.rho2 / (p.kappa + p.rho2);
    const double tol = inequality_tolerance(g.h(), bound, r.gap, false);
    j["constants"] = json::array({{{"expression", "(κ+ρ₂)/(ρ₁ρ₂)"}, {"value", 1 / bound}}});
    j["lhs"] = bound;
    j["rhs"] = r.gap;
    j["min_margin"] = r.gap - bound;
    j["tolerance"] = tol;
    j["verdict"] = r.gap - bound >= -tol ? "pass" : "fail";
  } else {
    notes.push_back("no Poincaré constant for these parameters; gap reported only");
    j["verdict"] = "pass";
  }
  j["notes"] = notes;
  return j;
}

json labelled(json j, const std::string& label) {
  j["label"] = label;
  return j;
}

// ---- run helpers

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void add(CommandOutput& out, json rec, const Timer& t) {
  const std::string v = rec.value("verdict", "fail");
  out.pass = out.pass && v != "fail";
  out.checks.push_back(std::move(rec));
  out.seconds.push_back(t.seconds());
}

ModelDescriptor resolve_model(const std::string& ref) {
  try {
    return load_model(ref);
  } catch (const std::exception& e) {
    throw SchemaError(std::string("model: ") + e.what());
  }
}

CDParams resolve_params(const JobConfig& cfg, const ModelDescriptor& m) {
  if (cfg.params) return *cfg.params;
  if (!m.claimed.complete()) throw SchemaError("params: required, the model claims no complete parameter set");
  return m.claimed.resolve();
}

void check_expressions(const std::vector<std::string>& exprs, const std::vector<std::string>& coords,
                       const std::string& where) {
  for (const auto& e : exprs) {
    try {
      (void)Expr::parse(e, coords);
    } catch (const std::exception& ex) {
      throw SchemaError(where + ": " + ex.what());
    }
  }
}

std::vector<std::string> default_functions(const std::vector<std::string>& c) {
  std::vector<std::string> f;
  std::string sum = c[0], sq = c[0] + "^2";
  for (std::size_t i = 1; i < c.size(); ++i) {
    sum += "+" + c[i];
    sq += "+" + c[i] + "^2";
  }
  for (const auto& x : c) f.push_back("2+sin(" + x + ")");
  f.push_back("1.5+tanh(" + sum + ")");
  f.push_back("exp(-(" + sq + ")/2)+0.1");
  f.push_back("1+0.5*cos(2*(" + sum + "))");
  return f;
}

CommandOutput run_heat(const JobConfig& cfg, const ModelDescriptor& m, const GridSpec& spec, const CDParams& p) {
  const HeatJob job = heat_job(cfg.heat);
  const auto& coords = m.op.coords();
  RegistryInputs in;
  in.functions = job.functions.empty() ? default_functions(coords) : job.functions;
  check_expressions(in.functions, coords, "heat.functions");
  in.times = job.times;
  in.pairs = job.pairs;
  in.sources = job.sources;
  if (job.interior) in.interior = *job.interior;
  in.rho0 = job.rho0;
  in.alpha = job.alpha;
  if (job.wang_alpha) in.wang_alpha = *job.wang_alpha;
  if (job.p) in.p = *job.p;
  if (job.max_sources) in.max_sources = static_cast<std::size_t>(*job.max_sources);
  if (job.sampled_sources) in.sampled_sources = static_cast<std::size_t>(*job.sampled_sources);
  in.seed = cfg.seed;
  const bool explicit_ids = !job.ids.empty();
  const std::vector<std::string> ids = explicit_ids ? job.ids : registry_ids();

  VerifyOptions vo;
  vo.half_resolution = job.half_resolution;
  vo.jobs = cfg.jobs;
  HeatVerifier v(m, spec, p, vo);
  CommandOutput out;
  for (const auto& id : ids) {
    Timer t;
    try {
      const InequalityReport r = v.verify(id, in);
      add(out, labelled(report_to_json(r), r.sample), t);
    } catch (const std::invalid_argument& e) {
      // without an explicit id list, ids whose hypotheses do not apply are skipped
      if (explicit_ids) throw;
      add(out, {{"id", id}, {"verdict", "skipped"}, {"notes", json::array({e.what()})}}, t);
    }
  }
  return out;
}

CommandOutput run_transport(const JobConfig& cfg, const ModelDescriptor& m, const GridSpec& spec,
                            const CDParams& p) {
  const TransportJob job = transport_job(cfg.transport);
  const auto& coords = m.op.coords();
  std::vector<std::string> dens = job.densities;
  for (auto& e : random_density_expressions(coords, job.random_densities, cfg.seed)) dens.push_back(e);
  if (dens.empty()) dens = random_density_expressions(coords, 4, cfg.seed);
  check_expressions(dens, coords, "transport.densities");

  const GridModel g = discretize(m, spec);
  const Semigroup P(g);
  std::vector<std::size_t> all(g.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  DistanceMatrix d;
  if (!cfg.out.empty()) {
    const auto dir = std::filesystem::path(cfg.out) / "cache";
    std::filesystem::create_directories(dir);
    d = cached_distance(dir.string(), g, all, cfg.jobs);
  } else {
    d = subriemannian_distance(g, all, cfg.jobs);
  }

  CommandOutput out;
  for (const auto& e : dens) {
    const Eigen::VectorXd f = density_from_expression(g, e);
    Timer t;
    add(out, labelled(report_to_json(verify_entropy_wasserstein(g, P, d, f, e, job.times, p, job.options)), e), t);
    if (!job.hwi) continue;
    Timer th;
    HwiReport h = verify_modified_hwi(g, d, f, e, job.hwi_c, job.hwi_T, p, job.options);
    json hyp = labelled(report_to_json(h.hypothesis), e);
    hyp["verdict"] = "pass";
    hyp["hypothesis_holds"] = h.hypothesis.pass;
    hyp["notes"].push_back("premise of the modified HWI inequality; informational");
    add(out, hyp, th);
    if (!h.hypothesis.pass) {
      h.conclusion.notes.push_back("hypothesis fails, so the conclusion is not claimed");
      h.conclusion.pass = true;
    }
    json con = labelled(report_to_json(h.conclusion), e);
    con["T"] = h.T;
    con["C"] = h.C;
    con["T_optimized"] = h.T_optimized;
    add(out, con, th);
  }
  return out;
}

CommandOutput run_isoperimetry(const JobConfig& cfg, const ModelDescriptor& m, const GridSpec& spec,
                               const CDParams& p) {
  const IsoJob job = iso_job(cfg.isoperimetry);
  if (!job.rho0) throw SchemaError("isoperimetry.rho0: required");
  const GridModel g = discretize(m, spec);
  for (const auto& s : job.sets) {
    try {
      (void)threshold_set(g, s);
    } catch (const std::exception& e) {
      throw SchemaError(std::string("isoperimetry.sets: ") + e.what());
    }
  }
  std::vector<GridSet> sets;
  for (const auto& s : job.sets) sets.push_back(threshold_set(g, s));
  for (std::size_t k = 0; k < job.node_sets.size(); ++k) {
    sets.push_back(node_set(g, job.node_sets[k], "node set " + std::to_string(k)));
  }
  for (auto& s : random_threshold_sets(g, job.random_sets, cfg.seed)) sets.push_back(std::move(s));
  if (sets.empty()) throw SchemaError("isoperimetry: no sets given");
  const Semigroup P(g);

  std::vector<json> recs(sets.size());
  std::vector<double> secs(sets.size());
  parallel_for(sets.size(), cfg.jobs, [&](std::size_t i) {
    Timer t;
    recs[i] = labelled(report_to_json(verify_isoperimetry(g, P, sets[i], *job.rho0, p, job.steps)), sets[i].label);
    secs[i] = t.seconds();
  });
  CommandOutput out;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    out.pass = out.pass && recs[i]["verdict"] != "fail";
    out.checks.push_back(std::move(recs[i]));
    out.seconds.push_back(secs[i]);
  }
  return out;
}

CommandOutput run_report(const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw SchemaError("report: no input reports");
  CommandOutput out;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw SchemaError("report: cannot read " + path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw SchemaError("report: " + path + ": " + e.what());
    }
    if (!doc.is_object() || doc.value("schema", "") != kReportSchema || !doc.contains("checks")) {
      throw SchemaError("report: " + path + " is not a " + std::string(kReportSchema) + " document");
    }
    for (auto rec : doc["checks"]) {
      rec["source"] = {{"file", std::filesystem::path(path).filename().string()}, {"command", doc.value("command", "")}};
      Timer t;
      add(out, rec, t);
      out.seconds.back() = 0;
    }
  }
  return out;
}

std::string iso_time_utc() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string csv_field(const json& v) {
  if (v.is_null()) return "";
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  if (s.find_first_of(",\"\n") != std::string::npos) {
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  return s;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_text(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(where + ": " + e.what());
  }
}

}  // namespace

JobConfig parse_config(const json& j) {
  require_object(j, "config", {"model", "grid", "params", "seed", "tol", "jobs", "out", "certify", "heat",
                               "spectral", "transport", "isoperimetry", "report"});
  JobConfig c;
  if (auto v = opt_string(j, "model", "config")) c.model = *v;
  try {
    if (j.contains("grid")) c.grid = grid_spec_from_json(j["grid"]);
    if (j.contains("params")) c.params = params_from_json(j["params"]);
  } catch (const std::exception& e) {
    throw SchemaError(e.what());
  }
  if (auto v = opt_integer(j, "seed", "config", 0)) c.seed = static_cast<std::uint64_t>(*v);
  c.tol = opt_number(j, "tol", "config");
  c.jobs = static_cast<int>(opt_integer(j, "jobs", "config", 1).value_or(default_jobs()));
  if (auto v = opt_string(j, "out", "config")) c.out = *v;
  if (j.contains("certify")) c.certify = j["certify"];
  if (j.contains("heat")) c.heat = j["heat"];
  if (j.contains("spectral")) c.spectral = j["spectral"];
  if (j.contains("transport")) c.transport = j["transport"];
  if (j.contains("isoperimetry")) c.isoperimetry = j["isoperimetry"];
  if (j.contains("report")) c.report = j["report"];
  // every section is validated before anything runs
  (void)certify_job(c.certify);
  (void)heat_job(c.heat);
  (void)spectral_job(c.spectral);
  (void)transport_job(c.transport);
  (void)iso_job(c.isoperimetry);
  (void)report_inputs(c.report);
  return c;
}

json config_to_json(const JobConfig& c) {
  json j = {{"model", c.model}, {"seed", c.seed}, {"jobs", c.jobs}};
  if (c.grid) j["grid"] = grid_spec_to_json(*c.grid);
  if (c.params) j["params"] = params_to_json(*c.params);
  if (c.tol) j["tol"] = *c.tol;
  for (const auto& [k, v] : {std::pair<const char*, const json*>{"certify", &c.certify},
                             {"heat", &c.heat},
                             {"spectral", &c.spectral},
                             {"transport", &c.transport},
                             {"isoperimetry", &c.isoperimetry},
                             {"report", &c.report}}) {
    if (!v->empty()) j[k] = *v;
  }
  return j;
}

GridSpec default_grid(const ModelDescriptor& m) {
  const std::size_t n = m.op.coords().size();
  GridSpec s;
  s.h = n == 1 ? 0.05 : n == 2 ? 0.1 : 0.25;
  if (m.compact) {
    s.axes.assign(n, {0, 1});
    s.h = n == 1 ? 1.0 / 128 : 1.0 / 16;
    s.boundary = Boundary::kPeriodic;
  } else if (m.finite_measure) {
    s.axes.assign(n, {-6, 6});
  } else {
    s.axes.assign(n, {-2, 2});
  }
  return s;
}

CommandOutput run_command(const std::string& command, const JobConfig& cfg,
                          const std::vector<std::string>& inputs) {
  if (command == "report") {
    std::vector<std::string> all = report_inputs(cfg.report);
    all.insert(all.end(), inputs.begin(), inputs.end());
    return run_report(all);
  }
  const ModelDescriptor m = resolve_model(cfg.model);
  const CDParams p = resolve_params(cfg, m);
  const GridSpec spec = cfg.grid.value_or(default_grid(m));

  if (command == "certify-cd") {
    CertifyConfig cc = certify_job(cfg.certify);
    cc.seed = cfg.seed;
    cc.jobs = cfg.jobs;
    if (cfg.tol) cc.tol = *cfg.tol;
    CommandOutput out;
    Timer t;
    add(out, certify_record(m, p, certify(m, p, cc)), t);
    return out;
  }
  if (command == "heat-verify") return run_heat(cfg, m, spec, p);
  if (command == "spectral") {
    const SpectralJob job = spectral_job(cfg.spectral);
    CommandOutput out;
    Timer t;
    const GridModel g = discretize(m, spec);
    add(out, spectral_record(g, p, spectral_gap(g, cfg.tol.value_or(1e-8), job.max_iter)), t);
    return out;
  }
  if (command == "transport") return run_transport(cfg, m, spec, p);
  if (command == "isoperimetry") return run_isoperimetry(cfg, m, spec, p);
  throw SchemaError("unknown command '" + command + "'");
}

json make_report(const std::string& command, const JobConfig& cfg, const CommandOutput& out, const json& timing) {
  std::size_t passed = 0, failed = 0, skipped = 0;
  for (const auto& c : out.checks) {
    const std::string v = c.value("verdict", "fail");
    (v == "pass" ? passed : v == "skipped" ? skipped : failed)++;
  }
  return {{"schema", kReportSchema},
          {"tool", {{"name", "cdgamma"}, {"version", kToolVersion}}},
          {"timing", timing},
          {"command", command},
          {"seed", cfg.seed},
          {"config", config_to_json(cfg)},
          {"checks", out.checks},
          {"summary", {{"checks", out.checks.size()}, {"passed", passed}, {"failed", failed}, {"skipped", skipped}}},
          {"verdict", out.pass ? "pass" : "fail"}};
}

std::string margins_csv(const json& report) {
  std::ostringstream os;
  os << "check,label,level,h,function,t,node,node_y,lhs,rhs,margin,tolerance,verdict\n";
  auto row = [&](const json& c, const std::string& level, const json& lvl) {
    const json w = lvl.contains("worst") ? lvl["worst"] : json::object();
    auto get = [](const json& o, const char* k) { return o.contains(k) ? o[k] : json(); };
    os << csv_field(get(c, "id")) << ',' << csv_field(get(c, "label")) << ',' << level << ','
       << csv_field(get(lvl, "h")) << ',' << csv_field(get(w, "function")) << ',' << csv_field(get(w, "t")) << ','
       << csv_field(get(w, "node")) << ',' << csv_field(get(w, "node_y")) << ','
       << csv_field(w.contains("lhs") ? w["lhs"] : get(c, "lhs")) << ','
       << csv_field(w.contains("rhs") ? w["rhs"] : get(c, "rhs")) << ','
       << csv_field(w.contains("margin") ? w["margin"] : get(lvl, "min_margin")) << ','
       << csv_field(w.contains("tolerance") ? w["tolerance"] : get(lvl, "tolerance")) << ','
       << csv_field(get(lvl, "verdict")) << '\n';
  };
  for (const auto& c : report.at("checks")) {
    if (c.contains("grid") && c["grid"].is_object()) {
      row(c, "main", c["grid"]);
      if (c.contains("half_resolution") && c["half_resolution"].is_object()) row(c, "half", c["half_resolution"]);
    } else {
      row(c, "main", c);
    }
  }
  return os.str();
}

std::string summary_table(const json& report) {
  std::ostringstream os;
  auto cell = [](const json& v) {
    if (v.is_null()) return std::string("-");
    if (v.is_number_float()) {
      std::ostringstream s;
      s << std::setprecision(4) << std::scientific << v.get<double>();
      return s.str();
    }
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  auto clip = [](std::string s, std::size_t n) { return s.size() > n ? s.substr(0, n - 1) + "~" : s; };
  os << std::left << std::setw(22) << "check" << std::setw(34) << "label" << std::setw(9) << "verdict"
     << std::setw(13) << "min margin" << "tolerance\n";
  for (const auto& c : report.at("checks")) {
    os << std::setw(22) << clip(c.value("id", ""), 21) << std::setw(34) << clip(c.value("label", ""), 33)
       << std::setw(9) << c.value("verdict", "") << std::setw(13)
       << cell(c.contains("min_margin") ? c["min_margin"] : json()) << cell(c.contains("tolerance") ? c["tolerance"] : json())
       << '\n';
  }
  const auto& s = report.at("summary");
  os << s["passed"] << " passed, " << s["failed"] << " failed, " << s["skipped"] << " skipped: "
     << report.at("verdict").get<std::string>() << '\n';
  return os.str();
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Curvature-dimension certification and functional-inequality verification"};
  std::string command, model, config_path, grid, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  std::optional<int> jobs;
  std::vector<std::string> inputs;
  app.add_option("command", command, "certify-cd | heat-verify | spectral | transport | isoperimetry | report")
      ->required()
      ->check(CLI::IsMember(commands()));
  app.add_option("inputs", inputs, "report files for the report command");
  app.add_option("--model", model, "built-in model such as heisenberg(1), or a model file");
  app.add_option("--config", config_path, "JSON job configuration");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--tol", tol, "certification margin tolerance or spectral solver tolerance");
  app.add_option("--grid", grid, "grid spacing, a JSON grid object, or a file holding one");
  app.add_option("--out", out_dir, "output directory (default $" + std::string(kOutDirEnv) + " or cdgamma-out)");
  app.add_option("--jobs", jobs, "worker threads (default: logical cores)")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kPass : kSchemaViolation;
  }

  JobConfig cfg;
  try {
    if (!config_path.empty()) {
      cfg = parse_config(parse_json_text(read_text(config_path), config_path));
    } else {
      cfg.jobs = default_jobs();
    }
    if (!model.empty()) cfg.model = model;
    if (seed) cfg.seed = *seed;
    if (tol) cfg.tol = *tol;
    if (jobs) cfg.jobs = *jobs;
    if (!grid.empty()) {
      const bool is_json = grid.find('{') != std::string::npos;
      if (is_json || std::filesystem::exists(grid)) {
        try {
          cfg.grid = grid_spec_from_json(parse_json_text(is_json ? grid : read_text(grid), "--grid"));
        } catch (const SchemaError&) {
          throw;
        } catch (const std::exception& e) {
          throw SchemaError(std::string("--grid: ") + e.what());
        }
      } else {
        double h = 0;
        try {
          std::size_t used = 0;
          h = std::stod(grid, &used);
          if (used != grid.size() || !(h > 0)) throw std::invalid_argument("");
        } catch (const std::exception&) {
          throw SchemaError("--grid: expected a positive spacing, a JSON object or a file");
        }
        cfg.grid = cfg.grid.value_or(default_grid(resolve_model(cfg.model))).with_h(h);
      }
    }
    if (!out_dir.empty()) {
      cfg.out = out_dir;
    } else if (cfg.out.empty()) {
      const char* env = std::getenv(kOutDirEnv);
      cfg.out = env && *env ? env : "cdgamma-out";
    }
    if (command != "report" && !inputs.empty()) throw SchemaError("only the report command takes input files");
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << '\n';
    return kSchemaViolation;
  }

  const std::string started = iso_time_utc();
  const Timer total;
  CommandOutput result;
  try {
    result = run_command(command, cfg, inputs);
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << '\n';
    return kSchemaViolation;
  } catch (const std::exception& e) {
    err << "compute failure: " << e.what() << '\n';
    return kComputeFailure;
  }
  const json timing = {{"started_utc", started}, {"wall_seconds", total.seconds()}, {"check_seconds", result.seconds}};
  const json report = make_report(command, cfg, result, timing);
  try {
    std::filesystem::create_directories(cfg.out);
    const auto base = std::filesystem::path(cfg.out) / command;
    std::ofstream(base.string() + ".json") << report.dump(2) << '\n';
    std::ofstream(base.string() + "-margins.csv") << margins_csv(report);
  } catch (const std::exception& e) {
    err << "compute failure: cannot write report: " << e.what() << '\n';
    return kComputeFailure;
  }
  out << summary_table(report);
  out << "report: " << (std::filesystem::path(cfg.out) / (command + ".json")).string() << '\n';
  return result.pass ? kPass : kVerdictFailure;
}

}  // namespace cdgamma::cli
