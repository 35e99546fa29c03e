#include "cdgamma/model.hpp"

#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

namespace cdgamma {

using nlohmann::json;

CDParams::CDParams(double rho1_, double rho2_, double kappa_, double d_)
    : rho1(rho1_), rho2(rho2_), kappa(kappa_), d(d_) {
  if (!(rho2 > 0)) throw std::invalid_argument("CDParams: rho2 must be > 0");
  if (!(kappa >= 0)) throw std::invalid_argument("CDParams: kappa must be >= 0");
  if (!(d > 0)) throw std::invalid_argument("CDParams: d must be > 0");
  if (std::isnan(rho1) || std::isinf(rho1) || std::isinf(rho2) || std::isinf(kappa)) {
    throw std::invalid_argument("CDParams: rho1, rho2, kappa must be finite");
  }
}

double alpha_of(const CDParams& p) {
  return -std::min({p.rho2, p.rho1 - p.kappa, 0.0});
}

double t0_of(const CDParams& p, double rho0) {
  if (!(rho0 > 0)) throw std::invalid_argument("t0_of: rho0 must be > 0");
  const double rm = p.rho1_minus();
  return rm > 0 ? std::min(1.0 / rho0, 1.0 / rm) : 1.0 / rho0;
}

CDParams ClaimedParams::resolve() const {
  if (!complete()) throw std::invalid_argument("ClaimedParams: parameters left to be searched");
  return CDParams(*rho1, rho2 ? *rho2 : 1.0, *kappa, *d);
}

namespace {

std::string indexed(const std::string& base, int i, int n) {
  return n == 1 ? base : base + std::to_string(i + 1);
}

PolyExpr var(std::size_t dim, std::size_t i) { return PolyExpr::variable(dim, i); }

}  // namespace

ModelDescriptor heisenberg(int n) {
  if (n < 1) throw std::invalid_argument("heisenberg: n must be >= 1");
  const std::size_t dim = 2 * n + 1, z = 2 * n;
  std::vector<std::string> coords;
  for (int i = 0; i < n; ++i) coords.push_back(indexed("x", i, n));
  for (int i = 0; i < n; ++i) coords.push_back(indexed("y", i, n));
  coords.push_back("z");
  std::vector<VectorField> frame;
  for (int i = 0; i < n; ++i) {
    VectorField x = coordinate_field(dim, i);
    x.coef[z] = var(dim, n + i) * Rational(-1, 2);
    frame.push_back(x);
  }
  for (int i = 0; i < n; ++i) {
    VectorField y = coordinate_field(dim, n + i);
    y.coef[z] = var(dim, i) * Rational(1, 2);
    frame.push_back(y);
  }
  ModelDescriptor m{"heisenberg(" + std::to_string(n) + ")",
                    DiffusionOperator::sum_of_squares(coords, frame, {coordinate_field(dim, z)}),
                    {}, false, false, ""};
  m.claimed.rho1 = 0;
  m.claimed.rho2 = n / 2.0;
  m.claimed.kappa = 1;
  m.claimed.d = 2.0 * n;
  return m;
}

ModelDescriptor grushin(int n) {
  if (n < 1) throw std::invalid_argument("grushin: n must be >= 1");
  const std::size_t dim = 2 * n;
  std::vector<std::string> coords;
  for (int i = 0; i < n; ++i) coords.push_back(indexed("x", i, n));
  for (int i = 0; i < n; ++i) coords.push_back(indexed("y", i, n));
  std::vector<VectorField> frame, vertical;
  for (int i = 0; i < n; ++i) frame.push_back(coordinate_field(dim, i));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      VectorField y;
      y.coef.assign(dim, PolyExpr(dim));
      y.coef[n + i] = var(dim, j);
      frame.push_back(y);
    }
  }
  for (int i = 0; i < n; ++i) vertical.push_back(coordinate_field(dim, n + i));
  ModelDescriptor m{"grushin(" + std::to_string(n) + ")",
                    DiffusionOperator::sum_of_squares(coords, frame, vertical), {}, false,
                    false,
                    "frame {d/dx_i, x_j d/dy_i}: coefficient |x|^2 on d^2/dy_i^2; the "
                    "reference presentation writes |x|^2/2"};
  m.claimed.rho1 = 0;
  m.claimed.d = static_cast<double>(n + n * n);
  return m;
}

ModelDescriptor carnot_step2(int m, int k,
                             const std::vector<std::vector<std::vector<Rational>>>& c) {
  if (m < 1 || k < 0) throw std::invalid_argument("carnot_step2: need m >= 1, k >= 0");
  if (static_cast<int>(c.size()) != k) throw std::invalid_argument("carnot_step2: need k constant matrices");
  for (int l = 0; l < k; ++l) {
    if (static_cast<int>(c[l].size()) != m) throw std::invalid_argument("carnot_step2: bad shape");
    for (int i = 0; i < m; ++i) {
      if (static_cast<int>(c[l][i].size()) != m) throw std::invalid_argument("carnot_step2: bad shape");
      for (int j = 0; j < m; ++j) {
        if (c[l][i][j] != -c[l][j][i]) {
          throw std::invalid_argument("carnot_step2: structure constants not antisymmetric");
        }
      }
    }
  }
  const std::size_t dim = m + k;
  std::vector<std::string> coords;
  for (int i = 0; i < m; ++i) coords.push_back("x" + std::to_string(i + 1));
  for (int l = 0; l < k; ++l) coords.push_back(indexed("z", l, k));
  std::vector<VectorField> frame, vertical;
  // X_i = d/dx_i - 1/2 sum_{j,l} c^l_ij x_j d/dz_l, so that [X_i, X_j] = sum_l c^l_ij d/dz_l.
  for (int i = 0; i < m; ++i) {
    VectorField x = coordinate_field(dim, i);
    for (int l = 0; l < k; ++l) {
      PolyExpr s(dim);
      for (int j = 0; j < m; ++j) {
        if (c[l][i][j] != 0) s += var(dim, j) * (Rational(-1, 2) * c[l][i][j]);
      }
      x.coef[m + l] = s;
    }
    frame.push_back(x);
  }
  for (int l = 0; l < k; ++l) vertical.push_back(coordinate_field(dim, m + l));
  ModelDescriptor md{"carnot_step2(" + std::to_string(m) + "," + std::to_string(k) + ")",
                     DiffusionOperator::sum_of_squares(coords, frame, vertical), {}, false,
                     false, ""};
  md.claimed.rho1 = 0;
  return md;
}

ModelDescriptor ornstein_uhlenbeck(int n) {
  if (n < 1) throw std::invalid_argument("ornstein_uhlenbeck: n must be >= 1");
  std::vector<std::string> coords;
  for (int i = 0; i < n; ++i) coords.push_back(indexed("x", i, n));
  PolyExpr v(n);
  for (int i = 0; i < n; ++i) v += var(n, i) * var(n, i) * Rational(1, 2);
  ModelDescriptor m{"ornstein_uhlenbeck(" + std::to_string(n) + ")",
                    DiffusionOperator::weighted_laplacian(coords, v), {}, false, true,
                    "Gaussian measure, normalized to a probability"};
  m.claimed.rho1 = 1;
  m.claimed.rho2_free = true;
  m.claimed.kappa = 0;
  m.claimed.d = kInf;
  return m;
}

ModelDescriptor euclidean(int n) {
  if (n < 1) throw std::invalid_argument("euclidean: n must be >= 1");
  std::vector<std::string> coords;
  for (int i = 0; i < n; ++i) coords.push_back(indexed("x", i, n));
  ModelDescriptor m{"euclidean(" + std::to_string(n) + ")",
                    DiffusionOperator::weighted_laplacian(coords, PolyExpr(n)), {}, false,
                    false, ""};
  m.claimed.rho1 = 0;
  m.claimed.rho2_free = true;
  m.claimed.kappa = 0;
  m.claimed.d = n;
  return m;
}

ModelDescriptor builtin_model(const std::string& spec) {
  static const std::regex re(R"(\s*([a-z_0-9]+)\s*\(\s*(\d+)\s*\)\s*)");
  std::smatch mt;
  if (!std::regex_match(spec, mt, re)) throw std::invalid_argument("unknown built-in model '" + spec + "'");
  const std::string name = mt[1];
  const int n = std::stoi(mt[2]);
  if (name == "heisenberg") return heisenberg(n);
  if (name == "grushin") return grushin(n);
  if (name == "ornstein_uhlenbeck") return ornstein_uhlenbeck(n);
  if (name == "euclidean") return euclidean(n);
  throw std::invalid_argument("unknown built-in model '" + spec + "'");
}

ModelDescriptor load_model(const std::string& ref) {
  static const std::regex re(R"(\s*[a-z_0-9]+\s*\(\s*\d+\s*\)\s*)");
  if (std::regex_match(ref, re)) return builtin_model(ref);
  std::ifstream in(ref);
  if (!in) throw std::invalid_argument("cannot open model file '" + ref + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

json json_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double number_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw std::invalid_argument("expected a number or \"inf\", got " + j.dump());
}

json params_to_json(const CDParams& p) {
  return {{"rho1", json_number(p.rho1)},
          {"rho2", json_number(p.rho2)},
          {"kappa", json_number(p.kappa)},
          {"d", json_number(p.d)}};
}

CDParams params_from_json(const json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "rho1" && it.key() != "rho2" && it.key() != "kappa" && it.key() != "d") {
      throw std::invalid_argument("params: unknown key '" + it.key() + "'");
    }
  }
  return CDParams(number_from_json(j.at("rho1")), number_from_json(j.at("rho2")),
                  number_from_json(j.at("kappa")), number_from_json(j.at("d")));
}

namespace {

json field_list(const std::vector<VectorField>& fields, const std::vector<std::string>& names) {
  json a = json::array();
  for (const auto& v : fields) {
    json row = json::array();
    for (const auto& c : v.coef) row.push_back(to_string(c, names));
    a.push_back(row);
  }
  return a;
}

std::vector<VectorField> parse_fields(const json& a, const std::vector<std::string>& names) {
  std::vector<VectorField> out;
  for (const auto& row : a) {
    if (row.size() != names.size()) throw std::invalid_argument("model: field row length != coordinate count");
    VectorField v;
    for (const auto& s : row) v.coef.push_back(parse_poly(s.get<std::string>(), names));
    out.push_back(std::move(v));
  }
  return out;
}

json claimed_value(const std::optional<double>& v, bool free = false) {
  if (free) return "free";
  if (!v) return "search";
  return json_number(*v);
}

std::optional<double> claimed_from(const json& j, bool* free = nullptr) {
  if (j.is_string() && j.get<std::string>() == "search") return std::nullopt;
  if (j.is_string() && j.get<std::string>() == "free") {
    if (!free) throw std::invalid_argument("model: only rho2 may be \"free\"");
    *free = true;
    return std::nullopt;
  }
  return number_from_json(j);
}

}  // namespace

json model_to_json(const ModelDescriptor& m) {
  const auto& op = m.op;
  json j;
  j["schema"] = "cdgamma-model/1";
  j["name"] = m.name;
  j["coordinates"] = op.coords();
  if (op.form() == OperatorForm::kSumOfSquares) {
    j["form"] = "sum_of_squares";
    j["horizontal"] = field_list(op.horizontal(), op.coords());
  } else {
    j["form"] = "weighted_laplacian";
    j["weight"] = to_string(op.potential(), op.coords());
  }
  j["vertical"] = field_list(op.vertical(), op.coords());
  j["claimed"] = {{"rho1", claimed_value(m.claimed.rho1)},
                  {"rho2", claimed_value(m.claimed.rho2, m.claimed.rho2_free)},
                  {"kappa", claimed_value(m.claimed.kappa)},
                  {"d", claimed_value(m.claimed.d)}};
  j["compact"] = m.compact;
  j["finite_measure"] = m.finite_measure;
  j["notes"] = m.notes;
  return j;
}

ModelDescriptor model_from_json(const json& j) {
  static const std::vector<std::string> allowed = {
      "schema", "name",  "coordinates", "form",    "horizontal",     "weight",
      "vertical", "claimed", "compact",  "finite_measure", "notes"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw std::invalid_argument("model: unknown key '" + it.key() + "'");
    }
  }
  if (j.at("schema") != "cdgamma-model/1") throw std::invalid_argument("model: unsupported schema");
  auto coords = j.at("coordinates").get<std::vector<std::string>>();
  auto vertical = parse_fields(j.value("vertical", json::array()), coords);
  const std::string form = j.at("form");
  ModelDescriptor m{j.at("name"), DiffusionOperator{}, {},
                    j.value("compact", false), j.value("finite_measure", false),
                    j.value("notes", std::string())};
  if (form == "sum_of_squares") {
    m.op = DiffusionOperator::sum_of_squares(coords, parse_fields(j.at("horizontal"), coords),
                                             vertical);
  } else if (form == "weighted_laplacian") {
    PolyExpr v = parse_poly(j.at("weight").get<std::string>(), coords);
    m.op = DiffusionOperator::weighted_laplacian(coords, v, vertical);
  } else {
    throw std::invalid_argument("model: unknown form '" + form + "'");
  }
  const json& c = j.at("claimed");
  for (auto it = c.begin(); it != c.end(); ++it) {
    if (it.key() != "rho1" && it.key() != "rho2" && it.key() != "kappa" && it.key() != "d") {
      throw std::invalid_argument("model: unknown claimed key '" + it.key() + "'");
    }
  }
  m.claimed.rho1 = claimed_from(c.at("rho1"));
  m.claimed.rho2 = claimed_from(c.at("rho2"), &m.claimed.rho2_free);
  m.claimed.kappa = claimed_from(c.at("kappa"));
  m.claimed.d = claimed_from(c.at("d"));
  if (m.claimed.complete()) m.claimed.resolve();  // validates
  return m;
}

std::string serialize_model(const ModelDescriptor& m) {
  return model_to_json(m).dump(2) + "\n";
}

ModelDescriptor parse_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("model: ") + e.what());
  }
  return model_from_json(j);
}

}  // namespace cdgamma
