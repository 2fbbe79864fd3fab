#pragma once

// Experiment configuration: a sectioned key=value text file.
//
//   [field]   dim, systems, mu, mean, mode (repeatable), period
//   [grid]    origin, side, n
//   [sweep]   epsilon, T, sigma, tol, slope_threshold, ratio_limit
//   [bc]      kind, f, g, G, source
//   [probe]   center, r, p, axis, theta, K, ratio_limit
//   [rho]     radii, y_samples, z_grid_step, domain_radius, window_step
//   [corrector] n, box
//   [lemma]   C0, C1, min_length, max_length, count
//   [output]  dir
//
// Tensors are "iso c", "zero" or the full list of d*d*m*m entries in
// ((i*d+j)*m+alpha)*m+beta order. A mode line reads "freq w1 .. wd ; cos <tensor> ;
// sin <tensor>" with either amplitude optional. Data expressions are separated by ';'
// when there is more than one component.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "homoglab/bvp.hpp"
#include "homoglab/error.hpp"
#include "homoglab/expr.hpp"
#include "homoglab/field.hpp"

namespace homoglab {

struct ModeSpec {
  std::vector<double> freq;
  std::vector<double> cos_amp;
  std::vector<double> sin_amp;
  bool operator==(const ModeSpec&) const = default;
};

struct FieldConfig {
  int dim = 1;
  int systems = 1;
  double mu = 1.0;
  std::vector<double> mean;
  std::vector<ModeSpec> modes;
  std::optional<std::vector<double>> period;
  bool operator==(const FieldConfig&) const = default;
};

struct GridConfig {
  std::vector<double> origin;
  std::vector<double> side;
  int n = 64;
  bool operator==(const GridConfig&) const = default;
};

struct SweepConfig {
  std::vector<double> epsilon{0.125, 0.0625, 0.03125, 0.015625};
  std::vector<double> T{8, 16, 32, 64};
  double sigma = 0.9;
  double tol = 1e-10;
  double slope_threshold = 0.6;
  double ratio_limit = 4.0;
  bool operator==(const SweepConfig&) const = default;
};

struct BcConfig {
  std::string kind = "dirichlet";
  std::vector<std::string> f;
  std::vector<std::string> g;  ///< conormal data, m expressions
  std::vector<std::string> G;  ///< flux vector, g = n.G; d*m expressions, index alpha*d+i
  std::vector<std::string> source;
  bool operator==(const BcConfig&) const = default;
};

struct ProbeConfig {
  std::vector<double> center;
  double r = 0.2;
  double p = 4.0;
  int axis = 1;  ///< parse default: the last axis
  double theta = 0.125;
  double K = 0.0;
  double ratio_limit = 3.0;
  bool operator==(const ProbeConfig&) const = default;
};

struct RhoConfig {
  std::vector<double> radii{0.5, 1, 2, 4, 8};
  int y_samples = 64;
  double z_grid_step = 0.25;
  double domain_radius = 50.0;
  double window_step = 0.25;
  bool operator==(const RhoConfig&) const = default;
};

struct CorrectorConfig {
  int n = 64;
  double box = 0.0;  ///< <= 0: automatic
  bool operator==(const CorrectorConfig&) const = default;
};

struct LemmaConfig {
  std::vector<double> C0{1, 2, 5};
  std::vector<double> C1{1, 0.5, 3};
  int min_length = 6;
  int max_length = 40;
  int count = 1000;
  bool operator==(const LemmaConfig&) const = default;
};

struct Config {
  FieldConfig field;
  GridConfig grid;
  SweepConfig sweep;
  BcConfig bc;
  ProbeConfig probe;
  RhoConfig rho;
  CorrectorConfig corrector;
  LemmaConfig lemma;
  std::string output_dir = "out";
  bool operator==(const Config&) const = default;

  TensorField tensor_field() const {
    const int d = field.dim, m = field.systems;
    std::vector<Mode> modes;
    for (const auto& ms : field.modes) {
      Mode md;
      md.freq = ms.freq;
      md.cos_amp = CoefTensor::from_values(d, m, ms.cos_amp);
      md.sin_amp = CoefTensor::from_values(d, m, ms.sin_amp);
      modes.push_back(std::move(md));
    }
    return TensorField(CoefTensor::from_values(d, m, field.mean), std::move(modes), field.mu, field.period);
  }

  BoundaryKind boundary_kind() const {
    if (bc.kind == "dirichlet") return BoundaryKind::dirichlet;
    if (bc.kind == "neumann") return BoundaryKind::neumann;
    throw ValidationError("config: bc.kind must be dirichlet or neumann");
  }

  /// Boundary-value problem described by [field], [grid] and [bc] (epsilon left at 0).
  BVPSpec bvp() const;

  /// Structural checks plus ellipticity of the field; throws ValidationError.
  void validate() const;
};

namespace detail {

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join_numbers(const std::vector<double>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) s += ' ';
    s += format_number(v[k]);
  }
  return s;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

struct Entry {
  std::string value;
  std::size_t line = 0;
};

class ConfigReader {
 public:
  using Section = std::map<std::string, std::vector<Entry>>;
  std::map<std::string, Section> sections;

  [[noreturn]] static void fail(const std::string& msg, std::size_t line) {
    throw ParseError("config: " + msg + " (line " + std::to_string(line) + ")", line);
  }

  const Entry* find(const std::string& sec, const std::string& key) const {
    auto s = sections.find(sec);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    if (k->second.size() > 1) fail("duplicate key '" + key + "'", k->second[1].line);
    return &k->second.front();
  }

  static double number(const std::string& tok, std::size_t line) {
    const char* b = tok.c_str();
    char* e = nullptr;
    const double v = std::strtod(b, &e);
    if (tok.empty() || e != b + tok.size()) fail("malformed number '" + tok + "'", line);
    return v;
  }

  static std::vector<double> numbers(std::string s, std::size_t line) {
    for (char& c : s)
      if (c == ',') c = ' ';
    std::istringstream is(s);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) out.push_back(number(tok, line));
    return out;
  }

  void get(const std::string& sec, const std::string& key, double& out) const {
    if (auto e = find(sec, key)) out = number(e->value, e->line);
  }
  void get(const std::string& sec, const std::string& key, int& out) const {
    if (auto e = find(sec, key)) {
      const double v = number(e->value, e->line);
      if (v != static_cast<double>(static_cast<int>(v))) fail("'" + key + "' must be an integer", e->line);
      out = static_cast<int>(v);
    }
  }
  void get(const std::string& sec, const std::string& key, std::vector<double>& out) const {
    if (auto e = find(sec, key)) out = numbers(e->value, e->line);
  }
  void get(const std::string& sec, const std::string& key, std::string& out) const {
    if (auto e = find(sec, key)) out = e->value;
  }
  void get_exprs(const std::string& sec, const std::string& key, std::vector<std::string>& out) const {
    if (auto e = find(sec, key)) {
      out = split(e->value, ';');
      for (const auto& s : out) {
        try {
          parse_expr(s);
        } catch (const ParseError& err) {
          fail("bad expression for '" + key + "': " + err.what(), e->line);
        }
      }
    }
  }
};

inline std::vector<double> iso_values(int d, int m, double c) {
  const CoefTensor t = CoefTensor::isotropic(d, m, c);
  return {t.values().begin(), t.values().end()};
}

inline std::vector<double> parse_tensor(const std::string& s, int d, int m, std::size_t line) {
  const auto size = static_cast<std::size_t>(d * d * m * m);
  std::istringstream is(s);
  std::string head;
  is >> head;
  if (head == "zero") return std::vector<double>(size, 0.0);
  if (head == "iso") {
    std::string c;
    if (!(is >> c)) ConfigReader::fail("'iso' needs a value", line);
    return iso_values(d, m, ConfigReader::number(c, line));
  }
  auto v = ConfigReader::numbers(s, line);
  if (v.size() != size)
    ConfigReader::fail("tensor needs " + std::to_string(size) + " entries, got " + std::to_string(v.size()), line);
  return v;
}

}  // namespace detail

inline Config parse_config(const std::string& text) {
  detail::ConfigReader rd;
  static const std::map<std::string, std::vector<std::string>> known = {
      {"field", {"dim", "systems", "mu", "mean", "mode", "period"}},
      {"grid", {"origin", "side", "n"}},
      {"sweep", {"epsilon", "T", "sigma", "tol", "slope_threshold", "ratio_limit"}},
      {"bc", {"kind", "f", "g", "G", "source"}},
      {"probe", {"center", "r", "p", "axis", "theta", "K", "ratio_limit"}},
      {"rho", {"radii", "y_samples", "z_grid_step", "domain_radius", "window_step"}},
      {"corrector", {"n", "box"}},
      {"lemma", {"C0", "C1", "min_length", "max_length", "count"}},
      {"output", {"dir"}},
  };
  std::istringstream is(text);
  std::string raw, section;
  std::size_t line = 0;
  while (std::getline(is, raw)) {
    ++line;
    if (auto h = raw.find('#'); h != std::string::npos) raw.erase(h);
    const std::string s = detail::trim(raw);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') detail::ConfigReader::fail("malformed section header", line);
      section = detail::trim(s.substr(1, s.size() - 2));
      if (!known.count(section)) detail::ConfigReader::fail("unknown section [" + section + "]", line);
      rd.sections[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) detail::ConfigReader::fail("expected key = value", line);
    if (section.empty()) detail::ConfigReader::fail("key outside a section", line);
    const std::string key = detail::trim(s.substr(0, eq));
    const auto& keys = known.at(section);
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      detail::ConfigReader::fail("unknown key '" + key + "' in [" + section + "]", line);
    rd.sections[section][key].push_back({detail::trim(s.substr(eq + 1)), line});
  }

  Config c;
  auto& f = c.field;
  rd.get("field", "dim", f.dim);
  rd.get("field", "systems", f.systems);
  if (f.dim < 1 || f.dim > 3) detail::ConfigReader::fail("field.dim must be 1, 2 or 3", 0);
  if (f.systems < 1) detail::ConfigReader::fail("field.systems must be >= 1", 0);
  rd.get("field", "mu", f.mu);
  f.mean = detail::iso_values(f.dim, f.systems, 1.0);
  if (auto e = rd.find("field", "mean")) f.mean = detail::parse_tensor(e->value, f.dim, f.systems, e->line);
  if (auto s = rd.sections.find("field"); s != rd.sections.end()) {
    if (auto m = s->second.find("mode"); m != s->second.end()) {
      for (const auto& e : m->second) {
        ModeSpec ms;
        ms.cos_amp = ms.sin_amp = std::vector<double>(static_cast<std::size_t>(f.dim * f.dim * f.systems * f.systems), 0.0);
        bool have_freq = false;
        for (const auto& part : detail::split(e.value, ';')) {
          std::istringstream ps(part);
          std::string tag;
          ps >> tag;
          std::string rest;
          std::getline(ps, rest);
          rest = detail::trim(rest);
          if (tag == "freq") {
            ms.freq = detail::ConfigReader::numbers(rest, e.line);
            have_freq = true;
          } else if (tag == "cos") {
            ms.cos_amp = detail::parse_tensor(rest, f.dim, f.systems, e.line);
          } else if (tag == "sin") {
            ms.sin_amp = detail::parse_tensor(rest, f.dim, f.systems, e.line);
          } else {
            detail::ConfigReader::fail("mode part must start with freq, cos or sin", e.line);
          }
        }
        if (!have_freq || static_cast<int>(ms.freq.size()) != f.dim)
          detail::ConfigReader::fail("mode needs 'freq' with " + std::to_string(f.dim) + " entries", e.line);
        f.modes.push_back(std::move(ms));
      }
    }
  }
  if (auto e = rd.find("field", "period")) f.period = detail::ConfigReader::numbers(e->value, e->line);

  c.grid.origin.assign(static_cast<std::size_t>(f.dim), 0.0);
  c.grid.side.assign(static_cast<std::size_t>(f.dim), 1.0);
  rd.get("grid", "origin", c.grid.origin);
  rd.get("grid", "side", c.grid.side);
  rd.get("grid", "n", c.grid.n);

  rd.get("sweep", "epsilon", c.sweep.epsilon);
  rd.get("sweep", "T", c.sweep.T);
  rd.get("sweep", "sigma", c.sweep.sigma);
  rd.get("sweep", "tol", c.sweep.tol);
  rd.get("sweep", "slope_threshold", c.sweep.slope_threshold);
  rd.get("sweep", "ratio_limit", c.sweep.ratio_limit);

  rd.get("bc", "kind", c.bc.kind);
  rd.get_exprs("bc", "f", c.bc.f);
  rd.get_exprs("bc", "g", c.bc.g);
  rd.get_exprs("bc", "G", c.bc.G);
  rd.get_exprs("bc", "source", c.bc.source);

  c.probe.center.assign(static_cast<std::size_t>(f.dim), 0.5);
  rd.get("probe", "center", c.probe.center);
  rd.get("probe", "r", c.probe.r);
  rd.get("probe", "p", c.probe.p);
  c.probe.axis = f.dim - 1;
  rd.get("probe", "axis", c.probe.axis);
  rd.get("probe", "theta", c.probe.theta);
  rd.get("probe", "K", c.probe.K);
  rd.get("probe", "ratio_limit", c.probe.ratio_limit);

  rd.get("rho", "radii", c.rho.radii);
  rd.get("rho", "y_samples", c.rho.y_samples);
  rd.get("rho", "z_grid_step", c.rho.z_grid_step);
  rd.get("rho", "domain_radius", c.rho.domain_radius);
  rd.get("rho", "window_step", c.rho.window_step);

  rd.get("corrector", "n", c.corrector.n);
  rd.get("corrector", "box", c.corrector.box);

  rd.get("lemma", "C0", c.lemma.C0);
  rd.get("lemma", "C1", c.lemma.C1);
  rd.get("lemma", "min_length", c.lemma.min_length);
  rd.get("lemma", "max_length", c.lemma.max_length);
  rd.get("lemma", "count", c.lemma.count);

  rd.get("output", "dir", c.output_dir);
  return c;
}

inline std::string serialize_config(const Config& c) {
  using detail::join_numbers;
  std::ostringstream os;
  auto exprs = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? " ; " : "") + v[k];
    return s;
  };
  os << "[field]\n";
  os << "dim = " << c.field.dim << "\nsystems = " << c.field.systems << "\n";
  os << "mu = " << detail::format_number(c.field.mu) << "\n";
  os << "mean = " << join_numbers(c.field.mean) << "\n";
  for (const auto& m : c.field.modes)
    os << "mode = freq " << join_numbers(m.freq) << " ; cos " << join_numbers(m.cos_amp) << " ; sin "
       << join_numbers(m.sin_amp) << "\n";
  if (c.field.period) os << "period = " << join_numbers(*c.field.period) << "\n";
  os << "\n[grid]\norigin = " << join_numbers(c.grid.origin) << "\nside = " << join_numbers(c.grid.side)
     << "\nn = " << c.grid.n << "\n";
  os << "\n[sweep]\nepsilon = " << join_numbers(c.sweep.epsilon) << "\nT = " << join_numbers(c.sweep.T)
     << "\nsigma = " << detail::format_number(c.sweep.sigma) << "\ntol = " << detail::format_number(c.sweep.tol)
     << "\nslope_threshold = " << detail::format_number(c.sweep.slope_threshold)
     << "\nratio_limit = " << detail::format_number(c.sweep.ratio_limit) << "\n";
  os << "\n[bc]\nkind = " << c.bc.kind << "\n";
  if (!c.bc.f.empty()) os << "f = " << exprs(c.bc.f) << "\n";
  if (!c.bc.g.empty()) os << "g = " << exprs(c.bc.g) << "\n";
  if (!c.bc.G.empty()) os << "G = " << exprs(c.bc.G) << "\n";
  if (!c.bc.source.empty()) os << "source = " << exprs(c.bc.source) << "\n";
  os << "\n[probe]\ncenter = " << join_numbers(c.probe.center) << "\nr = " << detail::format_number(c.probe.r)
     << "\np = " << detail::format_number(c.probe.p) << "\naxis = " << c.probe.axis
     << "\ntheta = " << detail::format_number(c.probe.theta) << "\nK = " << detail::format_number(c.probe.K)
     << "\nratio_limit = " << detail::format_number(c.probe.ratio_limit) << "\n";
  os << "\n[rho]\nradii = " << join_numbers(c.rho.radii) << "\ny_samples = " << c.rho.y_samples
     << "\nz_grid_step = " << detail::format_number(c.rho.z_grid_step)
     << "\ndomain_radius = " << detail::format_number(c.rho.domain_radius)
     << "\nwindow_step = " << detail::format_number(c.rho.window_step) << "\n";
  os << "\n[corrector]\nn = " << c.corrector.n << "\nbox = " << detail::format_number(c.corrector.box) << "\n";
  os << "\n[lemma]\nC0 = " << join_numbers(c.lemma.C0) << "\nC1 = " << join_numbers(c.lemma.C1)
     << "\nmin_length = " << c.lemma.min_length << "\nmax_length = " << c.lemma.max_length
     << "\ncount = " << c.lemma.count << "\n";
  os << "\n[output]\ndir = " << c.output_dir << "\n";
  return os.str();
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Config c = parse_config(ss.str());
  c.validate();
  return c;
}

inline void Config::validate() const {
  const int d = field.dim;
  const int m = field.systems;
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("config: " + msg);
  };
  need(field.mu > 0.0, "field.mu must be > 0");
  need(static_cast<int>(grid.origin.size()) == d && static_cast<int>(grid.side.size()) == d,
       "grid.origin and grid.side need dim entries");
  need(grid.n >= 2, "grid.n must be >= 2");
  need(!sweep.epsilon.empty(), "sweep.epsilon must be nonempty");
  need(!sweep.T.empty(), "sweep.T must be nonempty");
  for (double e : sweep.epsilon) need(e > 0.0 && e <= 1.0, "sweep.epsilon entries must lie in (0,1]");
  for (double t : sweep.T) need(t >= 1.0, "sweep.T entries must be >= 1");
  need(sweep.sigma > 0.0 && sweep.sigma < 1.0, "sweep.sigma must lie in (0,1)");
  need(sweep.tol > 0.0, "sweep.tol must be > 0");
  need(static_cast<int>(probe.center.size()) == d, "probe.center needs dim entries");
  need(probe.axis >= 0 && probe.axis < d, "probe.axis out of range");
  need(!rho.radii.empty(), "rho.radii must be nonempty");
  need(corrector.n >= 4, "corrector.n must be >= 4");
  need(lemma.C0.size() == lemma.C1.size() && !lemma.C0.empty(), "lemma.C0 and lemma.C1 need equal nonzero length");
  need(lemma.min_length >= 5 && lemma.max_length >= lemma.min_length, "lemma lengths must satisfy 5 <= min <= max");
  need(lemma.count >= 1, "lemma.count must be >= 1");
  auto check_exprs = [&](const std::vector<std::string>& v, std::size_t n, const std::string& what) {
    if (v.empty()) return;
    need(v.size() == n, what + " needs " + std::to_string(n) + " expressions");
    for (const auto& s : v) need(parse_expr(s).max_variable() <= d, what + " uses a coordinate beyond dim");
  };
  boundary_kind();
  check_exprs(bc.f, static_cast<std::size_t>(m), "bc.f");
  check_exprs(bc.g, static_cast<std::size_t>(m), "bc.g");
  check_exprs(bc.G, static_cast<std::size_t>(d * m), "bc.G");
  check_exprs(bc.source, static_cast<std::size_t>(m), "bc.source");
  need(bc.g.empty() || bc.G.empty(), "give either bc.g or bc.G, not both");
  const TensorField tf = tensor_field();
  const auto rep = ellipticity_check(tf, 2000, 0);
  need(rep.pass, "field fails the ellipticity check (observed range [" + detail::format_number(rep.mu_lower) + ", " +
                     detail::format_number(rep.mu_upper) + "] for mu = " + detail::format_number(field.mu) + ")");
}

inline BVPSpec Config::bvp() const {
  const int d = field.dim;
  const int m = field.systems;
  auto compile = [](const std::vector<std::string>& v) {
    auto out = std::make_shared<std::vector<Expr>>();
    for (const auto& s : v) out->push_back(parse_expr(s));
    return out;
  };
  BVPSpec s;
  s.field = tensor_field();
  s.origin = grid.origin;
  s.side = grid.side;
  s.n = grid.n;
  s.bc = boundary_kind();
  s.tol = sweep.tol;
  if (!bc.f.empty()) {
    auto fx = compile(bc.f);
    s.dirichlet = [fx](std::span<const double> x, std::span<double> out) {
      for (std::size_t a = 0; a < out.size(); ++a) out[a] = (*fx)[a].eval(x);
    };
  }
  if (!bc.source.empty()) {
    auto fx = compile(bc.source);
    s.source = [fx](std::span<const double> x, std::span<double> out) {
      for (std::size_t a = 0; a < out.size(); ++a) out[a] = (*fx)[a].eval(x);
    };
  }
  if (!bc.g.empty()) {
    auto gx = compile(bc.g);
    s.neumann = [gx](std::span<const double> x, std::span<const double>, std::span<double> out) {
      for (std::size_t a = 0; a < out.size(); ++a) out[a] = (*gx)[a].eval(x);
    };
  } else if (!bc.G.empty()) {
    auto gx = compile(bc.G);
    s.neumann = [gx, d, m](std::span<const double> x, std::span<const double> normal, std::span<double> out) {
      for (int a = 0; a < m; ++a) {
        double v = 0.0;
        for (int i = 0; i < d; ++i) v += normal[static_cast<std::size_t>(i)] * (*gx)[static_cast<std::size_t>(a * d + i)].eval(x);
        out[static_cast<std::size_t>(a)] = v;
      }
    };
  }
  return s;
}

}  // namespace homoglab
