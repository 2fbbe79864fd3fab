#pragma once

// Command orchestration for the homoglab executable: each command runs one pipeline
// from a Config and writes CSV tables, summary.json and stamp.json under the output
// directory.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "homoglab/bvp.hpp"
#include "homoglab/campanato.hpp"
#include "homoglab/config.hpp"
#include "homoglab/corrector.hpp"
#include "homoglab/error.hpp"
#include "homoglab/field.hpp"
#include "homoglab/homogenize.hpp"
#include "homoglab/norms.hpp"
#include "homoglab/parallel.hpp"
#include "homoglab/probes.hpp"

namespace homoglab {

inline constexpr const char* kVersion = "0.1.0";

struct RunFlags {
  bool strict = false;
  std::uint64_t seed = 0;
  std::optional<std::string> out;
  bool override_resolution = false;
  std::optional<int> count;  ///< lemma-fuzz instance count per case
};

/// What a command produced; pass flags feed --strict.
struct RunResult {
  std::map<std::string, bool> pass;
  nlohmann::json details = nlohmann::json::object();
  std::vector<std::string> warnings;
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"corrector", "homogenize", "rho",      "rate",      "lipschitz",
                                                 "w1p",       "boundary",   "flatness", "lemma-fuzz"};
  return names;
}

namespace detail {

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header) : out_(path) {
    if (!out_) throw ValidationError("cannot write " + path.string());
    out_ << header << '\n';
  }

  template <class... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  static std::string cell(double v) { return format_number(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(bool v) { return v ? "1" : "0"; }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }
};

inline std::string config_hash(const Config& c) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char ch : serialize_config(c)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

struct Context {
  const Config& cfg;
  const RunFlags& flags;
  std::filesystem::path out;
  TensorField field;
  CorrectorOptions copts() const { return {cfg.sweep.tol, 0, flags.override_resolution}; }
  BVPSpec bvp() const {
    BVPSpec s = cfg.bvp();
    s.override_resolution = flags.override_resolution;
    return s;
  }
};

inline double corrector_box(const Context& cx, double T) {
  if (cx.cfg.corrector.box > 0.0) return cx.cfg.corrector.box;
  if (cx.field.period_lattice()) return 0.0;  // period cell
  return default_box_side(cx.field, T);
}

inline RunResult run_corrector(const Context& cx) {
  RunResult res;
  CsvWriter csv(cx.out / "corrector.csv",
                "T,sup_over_T,lipschitz,energy,energy_bound,holder_ratio,max_residual,periodization_error");
  std::vector<double> lips, sups;
  bool energy_ok = true;
  for (double T : cx.cfg.sweep.T) {
    const CorrectorSet cs = solve_corrector(cx.field, T, corrector_box(cx, T), cx.cfg.corrector.n, cx.copts());
    const auto b = corrector_bounds(cs, cx.cfg.sweep.sigma, cx.flags.seed);
    const double res_max = *std::max_element(cs.residuals.begin(), cs.residuals.end());
    csv.row(T, b.sup_over_T, b.lipschitz, b.energy, b.energy_bound, b.holder_ratio, res_max, cs.periodization_error);
    energy_ok = energy_ok && b.energy <= b.energy_bound * (1.0 + 1e-9);
    lips.push_back(b.lipschitz);
    sups.push_back(b.sup_over_T);
    for (const auto& w : cs.warnings) res.warnings.push_back("T=" + format_number(T) + ": " + w);
    save_corrector_set(cs, cx.out / "correctors" / ("T_" + format_number(T)));
  }
  const double lip_lo = *std::min_element(lips.begin(), lips.end());
  const double lip_hi = *std::max_element(lips.begin(), lips.end());
  bool sup_ok = true;
  for (std::size_t k = 1; k < sups.size(); ++k) sup_ok = sup_ok && sups[k] <= sups[k - 1] * 1.05 + 1e-14;
  res.pass["energy_bound"] = energy_ok;
  res.pass["lipschitz_uniform"] = lip_hi <= 2.0 * lip_lo || lip_hi <= 1e-12;
  res.pass["sup_nonincreasing"] = sup_ok;
  res.details["lipschitz_spread"] = num(lip_lo > 0.0 ? lip_hi / lip_lo : 1.0);
  return res;
}

inline void write_effective(CsvWriter& csv, const EffectiveTensor& e) {
  const auto& t = e.entries;
  for (int i = 0; i < t.dim(); ++i)
    for (int j = 0; j < t.dim(); ++j)
      for (int a = 0; a < t.systems(); ++a)
        for (int b = 0; b < t.systems(); ++b) csv.row(e.method, e.T, i + 1, j + 1, a + 1, b + 1, t(i, j, a, b));
}

/// Extreme Rayleigh quotients of the symmetric part of a constant tensor.
inline std::pair<double, double> tensor_range(const CoefTensor& t) {
  const int d = t.dim(), m = t.systems();
  Eigen::MatrixXd a(d * m, d * m);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int al = 0; al < m; ++al)
        for (int be = 0; be < m; ++be) a(i * m + al, j * m + be) = t(i, j, al, be);
  const Eigen::MatrixXd s = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

inline nlohmann::json effective_json(const EffectiveTensor& e) {
  return {{"method", e.method},
          {"T", num(e.T)},
          {"h", e.grid.h_max()},
          {"d", e.entries.dim()},
          {"m", e.entries.systems()},
          {"entries", std::vector<double>(e.entries.values().begin(), e.entries.values().end())}};
}

inline RunResult run_homogenize(const Context& cx) {
  RunResult res;
  CsvWriter csv(cx.out / "effective.csv", "method,T,i,j,alpha,beta,value");
  nlohmann::json all = nlohmann::json::array();
  bool elliptic = true;
  auto record = [&](const EffectiveTensor& e) {
    write_effective(csv, e);
    all.push_back(effective_json(e));
    const auto [lo, hi] = tensor_range(e.entries);
    elliptic = elliptic && lo >= cx.field.mu() * (1.0 - 1e-8) && hi <= (1.0 + 1e-8) / cx.field.mu();
  };
  if (cx.field.period_lattice()) record(exact_periodic_cell(cx.field, cx.cfg.corrector.n, nullptr, cx.copts()));
  for (double T : cx.cfg.sweep.T) {
    const CorrectorSet cs = solve_corrector(cx.field, T, corrector_box(cx, T), cx.cfg.corrector.n, cx.copts());
    record(effective_tensor(cx.field, cs));
  }
  std::ofstream(cx.out / "effective.json") << all.dump(2) << '\n';
  res.pass["elliptic"] = elliptic;
  return res;
}

inline RhoSearch rho_search(const Config& c) {
  RhoSearch s;
  s.y_samples = c.rho.y_samples;
  s.z_grid_step = c.rho.z_grid_step;
  s.domain_radius = c.rho.domain_radius;
  s.window_step = c.rho.window_step;
  return s;
}

inline RunResult run_rho(const Context& cx) {
  RunResult res;
  const RhoTable t = rho_table(cx.field, cx.cfg.rho.radii, rho_search(cx.cfg));
  CsvWriter csv(cx.out / "rho.csv", "R,rho,lower,upper");
  bool mono = true;
  for (std::size_t k = 0; k < t.radii.size(); ++k) {
    csv.row(t.radii[k], t.values[k], t.lower[k], t.upper[k]);
    if (k) mono = mono && t.values[k] <= t.values[k - 1];
  }
  const DecayFit fit = decay_fit(t);
  res.details["decay_fit"] = {{"C0", num(fit.c0)}, {"N", num(fit.n)}, {"residual", num(fit.residual)},
                              {"status", to_string(fit.status)}};
  res.pass["monotone"] = mono;
  return res;
}

/// Modulus table, reference correctors and the tensor used for u_0.
struct RateSetup {
  ModulusTable moduli;
  EffectiveTensor effective;
};

inline RateSetup rate_setup(const Context& cx, RunResult& res) {
  RateSetup st;
  const auto& Ts = cx.cfg.sweep.T;
  const double tmax = *std::max_element(Ts.begin(), Ts.end());
  const int n = cx.cfg.corrector.n;
  st.moduli.sigma = cx.cfg.sweep.sigma;
  st.moduli.rho = rho_table(cx.field, cx.cfg.rho.radii, rho_search(cx.cfg));
  CorrectorSet ref;
  double box = 0.0;
  if (cx.field.period_lattice() && cx.cfg.corrector.box <= 0.0) {
    st.effective = exact_periodic_cell(cx.field, n, &ref, cx.copts());
  } else {
    box = cx.cfg.corrector.box > 0.0 ? cx.cfg.corrector.box : default_box_side(cx.field, 4.0 * tmax);
    ref = solve_corrector(cx.field, 4.0 * tmax, box, n, cx.copts());
  }
  std::vector<double> sorted = Ts;
  std::sort(sorted.begin(), sorted.end());
  std::vector<CorrectorSet> sets(sorted.size());
  parallel_for(sorted.size(), [&](std::size_t i) { sets[i] = solve_corrector(cx.field, sorted[i], box, n, cx.copts()); });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    st.moduli.psi_T.push_back(sorted[i]);
    st.moduli.psi_values.push_back(psi_distance(sets[i], ref));
  }
  if (!cx.field.period_lattice() || cx.cfg.corrector.box > 0.0) {
    st.effective = effective_tensor(cx.field, sets.back());
    res.warnings.push_back("u_0 uses the approximate-corrector tensor at T=" + format_number(sorted.back()));
  }
  tabulate_moduli(st.moduli, sorted, cx.cfg.sweep.epsilon);
  return st;
}

inline void write_moduli(const Context& cx, const ModulusTable& mt) {
  CsvWriter th(cx.out / "theta.csv", "T,theta");
  for (std::size_t k = 0; k < mt.theta_T.size(); ++k) th.row(mt.theta_T[k], mt.theta_values[k]);
  CsvWriter om(cx.out / "omega.csv", "epsilon,omega");
  for (std::size_t k = 0; k < mt.omega_eps.size(); ++k) om.row(mt.omega_eps[k], mt.omega_values[k]);
  CsvWriter ps(cx.out / "psi.csv", "T,psi");
  for (std::size_t k = 0; k < mt.psi_T.size(); ++k) ps.row(mt.psi_T[k], mt.psi_values[k]);
}

inline RunResult run_rate(const Context& cx) {
  RunResult res;
  const RateSetup st = rate_setup(cx, res);
  write_moduli(cx, st.moduli);
  const RateReport rep = rate_sweep(cx.bvp(), cx.cfg.sweep.epsilon, st.moduli, st.effective.entries, cx.cfg.sweep.sigma);
  CsvWriter csv(cx.out / "rate.csv", "epsilon,h,l2_error,omega,theory_ratio");
  for (const auto& r : rep.rows) csv.row(r.epsilon, r.h, r.l2_error, r.omega, r.theory_ratio);
  res.warnings.insert(res.warnings.end(), rep.warnings.begin(), rep.warnings.end());
  res.details["mode"] = to_string(rep.mode);
  res.details["slope"] = num(rep.slope);
  res.details["ratio_spread"] = num(rep.ratio_spread);
  res.details["degenerate"] = rep.degenerate;
  res.details["monotone_errors"] = rep.monotone_errors;
  const double limit = cx.cfg.sweep.ratio_limit;
  if (rep.degenerate) {
    res.pass["errors_at_solver_tolerance"] = true;
  } else if (rep.mode == BoundaryKind::dirichlet) {
    res.pass["slope"] = rep.slope >= cx.cfg.sweep.slope_threshold;
    res.pass["ratio_bounded"] = rep.ratio_spread <= limit;
  } else {
    res.pass["monotone_errors"] = rep.monotone_errors;
    res.pass["ratio_bounded"] = rep.ratio_spread <= limit;
  }
  return res;
}

inline RunResult probe_result(const Context& cx, const ProbeTable& t, const std::string& file) {
  RunResult res;
  CsvWriter csv(cx.out / file, "epsilon,ratio");
  std::vector<double> ratios;
  for (const auto& r : t.rows) {
    csv.row(r.epsilon, r.ratio);
    ratios.push_back(r.ratio);
  }
  const double sp = spread(ratios);
  res.details["max_ratio"] = num(t.max_ratio);
  res.details["ratio_spread"] = num(sp);
  res.pass["uniform_in_epsilon"] = sp <= cx.cfg.probe.ratio_limit;
  return res;
}

inline RunResult run_flatness(const Context& cx) {
  RunResult res;
  const auto& eps = cx.cfg.sweep.epsilon;
  const auto sols = solve_sweep(cx.bvp(), eps);
  const auto& center = cx.cfg.probe.center;
  CsvWriter ex(cx.out / "excess.csv", "epsilon,t,normalized_excess");
  std::vector<double> consts;
  nlohmann::json per_eps = nlohmann::json::array();
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const auto prof = flatness_profile(sols[i], eps[i], cx.cfg.probe.theta, cx.cfg.probe.K, center);
    CsvWriter csv(cx.out / ("flatness_" + std::to_string(i) + ".csv"), "j,r,F,p,contraction");
    for (const auto& r : prof.rows) csv.row(r.j, r.r, r.F, r.p, r.contraction);
    for (const auto& w : prof.warnings) res.warnings.push_back("epsilon " + format_number(eps[i]) + ": " + w);
    // (1/t) inf_q excess on dyadic t from 1/4 down to 2 eps, against K + |u|_{L2(B_1)}
    const double unorm = l2_avg_ball(sols[i], center, 1.0);
    double worst = 0.0;
    for (double t = 0.25; t >= 2.0 * eps[i] * (1.0 - 1e-12); t *= 0.5) {
      const double v = constant_excess(sols[i], center, t);
      ex.row(eps[i], t, v);
      worst = std::max(worst, v);
    }
    const double c = worst / (cx.cfg.probe.K + unorm);
    consts.push_back(c);
    per_eps.push_back({{"epsilon", eps[i]}, {"excess_constant", num(c)}, {"levels", prof.rows.size()}});
  }
  res.details["profiles"] = per_eps;
  const double sp = spread(consts);
  res.details["constant_spread"] = num(sp);
  res.pass["excess_uniform"] = sp <= cx.cfg.probe.ratio_limit;
  return res;
}

inline RunResult run_lemma_fuzz(const Context& cx) {
  RunResult res;
  const int count = cx.flags.count ? *cx.flags.count : cx.cfg.lemma.count;
  if (count < 1) throw ValidationError("lemma-fuzz: count must be >= 1");
  std::mt19937_64 rng(cx.flags.seed);
  std::uniform_int_distribution<int> len(cx.cfg.lemma.min_length, cx.cfg.lemma.max_length);
  CsvWriter csv(cx.out / "lemma.csv", "case,C0,C1,length,hypotheses_ok,conclusions_ok,tamper_detected,witness_c");
  nlohmann::json corpus = nlohmann::json::array();
  long violations = 0, hyp_fail = 0, missed = 0;
  for (std::size_t c = 0; c < cx.cfg.lemma.C0.size(); ++c) {
    const double C0 = cx.cfg.lemma.C0[c], C1 = cx.cfg.lemma.C1[c];
    for (int k = 0; k < count; ++k) {
      const LemmaInstance inst = generate_lemma_instance(rng, C0, C1, static_cast<std::size_t>(len(rng)));
      const LemmaReport rep = lemma_check(inst);
      LemmaInstance bad = inst;
      bad.F[5] *= 10.0;
      const LemmaReport brep = lemma_check(bad);
      const bool detected = !brep.hypotheses_ok && brep.first_violation == 4;
      violations += rep.conclusions_ok ? 0 : 1;
      hyp_fail += rep.hypotheses_ok ? 0 : 1;
      missed += detected ? 0 : 1;
      csv.row(static_cast<int>(c), C0, C1, inst.length(), rep.hypotheses_ok, rep.conclusions_ok, detected, rep.witness_c);
      if (k < 8) corpus.push_back(inst);
    }
  }
  std::ofstream(cx.out / "lemma_corpus.json") << corpus.dump(1) << '\n';
  res.details["conclusion_violations"] = violations;
  res.details["hypothesis_failures"] = hyp_fail;
  res.details["tamper_missed"] = missed;
  res.pass["conclusions"] = violations == 0;
  res.pass["hypotheses"] = hyp_fail == 0;
  res.pass["tamper_detected"] = missed == 0;
  return res;
}

inline RunResult dispatch(const std::string& command, const Context& cx) {
  const Config& c = cx.cfg;
  if (command == "corrector") return run_corrector(cx);
  if (command == "homogenize") return run_homogenize(cx);
  if (command == "rho") return run_rho(cx);
  if (command == "rate") return run_rate(cx);
  if (command == "lipschitz")
    return probe_result(cx, lipschitz_probe(cx.bvp(), c.sweep.epsilon, c.probe.center, c.probe.r), "lipschitz.csv");
  if (command == "w1p")
    return probe_result(cx, w1p_probe(cx.bvp(), c.sweep.epsilon, c.probe.p, c.probe.center, c.probe.r), "w1p.csv");
  if (command == "boundary") {
    // the half ball sits on the lower edge of the probe axis
    std::vector<double> center = c.probe.center;
    center[static_cast<std::size_t>(c.probe.axis)] = c.grid.origin[static_cast<std::size_t>(c.probe.axis)];
    return probe_result(cx, boundary_lipschitz_probe(cx.bvp(), c.sweep.epsilon, center, c.probe.r, c.probe.axis),
                        "boundary.csv");
  }
  if (command == "flatness") return run_flatness(cx);
  if (command == "lemma-fuzz") return run_lemma_fuzz(cx);
  throw ValidationError("unknown command '" + command + "'");
}

}  // namespace detail

/// Runs one command on an already loaded config. Returns the process exit code:
/// 0 ok, 1 validation failure, 2 solver failure, 3 failed pass flag under --strict.
inline int run(const std::string& command, const Config& cfg, const RunFlags& flags, std::ostream& log = std::cerr) {
  try {
    if (std::find(command_names().begin(), command_names().end(), command) == command_names().end())
      throw ValidationError("unknown command '" + command + "'");
    cfg.validate();
    const std::filesystem::path out = flags.out ? std::filesystem::path(*flags.out) : std::filesystem::path(cfg.output_dir);
    std::filesystem::create_directories(out);
    detail::Context cx{cfg, flags, out, cfg.tensor_field()};

    const auto t0 = std::chrono::steady_clock::now();
    const RunResult res = detail::dispatch(command, cx);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    bool all = true;
    for (const auto& [name, ok] : res.pass) all = all && ok;
    nlohmann::json summary = {{"command", command},
                              {"config_hash", detail::config_hash(cfg)},
                              {"wall_time_s", wall},
                              {"pass", res.pass},
                              {"all_pass", all},
                              {"details", res.details},
                              {"warnings", res.warnings}};
    std::ofstream(out / "summary.json") << summary.dump(2) << '\n';
    nlohmann::json stamp = {{"seed", flags.seed},
                            {"tol", cfg.sweep.tol},
                            {"sigma", cfg.sweep.sigma},
                            {"threads", thread_count()},
                            {"override_resolution", flags.override_resolution},
                            {"versions",
                             {{"homoglab", kVersion},
                              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                            "." + std::to_string(EIGEN_MINOR_VERSION)},
                              {"compiler", __VERSION__},
                              {"cplusplus", __cplusplus}}}};
    std::ofstream(out / "stamp.json") << stamp.dump(2) << '\n';
    for (const auto& w : res.warnings) log << "warning: " << w << '\n';
    for (const auto& [name, ok] : res.pass) log << command << ": " << name << (ok ? " ok" : " FAILED") << '\n';
    return flags.strict && !all ? 3 : 0;
  } catch (const SolverError& e) {
    log << "solver error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    log << "validation error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return 1;
  }
}

/// Loads the config file, then runs the command.
inline int run(const std::string& command, const std::filesystem::path& config_path, const RunFlags& flags,
               std::ostream& log = std::cerr) {
  Config cfg;
  try {
    cfg = load_config(config_path);
  } catch (const std::exception& e) {
    log << "validation error: " << e.what() << '\n';
    return 1;
  }
  return run(command, cfg, flags, log);
}

}  // namespace homoglab
