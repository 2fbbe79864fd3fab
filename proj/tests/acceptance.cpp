// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "homoglab/homoglab.hpp"

using namespace homoglab;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
const double kSqrt3 = std::sqrt(3.0);
const std::vector<double> kEps{1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
constexpr double kSigma = 0.9;

TensorField sine_1d() { return scalar_sine_field(1, 2.0, {{1.0, 1.0}}, 1.0 / 3.0, 0, std::vector<double>{2 * kPi}); }

TensorField laminate() {
  return scalar_sine_field(2, 2.0, {{1.0, 1.0}}, 1.0 / 3.0, 0, std::vector<double>{2 * kPi, 2 * kPi});
}

TensorField checkerboard() {
  Mode a, b;
  a.freq = {1.0, -1.0};
  a.cos_amp = CoefTensor::isotropic(2, 1, 0.75);
  a.sin_amp = CoefTensor(2, 1);
  b.freq = {1.0, 1.0};
  b.cos_amp = CoefTensor::isotropic(2, 1, -0.75);
  b.sin_amp = CoefTensor(2, 1);
  return TensorField(CoefTensor::isotropic(2, 1, 2.5), {a, b}, 0.25, std::vector<double>{2 * kPi, 2 * kPi});
}

TensorField quasi_periodic() { return scalar_sine_field(1, 2.0, {{0.5, 1.0}, {0.5, std::sqrt(2.0)}}, 1.0 / 3.0); }

CorrectorOptions fine_1d() { return {1e-8, 0, false}; }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [" << what << "]";
    }
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

int failures = 0;

void criterion(int id, double budget_s, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.require(secs < budget_s, "runtime " + fmt(secs) + "s over " + fmt(budget_s) + "s");
  if (!o.pass) ++failures;
  std::printf("AC%d %s (%.1fs)%s\n", id, o.pass ? "PASS" : "FAIL", secs, o.detail.str().c_str());
  std::fflush(stdout);
}

BVPSpec unit_square(const TensorField& f, int n) {
  BVPSpec s;
  s.field = f;
  s.n = n;
  s.dirichlet = [](std::span<const double> x, std::span<double> o) { o[0] = std::sin(kPi * x[0]) * std::exp(x[1]); };
  return s;
}

BVPSpec unit_square_neumann(const TensorField& f, int n) {
  BVPSpec s = unit_square(f, n);
  s.bc = BoundaryKind::neumann;
  s.dirichlet = nullptr;
  s.neumann = [](std::span<const double> x, std::span<const double>, std::span<double> o) {
    o[0] = std::cos(kPi * x[1]) * (2 * x[0] - 1);
  };
  return s;
}

// Moduli for the periodic laminate: rho on a short radius list, psi against the cell corrector.
ModulusTable laminate_moduli(CoefTensor& effective) {
  const auto f = laminate();
  RhoSearch rs;
  rs.domain_radius = 10;
  rs.window_step = 0.5;
  rs.y_samples = 16;
  ModulusTable mt;
  mt.sigma = kSigma;
  mt.rho = rho_table(f, {0.5, 1, 2, 4, 8, 16, 32, 64, 128}, rs);
  CorrectorSet ref;
  effective = exact_periodic_cell(f, 128, &ref).entries;
  for (double T : {8.0, 16.0, 32.0, 64.0, 128.0, 256.0}) {
    mt.psi_T.push_back(T);
    mt.psi_values.push_back(psi_distance(solve_corrector(f, T, 0.0, 128), ref));
  }
  return mt;
}

void check_rate(Outcome& o, const RateReport& rep, bool need_slope) {
  o.require(rep.rows.size() == kEps.size(), "sweep rows " + std::to_string(rep.rows.size()));
  o.require(!rep.degenerate, "degenerate modulus");
  if (need_slope) o.require(rep.slope >= 0.6, "slope " + fmt(rep.slope));
  o.require(rep.ratio_spread <= 4.0, "ratio spread " + fmt(rep.ratio_spread));
  o.detail << " slope=" << fmt(rep.slope) << " spread=" << fmt(rep.ratio_spread);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kCliConfig = R"(
[field]
dim = 2
mu = 0.3333333333333333
mean = iso 2
mode = freq 1 0 ; sin iso 1
period = 6.283185307179586 6.283185307179586
[grid]
origin = -1 -1
side = 2 2
n = 64
[sweep]
epsilon = 0.1, 0.08, 0.0625, 0.05
T = 8 16 32 64 128
[bc]
kind = dirichlet
f = sin(3.141592653589793*x1)*exp(x2)
[probe]
center = 0 0
r = 0.2
[rho]
radii = 0.5 1 2 4 8
y_samples = 16
domain_radius = 10
window_step = 0.5
[corrector]
n = 16
[lemma]
count = 200
)";

}  // namespace

int main() {
  criterion(1, 10.0, [](Outcome& o) {
    const auto f = TensorField::constant(2, 1, 1.5, 0.5);
    const auto cs = solve_corrector(f, 8.0, 0.0, 32);
    double chi = 0.0;
    for (const auto& c : cs.chi) chi = std::max(chi, lp_norm(c, INFINITY));
    o.require(chi <= 1e-10, "chi " + fmt(chi));
    const auto eff = effective_tensor(f, cs);
    double dev = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) dev = std::max(dev, std::abs(eff.entries(i, j, 0, 0) - (i == j ? 1.5 : 0.0)));
    o.require(dev <= 1e-10, "effective " + fmt(dev));
    ModulusTable mt;
    mt.rho = rho_table(f, {0.5, 1.0, 2.0, 4.0});
    for (double v : mt.rho.values) o.require(v == 0.0, "rho " + fmt(v));
    mt.psi_T = {8, 16, 32, 64, 128, 256};
    mt.psi_values.assign(6, 0.0);
    const auto rep = rate_sweep(unit_square(f, 64), kEps, mt, eff.entries, kSigma);
    double worst = 0.0;
    for (const auto& r : rep.rows) worst = std::max(worst, r.l2_error);
    o.require(rep.rows.size() == 4, "sweep rows");
    o.require(worst <= 2.0 * kDefaultTol, "rate error " + fmt(worst));
    o.detail << " chi=" << fmt(chi) << " dA=" << fmt(dev) << " err=" << fmt(worst);
  });

  criterion(2, 60.0, [](Outcome& o) {
    const auto f = sine_1d();
    const double approx = effective_tensor(f, solve_corrector(f, 512.0, 0.0, 8192, fine_1d())).entries(0, 0, 0, 0);
    const double exact = exact_periodic_cell(f, 4096, nullptr, fine_1d()).entries(0, 0, 0, 0);
    o.require(std::abs(approx - kSqrt3) <= 1e-4, "T=512 " + fmt(approx));
    o.require(std::abs(exact - kSqrt3) <= 1e-6, "cell " + fmt(exact));

    const double eps = 1.0 / 16;
    const int n = 16 * 128;
    BVPSpec s;
    s.field = f;
    s.epsilon = eps;
    s.origin = {0.0};
    s.side = {1.0};
    s.n = n;
    s.tol = 1e-12;
    s.dirichlet = [](std::span<const double> x, std::span<double> out) { out[0] = x[0] > 0.5 ? 1.0 : 0.0; };
    const auto u = solve_bvp(s);
    // u(x) = int_0^x 1/a / int_0^1 1/a, by composite Simpson on each cell
    const int sub = 64;
    std::vector<double> cum(static_cast<std::size_t>(n) + 1, 0.0);
    auto inv_a = [&](double x) { return 1.0 / (2.0 + std::sin(x / eps)); };
    for (int i = 0; i < n; ++i) {
      const double a = static_cast<double>(i) / n, hh = 1.0 / n / sub;
      double acc = 0.0;
      for (int j = 0; j < sub; ++j) {
        const double x0 = a + j * hh;
        acc += hh / 6.0 * (inv_a(x0) + 4.0 * inv_a(x0 + 0.5 * hh) + inv_a(x0 + hh));
      }
      cum[static_cast<std::size_t>(i) + 1] = cum[static_cast<std::size_t>(i)] + acc;
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < u.grid.node_count(); ++k) worst = std::max(worst, std::abs(u.at(k, 0) - cum[k] / cum.back()));
    o.require(worst <= 1e-6, "u_eps max error " + fmt(worst));
    o.detail << " a_T=" << fmt(approx - kSqrt3) << " a_cell=" << fmt(exact - kSqrt3) << " u=" << fmt(worst);
  });

  criterion(3, 300.0, [](Outcome& o) {
    const auto e = exact_periodic_cell(laminate(), 512);
    const double d11 = e.entries(0, 0, 0, 0) - kSqrt3, d22 = e.entries(1, 1, 0, 0) - 2.0;
    const double off = std::max(std::abs(e.entries(0, 1, 0, 0)), std::abs(e.entries(1, 0, 0, 0)));
    o.require(std::abs(d11) <= 1e-3 && std::abs(d22) <= 1e-3 && off <= 1e-3, "laminate entries");
    std::vector<double> v;
    for (int n : {128, 256, 512}) v.push_back(exact_periodic_cell(checkerboard(), n).entries(0, 0, 0, 0));
    const double order = std::log2((v[0] - v[1]) / (v[1] - v[2]));
    o.require(order >= 1.8, "order " + fmt(order));
    o.detail << " d11=" << fmt(d11) << " d22=" << fmt(d22) << " order=" << fmt(order);
  });

  CoefTensor eff;
  ModulusTable mt;
  try {
    mt = laminate_moduli(eff);
  } catch (const std::exception& e) {
    std::printf("moduli setup failed: %s\n", e.what());
  }

  criterion(4, 600.0, [&](Outcome& o) {
    check_rate(o, rate_sweep(unit_square(laminate(), 512), kEps, mt, eff, kSigma), true);
  });

  criterion(5, 600.0, [&](Outcome& o) {
    const auto rep = rate_sweep(unit_square_neumann(laminate(), 512), kEps, mt, eff, kSigma);
    check_rate(o, rep, false);
    o.require(rep.monotone_errors, "errors not monotone");
  });

  criterion(6, 600.0, [](Outcome& o) {
    const std::vector<double> c{0.5, 0.5}, b{0.5, 0.0};
    const auto d = unit_square(laminate(), 512);
    const auto interior = lipschitz_probe(d, kEps, c, 0.2);
    const auto bd = boundary_lipschitz_probe(d, kEps, b, 0.2);
    const auto bn = boundary_lipschitz_probe(unit_square_neumann(laminate(), 512), kEps, b, 0.2);
    o.require(interior.max_ratio <= 3.0, "interior " + fmt(interior.max_ratio));
    o.require(bd.max_ratio <= 3.0, "dirichlet edge " + fmt(bd.max_ratio));
    o.require(bn.max_ratio <= 3.0, "neumann edge " + fmt(bn.max_ratio));
    o.detail << " interior=" << fmt(interior.max_ratio) << " dirichlet=" << fmt(bd.max_ratio)
             << " neumann=" << fmt(bn.max_ratio);
  });

  criterion(7, 600.0, [](Outcome& o) {
    std::vector<double> lip, sup;
    for (double T : {8.0, 32.0, 128.0}) {
      const auto b = corrector_bounds(solve_corrector(quasi_periodic(), T, 0.0, 2048, fine_1d()), 0.5);
      o.require(b.energy <= b.energy_bound, "energy at T=" + fmt(T));
      lip.push_back(b.lipschitz);
      sup.push_back(b.sup_over_T);
    }
    for (const auto& f : {sine_1d(), laminate()}) {
      const auto b = corrector_bounds(solve_corrector(f, 16.0, 0.0, f.dim() == 1 ? 512 : 64), 0.5);
      o.require(b.energy <= b.energy_bound, "energy periodic");
    }
    const double lip_ratio = *std::max_element(lip.begin(), lip.end()) / *std::min_element(lip.begin(), lip.end());
    o.require(lip_ratio <= 2.0, "lipschitz spread " + fmt(lip_ratio));
    for (std::size_t k = 1; k < sup.size(); ++k) o.require(sup[k] <= 1.05 * sup[k - 1], "sup/T grows");
    o.detail << " lip_spread=" << fmt(lip_ratio) << " sup/T=" << fmt(sup[0]) << "," << fmt(sup[1]) << "," << fmt(sup[2]);
  });

  criterion(8, 10.0, [](Outcome& o) {
    std::mt19937_64 rng(2024);
    int violations = 0, bad = 0, missed = 0;
    for (auto [C0, C1] : {std::pair{1.0, 1.0}, std::pair{2.0, 0.5}, std::pair{5.0, 3.0}})
      for (int i = 0; i < 1000; ++i) {
        auto in = generate_lemma_instance(rng, C0, C1, 6 + static_cast<std::size_t>(i % 35));
        const auto rep = lemma_check(in);
        bad += !rep.hypotheses_ok;
        violations += !rep.conclusions_ok;
        in.F[5] *= 10.0;
        missed += lemma_check(in).hypotheses_ok;
      }
    o.require(bad == 0, "hypotheses " + std::to_string(bad));
    o.require(violations == 0, "violations " + std::to_string(violations));
    o.require(missed == 0, "undetected tampering " + std::to_string(missed));
    o.detail << " instances=3000 violations=" << violations << " undetected=" << missed;
  });

  criterion(9, 600.0, [](Outcome& o) {
    auto disk = [](const TensorField& f, double eps, int n) {
      BVPSpec s;
      s.field = f;
      s.epsilon = eps;
      s.origin = {-1.0, -1.0};
      s.side = {2.0, 2.0};
      s.n = n;
      s.dirichlet = [](std::span<const double> x, std::span<double> out) { out[0] = std::exp(x[0]) * std::cos(x[1]) + x[1]; };
      return s;
    };
    const auto aniso =
        TensorField(CoefTensor::from_values(2, 1, {2.0, 0.3, 0.3, 1.0}), {}, 0.3, std::vector<double>{2 * kPi, 2 * kPi});
    auto s = disk(aniso, 1.0, 256);
    s.tol = 1e-12;
    const auto prof = flatness_profile(solve_bvp(s), 0.01, 0.125, 0.0);
    double worst_c = 0.0;
    for (std::size_t j = 1; j < prof.rows.size(); ++j) worst_c = std::max(worst_c, prof.rows[j].contraction);
    o.require(prof.rows.size() >= 2, "profile too short");
    o.require(worst_c <= 0.5, "contraction " + fmt(worst_c));

    const std::vector<double> c{0.0, 0.0};
    std::vector<double> bound;
    for (double eps : {1.0 / 16, 1.0 / 64}) {
      const auto u = solve_bvp(disk(laminate(), eps, 512));
      double m = 0.0;
      for (double t = 0.25; t >= 2 * eps * (1 - 1e-12); t /= 2) m = std::max(m, constant_excess(u, c, t));
      bound.push_back(m / l2_avg_ball(u, c, 1.0));
    }
    const double ratio = std::max(bound[0], bound[1]) / std::min(bound[0], bound[1]);
    o.require(ratio <= 3.0, "cross-eps ratio " + fmt(ratio));
    o.detail << " contraction=" << fmt(worst_c) << " cross_eps=" << fmt(ratio);
  });

  criterion(10, 60.0, [](Outcome& o) {
    auto model = [](double N) { return [N](double t) { return std::pow(std::log(std::exp(1.0) / t), -N); }; };
    auto closed = [](double N, double p, double lower) {
      const double S = std::log(1.0 / lower), q = N * p;
      return q == 1.0 ? std::log1p(S) : (1.0 - std::pow(1.0 + S, 1.0 - q)) / (q - 1.0);
    };
    const double p = 2.0 / 3.0 - 0.05, lower = 1e-12;
    const auto conv = dini_integral(model(2.6), p, lower);
    const double ref = closed(2.6, p, lower);
    o.require(!conv.diverges, "N=2.6 flagged");
    o.require(std::abs(conv.value - ref) <= 0.01 * ref, "N=2.6 value " + fmt(conv.value) + " vs " + fmt(ref));
    const auto div = dini_integral(model(1.0), 1.0, lower);
    const double ref1 = closed(1.0, 1.0, lower);
    o.require(div.diverges, "N=1 not flagged");
    o.require(std::abs(div.value - ref1) <= 0.01 * ref1, "N=1 value " + fmt(div.value) + " vs " + fmt(ref1));
    o.detail << " conv=" << fmt(conv.value) << "/" << fmt(ref) << " div=" << fmt(div.value) << "/" << fmt(ref1);
  });

  criterion(11, 600.0, [](Outcome& o) {
    const fs::path dir = fs::temp_directory_path() / "homoglab_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path cfg = dir / "run.cfg";
    std::ofstream(cfg) << kCliConfig;
    int files = 0;
    for (const std::string cmd :
         {"corrector", "homogenize", "rho", "rate", "lipschitz", "w1p", "boundary", "flatness", "lemma-fuzz"}) {
      std::vector<fs::path> outs;
      for (const char* tag : {"a", "b"}) {
        RunFlags flags;
        flags.seed = 7;
        flags.out = (dir / (cmd + "_" + tag)).string();
        std::ostringstream log;
        const int code = run(cmd, cfg, flags, log);
        o.require(code == 0, cmd + " exit " + std::to_string(code));
        outs.emplace_back(*flags.out);
      }
      int here = 0;
      for (const auto& e : fs::directory_iterator(outs[0])) {
        if (e.path().extension() != ".csv") continue;
        ++here;
        const fs::path twin = outs[1] / e.path().filename();
        o.require(fs::exists(twin) && slurp(e.path()) == slurp(twin), cmd + "/" + e.path().filename().string() + " differs");
      }
      o.require(here > 0, cmd + " wrote no csv");
      files += here;
    }
    o.detail << " csv_pairs=" << files;
  });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
