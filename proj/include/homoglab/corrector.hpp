#pragma once

// Approximate correctors chi_T solving
//   -div(A grad chi) + T^-2 chi = div(A grad P_j^beta),   P_j^beta(y) = y_j e^beta,
// on a periodic computational box, and the bounds measured on them.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "homoglab/error.hpp"
#include "homoglab/field.hpp"
#include "homoglab/grid.hpp"
#include "homoglab/krylov.hpp"
#include "homoglab/norms.hpp"
#include "homoglab/operator.hpp"
#include "homoglab/parallel.hpp"

namespace homoglab {

struct CorrectorSet {
  double T = 1.0;              ///< +infinity for the exact cell corrector
  TensorField field;           ///< coefficient actually solved (periodized)
  Grid box;
  std::vector<GridFunction> chi;       ///< column j*m + beta, m components each
  std::vector<GridFunction> grad_chi;  ///< column j*m + beta, m*d components each
  std::vector<double> residuals;
  double periodization_error = 0.0;
  std::vector<std::string> warnings;

  int dim() const noexcept { return field.dim(); }
  int systems() const noexcept { return field.systems(); }
  const GridFunction& column(int j, int beta) const { return chi[static_cast<std::size_t>(j * systems() + beta)]; }
  const GridFunction& grad_column(int j, int beta) const { return grad_chi[static_cast<std::size_t>(j * systems() + beta)]; }
};

struct CorrectorOptions {
  double tol = kDefaultTol;
  std::size_t max_iter = 0;
  bool override_resolution = false;
};

/// max(2 pi T, 64 * 2 pi / min|w|); the recommended box for non-periodic fields.
inline double default_box_side(const TensorField& field, double T) {
  const double two_pi = 2.0 * std::numbers::pi;
  double side = two_pi * T;
  const double wmin = field.min_frequency();
  if (wmin > 0.0) side = std::max(side, 64.0 * two_pi / wmin);
  return side;
}

namespace detail {

/// True when the field's period lattice tiles a cube of this side exactly.
inline bool box_is_period_multiple(const TensorField& field, double side) {
  if (!field.period_lattice()) return false;
  for (double p : *field.period_lattice()) {
    const double k = side / p;
    if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k)) return false;
  }
  return true;
}

inline CorrectorSet solve_columns(CorrectorSet cs, double zero_order, const CorrectorOptions& opts) {
  const int d = cs.dim();
  const int m = cs.systems();
  auto op = assemble(cs.field, cs.box, 1.0, zero_order, BoundaryKind::periodic, {opts.override_resolution});
  const auto cols = static_cast<std::size_t>(d * m);
  cs.chi.assign(cols, GridFunction());
  cs.grad_chi.assign(cols, GridFunction());
  cs.residuals.assign(cols, 0.0);
  parallel_for(cols, [&](std::size_t c) {
    const int j = static_cast<int>(c) / m;
    const int beta = static_cast<int>(c) % m;
    Eigen::VectorXd b = constant_gradient_rhs(cs.field, cs.box, 1.0, j, beta);
    SolveStats st;
    Eigen::VectorXd u = solve_stiffness(op, b, nullptr, {opts.tol, opts.max_iter}, &st);
    // Mean-zero representative. With a zero-order term the mean already vanishes up
    // to roundoff since the rhs sums to zero.
    detail::weighted_mean_zero(u, op.mass, m);
    GridFunction f(cs.box, m, std::vector<double>(u.data(), u.data() + u.size()));
    cs.grad_chi[c] = gradient(f);
    cs.chi[c] = std::move(f);
    cs.residuals[c] = st.residual;
  });
  return cs;
}

}  // namespace detail

/// Solves the approximate corrector equation for every (j, beta).
/// box_side <= 0 selects the default box: one period cell (per axis) for fields with a
/// period lattice, otherwise default_box_side() with frequencies periodized.
inline CorrectorSet solve_corrector(const TensorField& field, double T, double box_side, int n,
                                    const CorrectorOptions& opts = {}) {
  if (!(T >= 1.0)) throw ValidationError("solve_corrector: T must be >= 1");
  CorrectorSet cs;
  cs.T = T;
  if (box_side <= 0.0 && field.period_lattice()) {
    cs.field = field;
    cs.box = Grid::periodic_box(*field.period_lattice(), n);
  } else {
    if (box_side <= 0.0) box_side = default_box_side(field, T);
    if (detail::box_is_period_multiple(field, box_side)) {
      cs.field = field;
    } else {
      auto [pf, err] = field.periodized(box_side);
      cs.field = std::move(pf);
      cs.periodization_error = err;
      if (box_side < 2.0 * std::numbers::pi * T)
        cs.warnings.push_back("box side " + std::to_string(box_side) + " is below 2*pi*T = " +
                              std::to_string(2.0 * std::numbers::pi * T));
      if (err > 1.0 / box_side)
        cs.warnings.push_back("periodization error " + std::to_string(err) + " exceeds 1/boxSide");
    }
    cs.box = Grid::periodic_box(field.dim(), box_side, n);
  }
  return detail::solve_columns(std::move(cs), 1.0 / (T * T), opts);
}

/// Exact periodic cell corrector (T = infinity) on one period cell, mean-zero.
inline CorrectorSet solve_cell_corrector(const TensorField& field, int n, const CorrectorOptions& opts = {}) {
  if (!field.period_lattice()) throw ValidationError("exact cell problem needs a period lattice");
  CorrectorSet cs;
  cs.T = std::numeric_limits<double>::infinity();
  cs.field = field;
  cs.box = Grid::periodic_box(*field.period_lattice(), n);
  return detail::solve_columns(std::move(cs), 0.0, opts);
}

struct CorrectorBounds {
  double sup_over_T = 0.0;    ///< T^-1 ||chi_T||_inf
  double lipschitz = 0.0;     ///< ||grad chi_T||_inf (node max of the Frobenius norm)
  double energy = 0.0;        ///< max over columns of <|grad chi|^2 + T^-2 |chi|^2>
  double energy_bound = 0.0;  ///< mu^-2 ||A||^2
  double holder_ratio = 0.0;  ///< sampled sup |chi(x)-chi(y)| / (T^{1-sigma} |x-y|^sigma)
};

inline CorrectorBounds corrector_bounds(const CorrectorSet& cs, double sigma, std::uint64_t seed = 0,
                                        int pair_count = 10000) {
  if (!(sigma > 0.0 && sigma < 1.0)) throw ValidationError("corrector_bounds: sigma must lie in (0,1)");
  CorrectorBounds b;
  const Grid& g = cs.box;
  const int d = g.dim();
  const std::size_t nn = g.node_count();
  const double tinv = std::isinf(cs.T) ? 0.0 : 1.0 / cs.T;

  double chimax = 0.0;
  for (const auto& c : cs.chi) chimax = std::max(chimax, lp_norm(c, INFINITY));
  b.sup_over_T = tinv * chimax;

  for (std::size_t k = 0; k < nn; ++k) {
    double s = 0.0;
    for (const auto& gc : cs.grad_chi)
      for (double v : gc.node_values(k)) s += v * v;
    b.lipschitz = std::max(b.lipschitz, std::sqrt(s));
  }

  for (std::size_t c = 0; c < cs.chi.size(); ++c) {
    double e = 0.0;
    for (std::size_t k = 0; k < nn; ++k) {
      double s = 0.0;
      for (double v : cs.grad_chi[c].node_values(k)) s += v * v;
      for (double v : cs.chi[c].node_values(k)) s += tinv * tinv * v * v;
      e += g.weight(k) * s;
    }
    b.energy = std::max(b.energy, e / g.volume());
  }
  const double anorm = cs.field.operator_norm_bound();
  b.energy_bound = anorm * anorm / (cs.field.mu() * cs.field.mu());

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, nn - 1);
  const double tfac = std::isinf(cs.T) ? 1.0 : std::pow(cs.T, 1.0 - sigma);
  for (int s = 0; s < pair_count; ++s) {
    const std::size_t p = pick(rng);
    std::size_t q = pick(rng);
    if (q == p) q = (q + 1) % nn;
    double dist2 = 0.0;
    for (int i = 0; i < d; ++i) {
      double dx = std::abs(g.coord(p, i) - g.coord(q, i));
      dx = std::min(dx, g.side()[static_cast<std::size_t>(i)] - dx);  // minimum image
      dist2 += dx * dx;
    }
    const double denom = tfac * std::pow(std::sqrt(dist2), sigma);
    for (const auto& c : cs.chi)
      for (int a = 0; a < c.components; ++a) b.holder_ratio = std::max(b.holder_ratio, std::abs(c.at(p, a) - c.at(q, a)) / denom);
  }
  return b;
}

/// <|grad chi_ref - grad chi_T|>, the box mean of the pointwise Frobenius norm over all
/// (j, beta, alpha, k).
inline double psi_distance(const CorrectorSet& cs, const CorrectorSet& ref) {
  if (!cs.box.same_layout(ref.box) || cs.dim() != ref.dim() || cs.systems() != ref.systems())
    throw ValidationError("psi_distance: corrector sets live on different grids");
  if (&cs != &ref && !(ref.T >= 4.0 * cs.T))
    throw ValidationError("psi_distance: reference T must be at least 4*T");
  const Grid& g = cs.box;
  double s = 0.0;
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    double f = 0.0;
    for (std::size_t c = 0; c < cs.grad_chi.size(); ++c) {
      auto a = cs.grad_chi[c].node_values(k);
      auto r = ref.grad_chi[c].node_values(k);
      for (std::size_t i = 0; i < a.size(); ++i) f += (r[i] - a[i]) * (r[i] - a[i]);
    }
    s += g.weight(k) * std::sqrt(f);
  }
  return s / g.volume();
}

// ---------------------------------------------------------------------------
// Serialization: directory of chi_<j>_<beta>.hgf files plus manifest.json.

inline void save_corrector_set(const CorrectorSet& cs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json man;
  man["T"] = std::isinf(cs.T) ? nlohmann::json("inf") : nlohmann::json(cs.T);
  man["d"] = cs.dim();
  man["m"] = cs.systems();
  man["box"] = {{"origin", cs.box.origin()}, {"side", cs.box.side()}, {"cells", cs.box.cells()}};
  man["residuals"] = cs.residuals;
  man["periodizationError"] = cs.periodization_error;
  man["warnings"] = cs.warnings;
  nlohmann::json files = nlohmann::json::array();
  for (int j = 0; j < cs.dim(); ++j)
    for (int b = 0; b < cs.systems(); ++b) {
      const std::string name = "chi_" + std::to_string(j + 1) + "_" + std::to_string(b + 1) + ".hgf";
      write_hgf1((dir / name).string(), cs.column(j, b));
      files.push_back(name);
    }
  man["files"] = files;
  std::ofstream os(dir / "manifest.json");
  if (!os) throw Error("cannot write manifest in " + dir.string());
  os << man.dump(2) << "\n";
}

/// Reloads a saved set; `field` must be the coefficient that was solved.
inline CorrectorSet load_corrector_set(const std::filesystem::path& dir, const TensorField& field) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw ValidationError("missing manifest.json in " + dir.string());
  nlohmann::json man;
  try {
    is >> man;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad manifest: ") + e.what());
  }
  CorrectorSet cs;
  cs.T = man["T"].is_string() ? std::numeric_limits<double>::infinity() : man["T"].get<double>();
  cs.field = field;
  if (man["d"].get<int>() != field.dim() || man["m"].get<int>() != field.systems())
    throw ValidationError("manifest dimensions do not match field");
  const auto& box = man["box"];
  const auto origin = box["origin"].get<std::vector<double>>();
  cs.box = Grid(origin, box["side"].get<std::vector<double>>(), box["cells"].get<std::vector<int>>(),
                std::vector<bool>(origin.size(), true));
  cs.residuals = man["residuals"].get<std::vector<double>>();
  cs.periodization_error = man["periodizationError"].get<double>();
  cs.warnings = man["warnings"].get<std::vector<std::string>>();
  for (const auto& name : man["files"]) {
    auto f = to_grid_function(read_hgf1((dir / name.get<std::string>()).string()), cs.box);
    cs.grad_chi.push_back(gradient(f));
    cs.chi.push_back(std::move(f));
  }
  if (cs.chi.size() != static_cast<std::size_t>(field.dim() * field.systems()))
    throw ValidationError("manifest lists the wrong number of corrector files");
  return cs;
}

}  // namespace homoglab
