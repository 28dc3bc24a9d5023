#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "linalg.hpp"
#include "moments.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "spectral.hpp"
#include "tolerances.hpp"

namespace noisereg {

struct GridSpec {
  std::string kind;  // "uniform", "log", "linear+log", ...
  double lo = 0.0;
  double hi = 0.0;
  std::size_t points = 0;
};

/// One falsifiable claim. pass == (observed <= asserted + tolerance); lower
/// bounds are stored negated so the same rule applies.
struct BoundReport {
  std::string claim_id;
  GridSpec grid;
  double observed = 0.0;
  double asserted = 0.0;
  double tolerance = 0.0;
  double margin = 0.0;  // asserted + tolerance - observed
  bool pass = false;
  nlohmann::json details = nlohmann::json::object();

  static BoundReport make(std::string id, GridSpec grid, double observed, double asserted, double tolerance,
                          nlohmann::json details = nlohmann::json::object()) {
    BoundReport r{std::move(id), std::move(grid), observed, asserted, tolerance, 0.0, false, std::move(details)};
    r.margin = asserted + tolerance - observed;
    r.pass = recompute(r);
    return r;
  }

  static bool recompute(const BoundReport& r) { return r.observed <= r.asserted + r.tolerance; }
};

inline void to_json(nlohmann::json& j, const GridSpec& g) {
  j = {{"kind", g.kind}, {"lo", g.lo}, {"hi", g.hi}, {"points", g.points}};
}

namespace detail {

// JSON has no infinities; they are written as strings.
inline nlohmann::json json_number(double x) {
  if (std::isfinite(x)) return x;
  return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const BoundReport& r) {
  j = {{"claim_id", r.claim_id},
       {"grid", r.grid},
       {"observed", detail::json_number(r.observed)},
       {"asserted", detail::json_number(r.asserted)},
       {"tolerance", r.tolerance},
       {"margin", detail::json_number(r.margin)},
       {"pass", r.pass},
       {"details", r.details}};
}

/// Patch boundary: |xi| >= 8 sigma^{-4/3} keeps the grid away from the
/// double root at xi = -4 sigma^{-4/3}. sigma = 0 uses 1.
inline double default_xi0(double sigma) {
  return sigma > 0.0 ? std::max(1.0, 8.0 * std::pow(sigma, -4.0 / 3.0)) : 1.0;
}

// ---------------------------------------------------------------------------
// spectral abscissa

/// Sorted grid on [-xi_abs_max, xi_abs_max]: uniform points plus log-spaced
/// points of both signs down to 1e-6, with 0 and the abscissa argmax added.
inline std::vector<double> lambda_grid(double sigma, std::size_t min_points = 100000, double xi_abs_max = 1e3) {
  std::vector<double> g;
  const std::size_t n_lin = min_points / 2 + 1;
  const std::size_t n_log = min_points / 4 + 1;
  g.reserve(n_lin + 2 * n_log + 2);
  for (std::size_t i = 0; i < n_lin; ++i)
    g.push_back(-xi_abs_max + 2.0 * xi_abs_max * static_cast<double>(i) / static_cast<double>(n_lin - 1));
  const double lo = -6.0, hi = std::log10(xi_abs_max);
  for (std::size_t i = 0; i < n_log; ++i) {
    const double x = std::pow(10.0, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_log - 1));
    g.push_back(x);
    g.push_back(-x);
  }
  g.push_back(0.0);
  if (sigma > 0.0) g.push_back(spectral_abscissa_bound(sigma).argmax_xi);
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

/// Max Re lambda_+ against 2 sigma^{-2/3}, argmax location, and Re lambda_+ <= 0 on xi <= 0.
inline std::vector<BoundReport> verify_lambda_bound(double sigma, std::span<const double> xi_grid) {
  const AbscissaBound ab = spectral_abscissa_bound(sigma);
  if (xi_grid.size() < 2) throw error(errc::invalid_argument, "lambda grid needs at least two points");
  const GridSpec spec{"linear+log", xi_grid.front(), xi_grid.back(), xi_grid.size()};

  double best = -std::numeric_limits<double>::infinity(), best_nonpos = best;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < xi_grid.size(); ++i) {
    const double re = mode_spectrum(xi_grid[i], sigma).lambda_plus.real();
    if (re > best) {
      best = re;
      arg = i;
    }
    if (xi_grid[i] <= 0.0) best_nonpos = std::max(best_nonpos, re);
  }
  const double left = arg > 0 ? xi_grid[arg] - xi_grid[arg - 1] : 0.0;
  const double right = arg + 1 < xi_grid.size() ? xi_grid[arg + 1] - xi_grid[arg] : 0.0;
  const double cell = std::max(left, right);

  std::vector<BoundReport> out;
  out.push_back(BoundReport::make("lambda.max", spec, best, ab.bound, tol::abscissa,
                                  {{"sigma", sigma}, {"argmax_xi", xi_grid[arg]}}));
  out.push_back(BoundReport::make("lambda.argmax", spec, std::abs(xi_grid[arg] - ab.argmax_xi), cell, 0.0,
                                  {{"sigma", sigma}, {"argmax_xi", xi_grid[arg]}, {"expected_xi", ab.argmax_xi}}));
  // the closed form -sigma^2 xi^2 / 4 holds only while gamma^2 + 16 xi < 0
  const double regime = -std::cbrt(64.0 / std::pow(sigma, 4.0));
  out.push_back(BoundReport::make("lambda.nonpositive", spec, best_nonpos, 0.0, 0.0,
                                  {{"sigma", sigma}, {"complex_delta_regime_lower_xi", regime}}));
  return out;
}

// ---------------------------------------------------------------------------
// large-|xi| coefficients

inline std::vector<double> log_grid(double lo, double hi, std::size_t points) {
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * static_cast<double>(i) /
                                       static_cast<double>(points - 1));
  return g;
}

/// For each coefficient ratio q(xi) |xi|^p, the smallest constant C on
/// +-[xi_min, xi_max] and the relative distance from its analytic limit at xi_max.
inline std::vector<BoundReport> verify_coefficient_bounds(double sigma, double xi_min, double xi_max,
                                                          std::size_t points = 2000) {
  if (!(sigma > 0.0)) throw error(errc::non_positive_sigma, "coefficient bounds need sigma > 0");
  if (!(xi_min >= 1.0) || !(xi_max > xi_min) || points < 2)
    throw error(errc::invalid_argument, "coefficient bounds need 1 <= xi_min < xi_max");

  struct Quantity {
    const char* id;
    int power;
    double limit;
  };
  const double s4 = std::pow(sigma, 4.0);
  const std::array<Quantity, 5> qs{{{"coef.inv_delta", 2, 2.0 / (sigma * sigma)},
                                    {"coef.lambda_minus", 0, 1.0},
                                    {"coef.lambda_minus_over_xi", 1, 1.0},
                                    {"coef.lambda_plus", 3, 16.0 / s4},
                                    {"coef.lambda_plus_over_xi", 4, 16.0 / s4}}};
  auto value = [](int which, const ModeEigenData& ed) {
    const double d = std::abs(ed.delta), ax = std::abs(ed.xi);
    switch (which) {
      case 0: return 1.0 / d;
      case 1: return std::abs(ed.lambda_minus) / d;
      case 2: return std::abs(ed.lambda_minus) / (ax * d);
      case 3: return std::abs(ed.lambda_plus) / d;
      default: return std::abs(ed.lambda_plus) / (ax * d);
    }
  };

  const std::vector<double> g = log_grid(xi_min, xi_max, points);
  const GridSpec spec{"log, both signs", xi_min, xi_max, 2 * points};
  std::vector<BoundReport> out;
  for (int w = 0; w < 5; ++w) {
    double c = 0.0, c_xi = 0.0, end_dev = 0.0;
    nlohmann::json at_end = nlohmann::json::object();
    for (double sign : {1.0, -1.0}) {
      for (double ax : g) {
        const ModeEigenData ed = mode_spectrum(sign * ax, sigma);
        const double r = value(w, ed) * std::pow(ax, qs[w].power);
        if (!(r <= c)) {  // also catches NaN / inf
          c = r;
          c_xi = sign * ax;
        }
        if (ax == g.back()) {
          end_dev = std::max(end_dev, std::abs(r - qs[w].limit) / qs[w].limit);
          at_end[sign > 0 ? "ratio_at_plus_xi_max" : "ratio_at_minus_xi_max"] = r;
        }
      }
    }
    const double observed = std::isfinite(c) ? end_dev : std::numeric_limits<double>::infinity();
    nlohmann::json details{{"sigma", sigma}, {"power", qs[w].power}, {"limit", qs[w].limit},
                           {"fitted_C", detail::json_number(c)}, {"argmax_xi", c_xi}};
    details.update(at_end);
    out.push_back(BoundReport::make(qs[w].id, spec, observed, 0.0, tol::coefficient_limit, std::move(details)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// coefficient control by F(0)

/// Deterministic family of cone-valid initial moments: (1,0,0), (0,0,1),
/// (1,1,1), (1,-1,1), then log-uniform m1, m3 in [1e-3, 1e3] with m2 uniform
/// inside the cone.
inline std::vector<MomentVector> moment_family(std::size_t n = 100, std::uint64_t seed = default_master_seed) {
  std::vector<MomentVector> f{{1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}, {1.0, 1.0, 1.0}, {1.0, -1.0, 1.0}};
  f.resize(std::min(f.size(), n));
  RandomStream rng(SeedPolicy{seed}, 0, 0);
  while (f.size() < n) {
    const double m1 = std::pow(10.0, -3.0 + 6.0 * rng.uniform());
    const double m3 = std::pow(10.0, -3.0 + 6.0 * rng.uniform());
    const double m2 = (2.0 * rng.uniform() - 1.0) * std::sqrt(m1 * m3);
    f.push_back({m1, m2, m3});
  }
  return f;
}

struct QFFit {
  double c = 0.0;
  double argmax_xi = 0.0;
  std::size_t argmax_sample = 0;
  std::size_t skipped = 0;  // samples with F(0) = 0
};

/// max (|q0| + |q+| + |q-|) / F(0) over |xi| >= xi0.
inline QFFit fit_qF(double sigma, std::span<const double> xi_grid, std::span<const MomentVector> family,
                    double xi0) {
  QFFit fit;
  for (double xi : xi_grid) {
    if (std::abs(xi) < xi0) continue;
    const ModeEigenData ed = mode_spectrum(xi, sigma);
    for (std::size_t j = 0; j < family.size(); ++j) {
      const double f0 = weighted_energy(family[j], xi);
      if (f0 == 0.0) {
        ++fit.skipped;
        continue;
      }
      const EigenCoefficients q = decompose_initial(family[j], ed);
      const double r = (std::abs(q.q0) + std::abs(q.q_plus) + std::abs(q.q_minus)) / f0;
      if (!(r <= fit.c)) {
        fit.c = r;
        fit.argmax_xi = xi;
        fit.argmax_sample = j;
      }
    }
  }
  return fit;
}

inline std::vector<double> refine_midpoints(std::span<const double> grid) {
  std::vector<double> g(grid.begin(), grid.end());
  std::sort(g.begin(), g.end());
  std::vector<double> out;
  out.reserve(2 * g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    out.push_back(g[i]);
    if (i + 1 < g.size()) out.push_back(0.5 * (g[i] + g[i + 1]));
  }
  return out;
}

inline BoundReport verify_qF_control(double sigma, std::span<const double> xi_grid,
                                     std::span<const MomentVector> family, double xi0) {
  for (const auto& m : family) require_moments(m);
  const QFFit coarse = fit_qF(sigma, xi_grid, family, xi0);
  const std::vector<double> fine_grid = refine_midpoints(xi_grid);
  const QFFit fine = fit_qF(sigma, fine_grid, family, xi0);
  const double change = std::abs(fine.c - coarse.c) / coarse.c;
  const double observed = std::isfinite(change) ? change : std::numeric_limits<double>::infinity();
  const auto [lo, hi] = std::minmax_element(xi_grid.begin(), xi_grid.end());
  return BoundReport::make("qF", GridSpec{"given", *lo, *hi, xi_grid.size()}, observed, 0.0, tol::qf_refinement,
                           {{"sigma", sigma},
                            {"xi0", xi0},
                            {"C", detail::json_number(coarse.c)},
                            {"C_refined", detail::json_number(fine.c)},
                            {"argmax_xi", coarse.argmax_xi},
                            {"argmax_sample", coarse.argmax_sample},
                            {"skipped_zero_F0", coarse.skipped},
                            {"samples", family.size()}});
}

// ---------------------------------------------------------------------------
// global constants

struct GlobalConstants {
  double C1 = 0.0;
  double C2 = 0.0;
  double xi0 = 0.0;
  double M = 0.0;
  double prefactor = 0.0;  // 2 * C_qF
  double C_qF = 0.0;
};

struct ValidationRecord {
  double worst_ratio = 0.0;  // max F(t) / (C1 e^{C2 t} F(0))
  double worst_t = 0.0;
  double worst_xi = 0.0;
  std::size_t worst_sample = 0;
  double growth_ratio_at_xi_max = 0.0;  // max over samples of F(T) / F(0) at the largest |xi|
  double xi_max = 0.0;
  std::size_t xi_points = 0;
  std::size_t t_points = 0;
  bool pass = false;
};

struct GlobalOptions {
  double xi_max = 1e3;
  std::size_t fit_points = 2001;  // uniform on [-xi_max, xi_max]
  std::size_t refinement = 10;
  std::size_t patch_points = 401;
  std::size_t fit_t_points = 64;
  std::size_t validation_t_points = 128;
  std::size_t family_size = 100;
  std::uint64_t seed = default_master_seed;
  unsigned workers = 1;
};

struct GlobalCertification {
  GlobalConstants constants;
  ValidationRecord validation;
  GridSpec fit_grid;
  GridSpec validation_grid;
  double sigma = 0.0;
  double horizon = 0.0;
};

class certification_failure : public error {
 public:
  explicit certification_failure(GlobalCertification record)
      : error(errc::certification_failure,
              "F(t) <= C1 e^{C2 t} F(0) violated by factor " + std::to_string(record.validation.worst_ratio) +
                  " at t = " + std::to_string(record.validation.worst_t) +
                  ", xi = " + std::to_string(record.validation.worst_xi)),
        record_(std::move(record)) {}

  const GlobalCertification& record() const { return record_; }

 private:
  GlobalCertification record_;
};

inline std::vector<double> uniform_grid(double lo, double hi, std::size_t points) {
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = points == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

/// ||W e^{tA} W^{-1}||_1 with W = diag(1, 1, <xi>^{-1}).
inline double weighted_transition_norm(const Matrix3& p, double xi) {
  const double w[3] = {1.0, 1.0, 1.0 / bracket(xi)};
  Matrix3 b;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b[i][j] = w[i] * p[i][j] / w[j];
  return norm1(b);
}

/// Checks F(t) <= C1 e^{C2 t} F(0) on the given (xi, t) grid for every family member.
inline ValidationRecord validate_global_constants(const GlobalConstants& k, double sigma,
                                                  std::span<const double> xi_grid, std::span<const double> t_grid,
                                                  std::span<const MomentVector> family, unsigned workers = 1) {
  struct Local {
    double ratio = 0.0, t = 0.0, growth = 0.0;
    std::size_t sample = 0;
  };
  std::vector<Local> per_xi(xi_grid.size());
  const double t_end = t_grid.empty() ? 0.0 : *std::max_element(t_grid.begin(), t_grid.end());
  parallel_for(xi_grid.size(), workers, [&](std::size_t i) {
    const double xi = xi_grid[i];
    const ModePropagator prop(xi, sigma);
    Local& loc = per_xi[i];
    for (double t : t_grid) {
      const Matrix3 p = prop.transition(t);
      const double envelope = k.C1 * std::exp(k.C2 * t);
      for (std::size_t j = 0; j < family.size(); ++j) {
        const double f0 = weighted_energy(family[j], xi);
        if (f0 == 0.0) continue;
        const double ft = weighted_energy(ModePropagator::apply(p, family[j]), xi);
        const double r = ft / (envelope * f0);
        if (!(r <= loc.ratio)) {
          loc.ratio = r;
          loc.t = t;
          loc.sample = j;
        }
        if (t == t_end) loc.growth = std::max(loc.growth, ft / f0);
      }
    }
  });

  ValidationRecord rec;
  rec.xi_points = xi_grid.size();
  rec.t_points = t_grid.size();
  for (double xi : xi_grid) rec.xi_max = std::max(rec.xi_max, std::abs(xi));
  for (std::size_t i = 0; i < xi_grid.size(); ++i) {
    if (!(per_xi[i].ratio <= rec.worst_ratio)) {
      rec.worst_ratio = per_xi[i].ratio;
      rec.worst_t = per_xi[i].t;
      rec.worst_xi = xi_grid[i];
      rec.worst_sample = per_xi[i].sample;
    }
    if (std::abs(xi_grid[i]) == rec.xi_max) rec.growth_ratio_at_xi_max = std::max(rec.growth_ratio_at_xi_max, per_xi[i].growth);
  }
  rec.pass = rec.worst_ratio <= 1.0 + tol::certification;
  return rec;
}

/// Fits (C1, C2, xi0, M) and re-validates them on a refined grid.
///
/// C2 = 2 sigma^{-2/3} bounds Re lambda_+ everywhere; for sigma = 0 it is the
/// sup of Re lambda_+ over the patch. On |xi| > xi0, F(t) <= 2 e^{C2 t} sum|q|
/// gives the prefactor 2 C_qF. On the patch, F(t) <= M ||W m(0)||_1 and the
/// cone gives ||W m(0)||_1 <= (1 + sqrt(<xi0>)/2) F(0); the factor is at least 2.
inline GlobalCertification certify_global_constants(double sigma, double horizon, const GlobalOptions& opt = {}) {
  validate_params({sigma, horizon}, run_mode::deterministic);
  if (!(opt.xi_max > 0.0) || opt.fit_points < 3 || opt.refinement < 1 || opt.fit_t_points < 2 ||
      opt.validation_t_points < 2)
    throw error(errc::invalid_argument, "global certification grid options out of range");

  GlobalCertification out;
  out.sigma = sigma;
  out.horizon = horizon;
  GlobalConstants& k = out.constants;
  k.xi0 = default_xi0(sigma);

  const std::vector<MomentVector> family = moment_family(opt.family_size, opt.seed);
  const std::vector<double> fit = uniform_grid(-opt.xi_max, opt.xi_max, opt.fit_points);
  out.fit_grid = {"uniform", -opt.xi_max, opt.xi_max, fit.size()};

  // compact patch
  std::vector<double> patch = uniform_grid(-k.xi0, k.xi0, opt.patch_points);
  for (double xi : fit)
    if (std::abs(xi) <= k.xi0) patch.push_back(xi);
  const std::vector<double> t_fit = uniform_grid(0.0, horizon, opt.fit_t_points);
  std::vector<double> patch_norm(patch.size()), patch_abscissa(patch.size());
  parallel_for(patch.size(), opt.workers, [&](std::size_t i) {
    const ModePropagator prop(patch[i], sigma);
    for (double t : t_fit) patch_norm[i] = std::max(patch_norm[i], weighted_transition_norm(prop.transition(t), patch[i]));
    patch_abscissa[i] = prop.spectrum().lambda_plus.real();
  });
  k.M = *std::max_element(patch_norm.begin(), patch_norm.end());

  if (sigma > 0.0) {
    k.C2 = spectral_abscissa_bound(sigma).bound;
  } else {
    k.C2 = std::max(0.0, *std::max_element(patch_abscissa.begin(), patch_abscissa.end()));
  }

  k.C_qF = fit_qF(sigma, fit, family, std::nextafter(k.xi0, 2.0 * k.xi0)).c;
  k.prefactor = 2.0 * k.C_qF;
  const double patch_factor = std::max(2.0, 1.0 + 0.5 * std::sqrt(bracket(k.xi0)));
  k.C1 = std::max(patch_factor * k.M, k.prefactor);

  const std::size_t fine_points = (opt.fit_points - 1) * opt.refinement + 1;
  const std::vector<double> fine = uniform_grid(-opt.xi_max, opt.xi_max, fine_points);
  out.validation_grid = {"uniform", -opt.xi_max, opt.xi_max, fine.size()};
  const std::vector<double> t_fine = uniform_grid(0.0, horizon, opt.validation_t_points);
  out.validation = validate_global_constants(k, sigma, fine, t_fine, family, opt.workers);
  return out;
}

/// As certify_global_constants, throwing certification_failure when the
/// validation grid violates the certified inequality.
inline GlobalConstants estimate_global_constants(double sigma, double horizon, const GlobalOptions& opt = {}) {
  GlobalCertification c = certify_global_constants(sigma, horizon, opt);
  if (!c.validation.pass) throw certification_failure(std::move(c));
  return c.constants;
}

inline BoundReport global_report(const GlobalCertification& c) {
  const GlobalConstants& k = c.constants;
  const ValidationRecord& v = c.validation;
  return BoundReport::make("global", c.validation_grid, v.worst_ratio, 1.0, tol::certification,
                           {{"sigma", c.sigma},
                            {"horizon", c.horizon},
                            {"C1", k.C1},
                            {"C2", k.C2},
                            {"xi0", k.xi0},
                            {"M", k.M},
                            {"prefactor", k.prefactor},
                            {"C_qF", k.C_qF},
                            {"fit_grid", c.fit_grid},
                            {"t_points", v.t_points},
                            {"worst_t", v.worst_t},
                            {"worst_xi", v.worst_xi},
                            {"worst_sample", v.worst_sample},
                            {"xi_max", v.xi_max},
                            {"growth_ratio_at_xi_max", detail::json_number(v.growth_ratio_at_xi_max)}});
}

// ---------------------------------------------------------------------------
// Gevrey threshold

enum class Verdict { divergent, stable, inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::divergent: return "DIVERGENT";
    case Verdict::stable: return "STABLE";
    case Verdict::inconclusive: return "INCONCLUSIVE";
  }
  return "UNKNOWN";
}

struct GevreyDemo {
  double sigma = 0.0;
  double s_data = 0.0;
  double horizon = 0.0;
  double length = 0.0;
  std::vector<double> cutoffs;
  std::vector<double> norms;   // sum over |xi_k| <= cutoff of m1(T; xi_k) dxi
  std::vector<double> ratios;  // norms[i] / norms[i-1]
  Verdict verdict = Verdict::inconclusive;
};

/// Truncated E||U(T)||^2_{L^2} for data u_hat(xi) = e^{-|xi|^{1/s}}, v_hat = 0,
/// on the frequency lattice 2 pi k / L. Works on the coefficients directly:
/// a physical-space round trip would bury the e^{-2 |xi|^{1/s}} tail in rounding.
inline GevreyDemo gevrey_threshold_demo(double sigma, double s_data, std::span<const double> cutoffs,
                                        double horizon, double length = 64.0, unsigned workers = 1) {
  validate_params({sigma, horizon}, run_mode::deterministic);
  if (!(s_data >= 1.0)) throw error(errc::invalid_argument, "s_data must be >= 1");
  if (cutoffs.size() < 2) throw error(errc::invalid_argument, "need at least two cutoffs");
  for (std::size_t i = 1; i < cutoffs.size(); ++i)
    if (!(cutoffs[i] > cutoffs[i - 1])) throw error(errc::invalid_argument, "cutoffs must be increasing");

  const SpatialGrid grid = grid_covering(cutoffs.back(), length);
  const std::vector<complex> a = gevrey_coefficients({s_data, 1.0}, grid);
  // modes ordered by |xi|: 0, +1, -1, +2, -2, ...
  const std::size_t n = grid.n_points;
  std::vector<std::size_t> order{0};
  for (std::size_t k = 1; k < n / 2; ++k) {
    order.push_back(k);
    order.push_back(n - k);
  }
  std::vector<double> m1(order.size());
  parallel_for(order.size(), workers, [&](std::size_t i) {
    const double xi = grid.xi(order[i]);
    if (std::abs(xi) > cutoffs.back() * (1.0 + 1e-12)) return;
    m1[i] = evolve_moments_exact(moments_of(a[order[i]], 0.0), xi, sigma, horizon).m1;
  });

  GevreyDemo d{sigma, s_data, horizon, length, {cutoffs.begin(), cutoffs.end()}, {}, {}, Verdict::inconclusive};
  for (double cut : cutoffs) {
    double sum = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i)
      if (std::abs(grid.xi(order[i])) <= cut * (1.0 + 1e-12)) sum += m1[i];
    d.norms.push_back(sum * grid.dxi());
  }
  for (std::size_t i = 1; i < d.norms.size(); ++i) d.ratios.push_back(d.norms[i] / d.norms[i - 1]);
  const double last = d.ratios.back();
  if (last > tol::divergence_factor)
    d.verdict = Verdict::divergent;
  else if (std::abs(last - 1.0) < tol::stability_change)
    d.verdict = Verdict::stable;
  return d;
}

/// Report comparing the demo verdict with the expected one.
inline BoundReport gevrey_report(const GevreyDemo& d, Verdict expected) {
  nlohmann::json details{{"sigma", d.sigma},     {"s_data", d.s_data},           {"horizon", d.horizon},
                         {"cutoffs", d.cutoffs}, {"verdict", to_string(d.verdict)}, {"expected", to_string(expected)}};
  details["norms"] = nlohmann::json::array();
  for (double x : d.norms) details["norms"].push_back(detail::json_number(x));
  details["ratios"] = nlohmann::json::array();
  for (double x : d.ratios) details["ratios"].push_back(detail::json_number(x));
  const GridSpec spec{"cutoffs", d.cutoffs.front(), d.cutoffs.back(), d.cutoffs.size()};
  char id[48];
  std::snprintf(id, sizeof id, "gevrey.s%g", d.s_data);
  if (expected == Verdict::divergent) {
    // every doubling must multiply the norm by more than 10
    const double min_ratio = *std::min_element(d.ratios.begin(), d.ratios.end());
    return BoundReport::make(id, spec, -min_ratio, -tol::divergence_factor, 0.0, std::move(details));
  }
  return BoundReport::make(id, spec, std::abs(d.ratios.back() - 1.0), tol::stability_change, 0.0, std::move(details));
}

/// Growth rate of F(t; xi) from m(0) = (1, 0, 0) over [T/2, T].
inline double mode_growth_rate(double xi, double sigma, double horizon) {
  const MomentVector m0{1.0, 0.0, 0.0};
  const double f_half = weighted_energy(evolve_moments_exact(m0, xi, sigma, 0.5 * horizon), xi);
  const double f_end = weighted_energy(evolve_moments_exact(m0, xi, sigma, horizon), xi);
  return std::log(f_end / f_half) / (0.5 * horizon);
}

// ---------------------------------------------------------------------------
// time continuity

/// E|U(t0 + delta) - U(t0)|^2 for one mode. Conditional on time t0 the mean of
/// (U, V) evolves by Phi = exp(delta [[-gamma, 1], [xi, 0]]), so
/// E[U(t0+delta) conj U(t0)] has real part Phi11 m1(t0) + Phi12 m2(t0).
inline double mean_square_increment(double xi, double sigma, const MomentVector& m0, double t0, double delta) {
  if (delta == 0.0) return 0.0;
  const ModePropagator prop(xi, sigma);
  const MomentVector a = prop(m0, t0);
  const MomentVector b = prop(m0, t0 + delta);
  const double gamma = 0.5 * sigma * sigma * xi * xi;
  const Matrix2 phi = expm(scaled(Matrix2{{{-gamma, 1.0}, {xi, 0.0}}}, delta));
  return b.m1 + a.m1 - 2.0 * (phi[0][0] * a.m1 + phi[0][1] * a.m2);
}

struct ContinuityResult {
  std::vector<double> deltas;
  std::vector<double> increments;  // sum_k <xi_k>^{2s} E|U(t0+delta) - U(t0)|^2 dxi
  double slope = 0.0;              // least squares in log-log
};

inline ContinuityResult time_continuity(double sigma, const ModeCoefficients& data, double s, double t0,
                                        std::span<const double> deltas, unsigned workers = 1) {
  validate_params({sigma, t0 > 0.0 ? t0 : 1.0}, run_mode::deterministic);
  if (deltas.size() < 2) throw error(errc::invalid_argument, "need at least two deltas");
  for (std::size_t i = 1; i < deltas.size(); ++i)
    if (!(deltas[i] < deltas[i - 1]) || !(deltas[i] > 0.0))
      throw error(errc::invalid_argument, "deltas must decrease towards 0");

  const std::size_t n = data.grid.n_points, nd = deltas.size();
  std::vector<double> contrib(n * nd);
  parallel_for(n, workers, [&](std::size_t k) {
    const MomentVector m0 = moments_of(data.u_hat[k], data.v_hat[k]);
    if (m0 == MomentVector{}) return;
    const double xi = data.grid.xi(k);
    const double w = std::pow(bracket(xi), 2.0 * s);
    for (std::size_t i = 0; i < nd; ++i) contrib[i * n + k] = w * mean_square_increment(xi, sigma, m0, t0, deltas[i]);
  });

  ContinuityResult r;
  r.deltas.assign(deltas.begin(), deltas.end());
  for (std::size_t i = 0; i < nd; ++i) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += contrib[i * n + k];
    r.increments.push_back(sum * data.grid.dxi());
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < nd; ++i) {
    const double x = std::log(deltas[i]), y = std::log(r.increments[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(nd);
  r.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return r;
}

/// Gaussian datum phi0 = exp(-(x - L/2)^2 / 2), phi1 = 0.
inline ModeCoefficients gaussian_datum(const SpatialGrid& grid) {
  std::vector<complex> u(grid.n_points);
  for (std::size_t j = 0; j < grid.n_points; ++j) {
    const double x = grid.x(j) - 0.5 * grid.length;
    u[j] = std::exp(-0.5 * x * x);
  }
  return {grid, forward_transform(u), std::vector<complex>(grid.n_points)};
}

inline std::vector<BoundReport> verify_time_continuity(double sigma, const ModeCoefficients& data, double s,
                                                       double t0, std::span<const double> deltas,
                                                       unsigned workers = 1) {
  const ContinuityResult r = time_continuity(sigma, data, s, t0, deltas, workers);
  double worst_step = 0.0;
  for (std::size_t i = 1; i < r.increments.size(); ++i)
    worst_step = std::max(worst_step, r.increments[i] / r.increments[i - 1]);
  const GridSpec spec{"fft lattice", data.grid.xi(data.grid.n_points / 2), data.grid.xi(data.grid.n_points / 2 - 1),
                      data.grid.n_points};
  const nlohmann::json details{{"sigma", sigma}, {"s", s},       {"t0", t0},         {"deltas", r.deltas},
                               {"increments", r.increments},     {"slope", r.slope}, {"length", data.grid.length}};
  std::vector<BoundReport> out;
  out.push_back(BoundReport::make("continuity.monotone", spec, worst_step, 1.0, 0.0, details));
  // slope >= 0.9 stored as -slope <= -0.9
  out.push_back(BoundReport::make("continuity.slope", spec, -r.slope, -0.9, 0.0, details));
  return out;
}

}  // namespace noisereg
