#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "io.hpp"
#include "moments.hpp"
#include "parallel.hpp"
#include "sde.hpp"
#include "spectral.hpp"
#include "verify.hpp"

namespace noisereg {

enum exit_status : int {
  exit_ok = 0,
  exit_internal = 1,
  exit_validation = 2,
  exit_claim_failure = 3,
  exit_blowup = 4,
};

inline int exit_code_for(errc code) {
  switch (code) {
    case errc::certification_failure: return exit_claim_failure;
    case errc::numerical_blowup: return exit_blowup;
    default: return exit_validation;
  }
}

namespace cli {

/// Output file names are fixed per command so a replay overwrites the same set.
inline std::string data_file(const std::string& command) {
  return command == "verify" ? "verify.json" : command + ".csv";
}

inline std::string manifest_file(const std::string& command) { return command + ".manifest.json"; }

struct Context {
  RunConfig config;
  unsigned workers = 1;
  std::filesystem::path out_dir;
  std::ostream& out;
  std::ostream& err;
};

inline std::vector<double> times_or_default(const RunConfig& c) {
  return c.times.empty() ? uniform_grid(0.0, c.params.horizon, 11) : c.times;
}

inline int run_eigen(const Context& ctx) {
  const RunConfig& c = ctx.config;
  validate_params(c.params, run_mode::deterministic);
  const std::size_t points = c.grid_points ? c.grid_points : 2001;
  if (!(c.xi_max > 0.0) || points < 2) throw error(errc::invalid_argument, "eigen needs xi_max > 0 and grid_points >= 2");
  CsvTable t({"xi", "gamma", "re_delta", "im_delta", "re_lambda_plus", "im_lambda_plus", "re_lambda_minus",
              "im_lambda_minus"});
  double best = -std::numeric_limits<double>::infinity(), arg = 0.0;
  for (double xi : uniform_grid(-c.xi_max, c.xi_max, points)) {
    const ModeEigenData ed = mode_spectrum(xi, c.params.sigma);
    t.add_row({xi, ed.gamma, ed.delta.real(), ed.delta.imag(), ed.lambda_plus.real(), ed.lambda_plus.imag(),
               ed.lambda_minus.real(), ed.lambda_minus.imag()});
    if (ed.lambda_plus.real() > best) {
      best = ed.lambda_plus.real();
      arg = xi;
    }
  }
  write_atomic(ctx.out_dir / data_file("eigen"), t.text());
  ctx.out << "eigen: " << points << " modes, max Re lambda_+ = " << format_double(best)
          << " at xi = " << format_double(arg) << "\n";
  return exit_ok;
}

inline ModeCoefficients field_data(const RunConfig& c) {
  const SpatialGrid grid = make_grid(c.n_points, c.length);
  if (c.data == "gevrey")
    return {grid, gevrey_coefficients({c.gevrey_s, c.gevrey_c}, grid), std::vector<complex>(grid.n_points)};
  return gaussian_datum(grid);
}

inline int run_moments(const Context& ctx) {
  const RunConfig& c = ctx.config;
  validate_params(c.params, run_mode::deterministic);
  const ModeCoefficients data = field_data(c);
  const std::vector<double> times = times_or_default(c);
  const auto rows = evolve_field_moments(data, c.params, c.s, times, ctx.workers);
  const double initial =
      sobolev_norm_sq(data.u_hat, c.s, data.grid) + sobolev_norm_sq(data.v_hat, c.s - 0.5, data.grid);

  GlobalOptions opt;
  opt.xi_max = std::max(c.xi_max, static_cast<double>(data.grid.n_points / 2) * data.grid.dxi());
  opt.seed = c.master_seed;
  opt.workers = ctx.workers;
  const GlobalCertification cert = certify_global_constants(c.params.sigma, c.params.horizon, opt);
  if (!cert.validation.pass)
    ctx.err << "noisereg: no certified constants at sigma = " << format_double(c.params.sigma)
            << "; bound_rhs is inf\n";

  CsvTable t({"t", "sobolev_s", "norm_U_sq", "norm_V_sq", "bound_rhs"});
  for (const auto& r : rows) {
    const double rhs = cert.validation.pass
                           ? cert.constants.C1 * std::exp(cert.constants.C2 * r.t) * initial
                           : std::numeric_limits<double>::infinity();
    t.add_row({r.t, c.s, r.norm_u_sq, r.norm_v_sq, rhs});
  }
  write_atomic(ctx.out_dir / data_file("moments"), t.text());
  ctx.out << "moments: " << rows.size() << " times, E||U(T)||^2 = " << format_double(rows.back().norm_u_sq)
          << ", C1 = " << format_double(cert.constants.C1) << ", C2 = " << format_double(cert.constants.C2) << "\n";
  return exit_ok;
}

inline SchemeSpec scheme_for(const RunConfig& c, std::span<const double> times) {
  if (c.dt <= 0.0) return make_scheme(c.scheme, c.params.horizon, c.xi, c.params.sigma, times, c.max_dt);
  const long steps = std::lround(c.params.horizon / c.dt);
  if (steps < 1 || std::abs(static_cast<double>(steps) * c.dt - c.params.horizon) > tol::time_alignment * c.params.horizon)
    throw error(errc::invalid_argument, "dt must divide the horizon");
  return {c.scheme, c.params.horizon / static_cast<double>(steps), steps};
}

inline int run_simulate(const Context& ctx) {
  const RunConfig& c = ctx.config;
  validate_params(c.params, run_mode::stochastic);
  const std::vector<double> times = times_or_default(c);
  const SchemeSpec spec = scheme_for(c, times);
  const auto est = simulate_paths(c.xi, c.params.sigma, ModeState{c.u0, c.v0, c.xi, 0.0}, spec, c.n_paths,
                                  SeedPolicy{c.master_seed}, times, ctx.workers);
  const MomentVector m0 = moments_of(c.u0, c.v0);

  CsvTable t({"t", "m1_hat", "m2_hat", "m3_hat", "se1", "se2", "se3", "m1_exact", "m2_exact", "m3_exact"});
  double worst = 0.0;
  for (const auto& e : est) {
    const MomentVector ex = evolve_moments_exact(m0, c.xi, c.params.sigma, e.t);
    t.add_row({e.t, e.m_hat.m1, e.m_hat.m2, e.m_hat.m3, e.std_error[0], e.std_error[1], e.std_error[2], ex.m1,
               ex.m2, ex.m3});
    const double got[3] = {e.m_hat.m1, e.m_hat.m2, e.m_hat.m3}, want[3] = {ex.m1, ex.m2, ex.m3};
    for (int i = 0; i < 3; ++i)
      if (e.std_error[i] > 0.0) worst = std::max(worst, std::abs(got[i] - want[i]) / e.std_error[i]);
  }
  write_atomic(ctx.out_dir / data_file("simulate"), t.text());
  ctx.out << "simulate: " << c.n_paths << " paths, scheme " << to_string(spec.scheme) << ", dt = "
          << format_double(spec.dt) << ", worst deviation " << format_double(worst) << " standard errors\n";
  return exit_ok;
}

inline std::vector<BoundReport> verify_claims(const RunConfig& c, unsigned workers, std::ostream& out) {
  const double sigma = c.params.sigma;
  validate_params(c.params, run_mode::deterministic);
  const bool all = c.claim == "all";
  auto wanted = [&](const char* name) { return all || c.claim == name; };
  std::vector<BoundReport> reports;
  auto add = [&](std::vector<BoundReport> rs) {
    for (auto& r : rs) reports.push_back(std::move(r));
  };

  // the lambda, coefficient and qF claims are stated for sigma != 0
  if (sigma == 0.0 && all) out << "skip lambda, coef, qf: stated for sigma > 0\n";
  if (wanted("lambda") && !(all && sigma == 0.0))
    add(verify_lambda_bound(sigma, lambda_grid(sigma, c.grid_points ? c.grid_points : 100000, c.xi_max)));
  if (wanted("coef") && !(all && sigma == 0.0)) add(verify_coefficient_bounds(sigma, 10.0, c.xi_max));
  if (wanted("qf") && !(all && sigma == 0.0)) {
    const double xi0 = default_xi0(sigma);
    std::vector<double> g = log_grid(xi0, c.xi_max, 1000);
    for (double x : log_grid(xi0, c.xi_max, 1000)) g.push_back(-x);
    add({verify_qF_control(sigma, g, moment_family(100, c.master_seed), xi0)});
  }
  if (wanted("global")) {
    GlobalOptions opt;
    opt.xi_max = c.xi_max;
    if (c.grid_points) opt.fit_points = c.grid_points;
    opt.seed = c.master_seed;
    opt.workers = workers;
    add({global_report(certify_global_constants(sigma, c.params.horizon, opt))});
  }
  if (wanted("gevrey")) {
    if (sigma == 0.0) {
      add({gevrey_report(gevrey_threshold_demo(0.0, 3.0, c.cutoffs, c.params.horizon, c.length, workers),
                         Verdict::divergent)});
      add({gevrey_report(gevrey_threshold_demo(0.0, 1.5, c.cutoffs, c.params.horizon, c.length, workers),
                         Verdict::stable)});
    } else {
      add({gevrey_report(gevrey_threshold_demo(sigma, 3.0, c.cutoffs, c.params.horizon, c.length, workers),
                         Verdict::stable)});
    }
  }
  if (wanted("continuity"))
    add(verify_time_continuity(sigma, gaussian_datum(make_grid(c.n_points, c.length)), c.s, c.t0, c.deltas,
                               workers));
  return reports;
}

inline int run_verify(const Context& ctx) {
  const auto reports = verify_claims(ctx.config, ctx.workers, ctx.out);
  nlohmann::json j = nlohmann::json::array();
  bool ok = true;
  for (const auto& r : reports) {
    j.push_back(r);
    ok = ok && r.pass;
  }
  write_atomic(ctx.out_dir / data_file("verify"), j.dump(2) + "\n");
  for (const auto& r : reports)
    ctx.out << (r.pass ? "PASS " : "FAIL ") << r.claim_id << ": observed " << format_double(r.observed)
            << ", asserted " << format_double(r.asserted) << ", tolerance " << format_double(r.tolerance) << "\n";
  return ok ? exit_ok : exit_claim_failure;
}

inline int run_demo(const Context& ctx) {
  const RunConfig& c = ctx.config;
  const GevreyDemo d =
      gevrey_threshold_demo(c.params.sigma, c.gevrey_s, c.cutoffs, c.params.horizon, c.length, ctx.workers);
  CsvTable t({"cutoff", "truncated_norm", "ratio"});
  for (std::size_t i = 0; i < d.cutoffs.size(); ++i)
    t.add_row({d.cutoffs[i], d.norms[i], i ? d.ratios[i - 1] : std::numeric_limits<double>::quiet_NaN()});
  write_atomic(ctx.out_dir / data_file("demo"), t.text());
  ctx.out << "demo: sigma = " << format_double(d.sigma) << ", s_data = " << format_double(d.s_data) << ", verdict "
          << to_string(d.verdict) << "\n";
  return exit_ok;
}

struct FlagSpec {
  const char* key;
  const char* flag;
  const char* help;
  std::vector<std::string> commands;  // empty: every command
};

inline const std::vector<FlagSpec>& flag_specs() {
  static const std::vector<FlagSpec> specs{
      {"sigma", "--sigma", "noise strength", {}},
      {"horizon", "--horizon,-T", "final time", {}},
      {"n_points", "--n-points", "spatial grid points (power of two)", {"moments", "verify"}},
      {"length", "--length,-L", "periodic box length", {"moments", "verify", "demo"}},
      {"xi", "--xi", "frequency of the simulated mode", {"simulate"}},
      {"xi_max", "--xi-max", "largest |xi| of the frequency grid", {"eigen", "moments", "verify"}},
      {"grid_points", "--grid-points", "frequency grid points", {"eigen", "verify"}},
      {"times", "--times", "comma-separated record times", {"moments", "simulate"}},
      {"n_paths", "--paths,--n-paths", "Monte Carlo paths", {"simulate"}},
      {"seed", "--seed", "master seed", {}},
      {"scheme", "--scheme", "euler_maruyama_ito | heun_stratonovich | rotation_splitting", {"simulate"}},
      {"dt", "--dt", "time step; 0 picks the largest admissible", {"simulate"}},
      {"max_dt", "--max-dt", "cap on the automatic time step", {"simulate"}},
      {"u0_re", "--u0-re", "initial u_hat, real part", {"simulate"}},
      {"u0_im", "--u0-im", "initial u_hat, imaginary part", {"simulate"}},
      {"v0_re", "--v0-re", "initial v_hat, real part", {"simulate"}},
      {"v0_im", "--v0-im", "initial v_hat, imaginary part", {"simulate"}},
      {"s", "--s", "Sobolev index", {"moments", "verify"}},
      {"data", "--data", "initial data: gaussian | gevrey", {"moments"}},
      {"gevrey_s", "--gevrey-s", "Gevrey order of the data", {"moments", "demo"}},
      {"gevrey_c", "--gevrey-c", "Gevrey decay constant", {"moments"}},
      {"cutoffs", "--cutoffs", "comma-separated frequency cutoffs", {"verify", "demo"}},
      {"claim", "--claim", "lambda | coef | qf | global | gevrey | continuity | all", {"verify"}},
      {"t0", "--t0", "base time of the continuity check", {"verify"}},
      {"deltas", "--deltas", "comma-separated decreasing increments", {"verify"}},
      {"out_dir", "--out-dir,-o", "output directory", {}},
  };
  return specs;
}

inline int dispatch(const Context& ctx) {
  const std::string& cmd = ctx.config.command;
  if (cmd == "eigen") return run_eigen(ctx);
  if (cmd == "moments") return run_moments(ctx);
  if (cmd == "simulate") return run_simulate(ctx);
  if (cmd == "verify") return run_verify(ctx);
  return run_demo(ctx);
}

}  // namespace cli

/// Parses argv, resolves defaults < config file < flags, writes the manifest
/// sidecar, then runs the subcommand. Returns the process exit status.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Mean-square well-posedness by noise: moments, simulation and bound verification", "noisereg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(NOISEREG_BUILD_ID));

  ConfigFragment flags;
  std::string config_path;
  std::optional<unsigned> workers;
  for (auto name : commands) {
    CLI::App* sub = app.add_subcommand(std::string(name));
    sub->add_option("--config,-c", config_path, "key=value file or saved manifest to replay");
    sub->add_option("--workers,-j", workers, "worker threads (default: NOISE_REG_WORKERS, then all cores)")
        ->check(CLI::PositiveNumber);
    for (const auto& f : cli::flag_specs()) {
      if (!f.commands.empty() && std::find(f.commands.begin(), f.commands.end(), name) == f.commands.end()) continue;
      sub->add_option_function<std::string>(
          f.flag, [&flags, key = f.key](const std::string& v) { flags.values.emplace_back(key, v); }, f.help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_validation;
  }

  try {
    RunConfig config;
    config.command = app.get_subcommands().front()->get_name();
    if (!config_path.empty()) {
      const ConfigFragment file = load_config(config_path);
      if (file.command && *file.command != config.command)
        throw config_error(errc::config_parse,
                           config_path + " is a manifest for '" + *file.command + "', not '" + config.command + "'");
      ConfigFragment values = file;
      values.command.reset();
      apply(config, values);
    }
    apply(config, flags);

    RunManifest manifest;
    manifest.config = config;
    manifest.outputs = {cli::data_file(config.command)};
    manifest.timestamp = iso8601_now();
    manifest.workers = resolve_workers(workers);
    const cli::Context ctx{config, manifest.workers, std::filesystem::path(config.out_dir), out, err};

    const std::string text = to_json(manifest).dump(2) + "\n";
    out << text;
    write_atomic(ctx.out_dir / cli::manifest_file(config.command), text);
    return cli::dispatch(ctx);
  } catch (const certification_failure& e) {
    err << "noisereg: " << e.what() << "\n";
    return exit_claim_failure;
  } catch (const error& e) {
    err << "noisereg: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "noisereg: " << e.what() << "\n";
    return exit_internal;
  }
}

}  // namespace noisereg
