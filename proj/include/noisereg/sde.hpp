#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"
#include "moments.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "tolerances.hpp"

namespace noisereg {

enum class Scheme {
  euler_maruyama_ito,  // explicit Euler on the Ito form
  heun_stratonovich,   // Heun predictor-corrector on the diffusion of the Stratonovich form
  rotation_splitting,  // Strang: exact noise rotation / exact coupling flow / exact noise rotation
};

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::euler_maruyama_ito: return "euler_maruyama_ito";
    case Scheme::heun_stratonovich: return "heun_stratonovich";
    case Scheme::rotation_splitting: return "rotation_splitting";
  }
  return "unknown";
}

inline Scheme parse_scheme(std::string_view name) {
  for (Scheme s : {Scheme::euler_maruyama_ito, Scheme::heun_stratonovich, Scheme::rotation_splitting})
    if (name == to_string(s)) return s;
  throw error(errc::invalid_argument, "unknown scheme '" + std::string(name) +
                                          "' (expected euler_maruyama_ito, heun_stratonovich or rotation_splitting)");
}

struct SchemeSpec {
  Scheme scheme = Scheme::rotation_splitting;
  double dt = 0.0;
  long steps = 0;
};

/// Largest dt allowed by dt * max(sigma^2 xi^2, sqrt|xi|, 1) <= 0.25.
inline double stability_dt(double xi, double sigma) {
  return tol::stability_budget / std::max({sigma * sigma * xi * xi, std::sqrt(std::abs(xi)), 1.0});
}

inline void check_stability_budget(const SchemeSpec& spec, double xi, double sigma) {
  if (!(spec.dt > 0.0) || spec.steps <= 0) throw error(errc::invalid_argument, "scheme needs dt > 0 and steps > 0");
  if (spec.dt > stability_dt(xi, sigma) * (1.0 + 1e-12))
    throw error(errc::invalid_argument, "dt = " + std::to_string(spec.dt) + " exceeds the stability budget " +
                                            std::to_string(stability_dt(xi, sigma)));
}

/// Picks steps so that dt = horizon/steps is within the stability budget (and
/// below max_dt when given), and every record time falls on a step boundary.
inline SchemeSpec make_scheme(Scheme scheme, double horizon, double xi, double sigma,
                              std::span<const double> record_times = {}, double max_dt = 0.0) {
  if (!(horizon > 0.0)) throw error(errc::non_positive_horizon, "horizon must be positive");
  double dt_cap = stability_dt(xi, sigma);
  if (max_dt > 0.0) dt_cap = std::min(dt_cap, max_dt);
  const long start = std::max(1L, static_cast<long>(std::ceil(horizon / dt_cap * (1.0 - 1e-12))));
  for (long steps = start; steps <= start * 1000; ++steps) {
    bool aligned = true;
    for (double t : record_times) {
      const double k = t / horizon * static_cast<double>(steps);
      if (std::abs(k - std::round(k)) > tol::time_alignment * std::max(1.0, k)) {
        aligned = false;
        break;
      }
    }
    if (aligned) return {scheme, horizon / static_cast<double>(steps), steps};
  }
  throw error(errc::invalid_argument, "record times cannot be aligned to a step grid");
}

namespace detail {

inline void guard(const ModeState& s) {
  if (!s.finite() || std::abs(s.u_hat) > tol::blowup || std::abs(s.v_hat) > tol::blowup)
    throw error(errc::numerical_blowup, "mode state left the finite range at t = " + std::to_string(s.t));
}

/// Exact flow of U' = V, V' = xi U over one step, as a real 2x2 matrix.
inline Matrix2 coupling_flow(double xi, double dt) {
  if (xi > 0.0) {
    const double r = std::sqrt(xi);
    const double c = std::cosh(r * dt), s = std::sinh(r * dt);
    return {{{c, s / r}, {r * s, c}}};
  }
  if (xi < 0.0) {
    const double r = std::sqrt(-xi);
    const double c = std::cos(r * dt), s = std::sin(r * dt);
    return {{{c, s / r}, {-r * s, c}}};
  }
  return {{{1.0, dt}, {0.0, 1.0}}};
}

}  // namespace detail

/// U' = U + (V - sigma^2 xi^2 U / 2) dt + i sigma xi U dW,  V' = V + xi U dt.
inline ModeState step_euler_maruyama(const ModeState& s, double sigma, double dt, double dW) {
  const double xi = s.xi;
  const double gamma = 0.5 * sigma * sigma * xi * xi;
  ModeState out = s;
  out.u_hat = s.u_hat + (s.v_hat - gamma * s.u_hat) * dt + complex(0.0, sigma * xi * dW) * s.u_hat;
  out.v_hat = s.v_hat + xi * s.u_hat * dt;
  out.t = s.t + dt;
  detail::guard(out);
  return out;
}

/// Predictor U* = U + V dt + i sigma xi U dW, corrector
/// U' = U + V dt + i sigma xi (U + U*)/2 dW,  V' = V + xi U dt.
inline ModeState step_heun_stratonovich(const ModeState& s, double sigma, double dt, double dW) {
  const complex noise(0.0, sigma * s.xi * dW);
  const complex drift = s.u_hat + s.v_hat * dt;
  const complex predictor = drift + noise * s.u_hat;
  ModeState out = s;
  out.u_hat = drift + noise * 0.5 * (s.u_hat + predictor);
  out.v_hat = s.v_hat + s.xi * s.u_hat * dt;
  out.t = s.t + dt;
  detail::guard(out);
  return out;
}

/// Half-step rotation U *= exp(i sigma xi dW1), exact coupling flow over dt,
/// half-step rotation with dW2. dW1, dW2 ~ N(0, dt/2) independent.
inline ModeState step_rotation_splitting(const ModeState& s, double sigma, double dt, double dW1, double dW2) {
  const Matrix2 flow = detail::coupling_flow(s.xi, dt);
  const complex u = s.u_hat * std::polar(1.0, sigma * s.xi * dW1);
  ModeState out = s;
  out.u_hat = (flow[0][0] * u + flow[0][1] * s.v_hat) * std::polar(1.0, sigma * s.xi * dW2);
  out.v_hat = flow[1][0] * u + flow[1][1] * s.v_hat;
  out.t = s.t + dt;
  detail::guard(out);
  return out;
}

struct MonteCarloEstimate {
  double t = 0.0;
  MomentVector m_hat;
  std::array<double, 3> std_error{};  // of m1, m2, m3
  double f_hat = 0.0;                 // weighted energy estimate
  double f_std_error = 0.0;
  long n_paths = 0;
};

namespace detail {

/// Welford accumulator; blocks are merged with Chan's update in block order.
struct Running {
  double n = 0.0, mean = 0.0, m2 = 0.0;

  void add(double x) {
    n += 1.0;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }

  void merge(const Running& o) {
    if (o.n == 0.0) return;
    if (n == 0.0) {
      *this = o;
      return;
    }
    const double total = n + o.n;
    const double d = o.mean - mean;
    mean += d * (o.n / total);
    m2 += o.m2 + d * d * (n * o.n / total);
    n = total;
  }

  double std_error() const { return n > 1.0 ? std::sqrt(m2 / (n - 1.0) / n) : 0.0; }
};

using TimeAccumulators = std::array<Running, 4>;  // m1, m2, m3, F

inline constexpr long paths_per_block = 256;

}  // namespace detail

/// Monte Carlo estimates of (m1, m2, m3) at each record time. Paths are split
/// into fixed blocks of 256; every block is reduced on its own and blocks are
/// merged in index order, so results are bitwise independent of `workers`.
/// Path p of the mode draws from derive_stream(seeds, mode_index, p).
inline std::vector<MonteCarloEstimate> simulate_paths(double xi, double sigma, const ModeState& init,
                                                      const SchemeSpec& spec, long n_paths, const SeedPolicy& seeds,
                                                      std::span<const double> record_times, unsigned workers = 1,
                                                      std::uint64_t mode_index = 0) {
  if (!(sigma > 0.0)) throw error(errc::non_positive_sigma, "path simulation needs sigma > 0");
  if (n_paths <= 0) throw error(errc::invalid_argument, "n_paths must be positive");
  check_stability_budget(spec, xi, sigma);
  const double horizon = spec.dt * static_cast<double>(spec.steps);

  std::vector<long> record_steps;
  for (std::size_t i = 0; i < record_times.size(); ++i) {
    const double t = record_times[i];
    if (t < 0.0 || t > horizon * (1.0 + tol::time_alignment) || (i > 0 && t < record_times[i - 1]))
      throw error(errc::invalid_argument, "record times must be sorted and inside [0, horizon]");
    const double k = t / spec.dt;
    if (std::abs(k - std::round(k)) > tol::time_alignment * std::max(1.0, k))
      throw error(errc::invalid_argument, "record time " + std::to_string(t) + " is not on the step grid");
    record_steps.push_back(static_cast<long>(std::round(k)));
  }
  const long last_step = record_steps.empty() ? 0 : record_steps.back();
  const double bracket_inv = 1.0 / bracket(xi);
  const Matrix2 flow = detail::coupling_flow(xi, spec.dt);
  const double half_sd = std::sqrt(0.5 * spec.dt);
  const double sd = std::sqrt(spec.dt);

  const long n_blocks = (n_paths + detail::paths_per_block - 1) / detail::paths_per_block;
  std::vector<std::vector<detail::TimeAccumulators>> partial(
      static_cast<std::size_t>(n_blocks), std::vector<detail::TimeAccumulators>(record_steps.size()));

  parallel_for(static_cast<std::size_t>(n_blocks), workers, [&](std::size_t block) {
    auto& acc = partial[block];
    const long first = static_cast<long>(block) * detail::paths_per_block;
    const long last = std::min(n_paths, first + detail::paths_per_block);
    for (long path = first; path < last; ++path) {
      RandomStream rng = derive_stream(seeds, mode_index, static_cast<std::uint64_t>(path));
      ModeState s = init;
      s.xi = xi;
      std::size_t next = 0;
      auto record = [&] {
        const MomentVector m = moments_of(s.u_hat, s.v_hat);
        acc[next][0].add(m.m1);
        acc[next][1].add(m.m2);
        acc[next][2].add(m.m3);
        acc[next][3].add(m.m1 + m.m3 * bracket_inv);
        ++next;
      };
      while (next < record_steps.size() && record_steps[next] == 0) record();
      for (long step = 1; step <= last_step; ++step) {
        try {
          switch (spec.scheme) {
            case Scheme::euler_maruyama_ito: s = step_euler_maruyama(s, sigma, spec.dt, sd * rng.normal()); break;
            case Scheme::heun_stratonovich: s = step_heun_stratonovich(s, sigma, spec.dt, sd * rng.normal()); break;
            case Scheme::rotation_splitting: {
              const double w1 = half_sd * rng.normal();
              const double w2 = half_sd * rng.normal();
              const complex u = s.u_hat * std::polar(1.0, sigma * xi * w1);
              s.u_hat = (flow[0][0] * u + flow[0][1] * s.v_hat) * std::polar(1.0, sigma * xi * w2);
              s.v_hat = flow[1][0] * u + flow[1][1] * s.v_hat;
              s.t += spec.dt;
              detail::guard(s);
              break;
            }
          }
        } catch (const error& e) {
          if (e.code() != errc::numerical_blowup) throw;
          throw error(errc::numerical_blowup,
                      "path " + std::to_string(path) + ", step " + std::to_string(step) + " (xi = " +
                          std::to_string(xi) + ", scheme " + std::string(to_string(spec.scheme)) + ")");
        }
        while (next < record_steps.size() && record_steps[next] == step) record();
      }
    }
  });

  std::vector<MonteCarloEstimate> out(record_steps.size());
  for (std::size_t i = 0; i < record_steps.size(); ++i) {
    detail::TimeAccumulators total{};
    for (const auto& block : partial)
      for (int c = 0; c < 4; ++c) total[c].merge(block[i][c]);
    MonteCarloEstimate& e = out[i];
    e.t = static_cast<double>(record_steps[i]) * spec.dt;
    e.m_hat = {total[0].mean, total[1].mean, total[2].mean};
    e.std_error = {total[0].std_error(), total[1].std_error(), total[2].std_error()};
    e.f_hat = total[3].mean;
    e.f_std_error = total[3].std_error();
    e.n_paths = n_paths;
  }
  return out;
}

struct WeakOrderFit {
  double order = 0.0;
  std::vector<double> dts;
  std::vector<double> bias;       // estimate minus exact, weighted energy at the horizon
  std::vector<double> std_error;
};

/// Least-squares slope of log|bias| against log dt, with the bias of the
/// weighted energy F at the horizon measured against the exact moments.
inline WeakOrderFit weak_order_estimate(double xi, double sigma, const ModeState& init, Scheme scheme,
                                        std::span<const double> dts, long n_paths, double horizon,
                                        const SeedPolicy& seeds, unsigned workers = 1) {
  if (dts.size() < 3) throw error(errc::invalid_argument, "weak order fit needs at least three dt values");
  const double ratio = dts[1] / dts[0];
  for (std::size_t i = 1; i < dts.size(); ++i)
    if (std::abs(dts[i] / dts[i - 1] - ratio) > 1e-9 * ratio || !(dts[i] < dts[i - 1]))
      throw error(errc::invalid_argument, "dt values must form a decreasing geometric ladder");

  const MomentVector m0 = moments_of(init.u_hat, init.v_hat);
  const double exact = weighted_energy(evolve_moments_exact(m0, xi, sigma, horizon), xi);
  const std::array<double, 1> when{horizon};

  WeakOrderFit fit;
  for (double dt : dts) {
    const long steps = std::lround(horizon / dt);
    if (std::abs(static_cast<double>(steps) * dt - horizon) > tol::time_alignment * horizon)
      throw error(errc::invalid_argument, "dt must divide the horizon");
    const SchemeSpec spec{scheme, horizon / static_cast<double>(steps), steps};
    const auto est = simulate_paths(xi, sigma, init, spec, n_paths, seeds, when, workers).front();
    fit.dts.push_back(dt);
    fit.bias.push_back(est.f_hat - exact);
    fit.std_error.push_back(est.f_std_error);
  }
  if (!(std::abs(fit.bias.front()) >= tol::weak_order_resolution * fit.std_error.front()) ||
      fit.bias.front() == 0.0)
    throw error(errc::insufficient_resolution, "bias " + std::to_string(fit.bias.front()) + " at dt = " +
                                                   std::to_string(dts.front()) + " is below " +
                                                   std::to_string(tol::weak_order_resolution) + " standard errors");

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(dts.size());
  for (std::size_t i = 0; i < dts.size(); ++i) {
    const double x = std::log(fit.dts[i]);
    const double y = std::log(std::abs(fit.bias[i]));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  fit.order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return fit;
}

}  // namespace noisereg
