#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfclab {

/// Thrown on malformed inputs (empty measures, bad parameters, bad configs).
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a Picard iteration blows up and window splitting is exhausted.
/// Carries the residual history of the failed attempt.
struct DivergenceError : std::runtime_error {
  std::vector<double> residual_trace;
  explicit DivergenceError(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), residual_trace(std::move(trace)) {}
};

/// Uniform time grid on [t0, T].
struct TimeGrid {
  double t0 = 0.0;
  double T = 1.0;
  int steps = 100;

  TimeGrid() = default;
  TimeGrid(double t0_, double T_, int steps_) : t0(t0_), T(T_), steps(steps_) {
    if (!(t0 < T) || steps <= 0)
      throw InvalidInput("TimeGrid requires t0 < T and steps > 0");
  }
  double dt() const { return (T - t0) / steps; }
  double time(int k) const { return t0 + k * dt(); }
};

/// Diffusion constants and Monte-Carlo sampling controls.
/// sigma drives per-particle noise, sigma0 the common noise shared by all
/// particles of a path. Both may be zero (degenerate case).
struct NoiseConfig {
  double sigma = 1.0;
  double sigma0 = 0.0;
  std::uint64_t seed = 1;
  int paths = 10000;

  void validate() const {
    if (sigma < 0 || sigma0 < 0) throw InvalidInput("sigma, sigma0 must be >= 0");
    if (paths <= 0) throw InvalidInput("paths must be positive");
  }
};

/// Picard loop controls for the FBSDE solvers.
struct PicardConfig {
  double tol = 1e-6;          // sup-norm of the Y-update between sweeps
  int max_iter = 60;
  double damping = 0.5;       // fraction of the previous iterate retained
  double blowup_factor = 1e3; // residual growth that counts as divergence
  int max_window_splits = 8;  // horizon bisection depth on divergence
  int fixed_sweeps = 0;       // >0: run exactly this many sweeps (for FD runs)

  void validate() const {
    if (max_iter < 1) throw InvalidInput("picard.max_iter must be >= 1");
    if (damping < 0 || damping >= 1) throw InvalidInput("picard.damping in [0,1)");
    if (tol <= 0) throw InvalidInput("picard.tol must be positive");
  }
};

/// State box on which declared Lipschitz bounds are valid. Trajectories
/// leaving it raise a diagnostics flag, never clamping.
struct StateBox {
  double half_width = 10.0;
  bool contains(double x) const { return x >= -half_width && x <= half_width; }
};

}  // namespace mfclab
