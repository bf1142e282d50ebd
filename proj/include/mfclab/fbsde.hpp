#pragma once

#include <array>
#include <functional>
#include <vector>

#include "mfclab/model.hpp"
#include "mfclab/rng.hpp"
#include "mfclab/types.hpp"

namespace mfclab {

/// Time-indexed joint (X, NY) clouds of a mean-field solve, in sample order.
struct MeasureFlow {
  TimeGrid grid;
  int msamples = 0;
  std::vector<EmpiricalMeasure2D> mutilde;  // steps + 1 entries

  const EmpiricalMeasure2D& at(int k) const { return mutilde.at(k); }
};

/// Per-step linear decoupling field NY = c . phi(x, m, m2) on the basis
/// {1, x, m, x^2, x m, m^2, m2} (m, m2: cloud mean and second moment).
/// Exact for linear-quadratic fields.
struct RegressedField {
  static constexpr int kFeatures = 7;
  std::vector<std::array<double, kFeatures>> coeffs;

  static void features(double x, double m, double m2,
                       std::array<double, kFeatures>& out) {
    out = {1.0, x, m, x * x, x * m, m * m, m2};
  }
  double eval(int k, double x, double m, double m2) const {
    std::array<double, kFeatures> f;
    features(x, m, m2, f);
    const auto& c = coeffs.at(k);
    double v = 0;
    for (int i = 0; i < kFeatures; ++i) v += c[i] * f[i];
    return v;
  }
};

struct FbsdeOptions {
  bool store_flow = false;
  bool store_trajectories = false;
  /// Mirror Brownian increments across path pairs (particle mode) or sample
  /// pairs (cloud mode).
  bool antithetic = true;
  /// Pinned mode: the population measure is read from this frozen flow and
  /// the solved particles do not feed back into it.
  const MeasureFlow* frozen = nullptr;
  /// Per-path Gaussian jitter of the initial states. The decoupling field
  /// does not depend on the initial point, so dispersed starts widen the
  /// regression design without biasing the field; value and y0 outputs are
  /// only meaningful with zero jitter.
  double initial_jitter = 0.0;
  /// Terminal gradient; defaults to the model's dU.
  std::function<double(const EmpiricalMeasure1D&, double)> terminal_gradient;
  StreamKind stream_kind = StreamKind::idiosyncratic;
};

struct FbsdeResult {
  double value = 0.0;        // on-policy Monte-Carlo cost (= the V formula)
  std::vector<double> y0;    // NY_i(t0), one entry per particle
  RegressedField field;      // per-step decoupling field
  MeasureFlow flow;          // populated when store_flow
  int sweeps = 0;
  bool converged = false;
  double residual = 0.0;
  std::vector<double> residual_trace;
  int window_splits = 0;
  bool left_box = false;
  // store_trajectories: X[k][path*N + i], NY likewise
  std::vector<std::vector<double>> X_traj;
  std::vector<std::vector<double>> Y_traj;
};

/// Picard + least-squares Monte-Carlo solver for the coupled forward-backward
/// system dX = dH_p dt + sigma dW + sigma0 dW0, d(NY) = -dH_x dt + mart.,
/// NY_T = dU. Particle mode runs M paths of N interacting particles whose
/// empirical (X, NY) law drives the coefficients; with N = msamples and one
/// path this is the mean-field sample discretization. On Picard divergence
/// the horizon is bisected and the backward fields are stitched through the
/// regressed decoupling field.
FbsdeResult solve_fbsde(int n_particles, const std::vector<double>& x0,
                        const ModelSpec& model, const TimeGrid& grid,
                        const NoiseConfig& noise, const PicardConfig& picard,
                        const FbsdeOptions& opts = {});

}  // namespace mfclab
