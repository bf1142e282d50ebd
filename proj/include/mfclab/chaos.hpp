#pragma once

#include <functional>
#include <vector>

#include "mfclab/meanfield.hpp"
#include "mfclab/model.hpp"
#include "mfclab/particle.hpp"
#include "mfclab/types.hpp"

namespace mfclab {

/// Log-log OLS fit of gap_N against N. A slope claim is conclusive only when
/// r2 >= 0.9; degenerate (near-zero) gaps are clamped and flagged.
struct RateFit {
  std::vector<int> Ns;
  std::vector<double> gaps;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  bool conclusive = false;
};

RateFit fit_rate(const std::vector<int>& Ns, const std::vector<double>& gaps);

using MuFamily = std::function<EmpiricalMeasure1D(int)>;

/// Stratified Gaussian quantiles scaled to `scale`, clipped to the box.
MuFamily gaussian_family(double scale, double box);

struct ChaosConfig {
  std::vector<int> Ns = {2, 4, 8, 16, 32};
  int reference_factor = 64;       // reference msamples = factor * max(N)
  int reference_replications = 48; // independent clouds averaged for V
  long paths_budget = 480000;      // per-N particle paths = budget / N
  int min_paths = 2000;
  int pinned_paths = 4000;
};

RateFit value_gap_sweep(const ModelSpec& model, const MuFamily& family,
                        const ChaosConfig& cfg, const TimeGrid& grid,
                        const NoiseConfig& noise, const PicardConfig& picard);

RateFit gradient_gap_sweep(const ModelSpec& model, const MuFamily& family,
                           const ChaosConfig& cfg, const TimeGrid& grid,
                           const NoiseConfig& noise, const PicardConfig& picard);

/// Lipschitz lift of the N-particle gradient to (x, mu): evaluates the
/// rescaled gradient on quantile projections of mu plus two shifted
/// candidates, each penalized by lipC * W2(candidate, mu); returns the min.
/// The candidate set makes this an upper bound of the exact extension with
/// the same Lipschitz modulus.
std::function<double(double, const EmpiricalMeasure1D&)> lift_gradient(
    const ModelSpec& model, int N, const TimeGrid& grid, const NoiseConfig& noise,
    const PicardConfig& picard, double lipC);

struct HessianSweepEntry {
  int N = 0;
  double min_eig = 0.0;         // of the raw Hessian
  double max_eig_scaled = 0.0;  // of N * Hessian
};

struct HessianSweepReport {
  std::vector<HessianSweepEntry> entries;
  double fitted_C = 0.0;   // mean of the scaled max eigenvalues
  double max_rel_dev = 0.0;
};

HessianSweepReport hessian_bound_sweep(const ModelSpec& model,
                                       const MuFamily& family,
                                       const std::vector<int>& Ns,
                                       const TimeGrid& grid,
                                       const NoiseConfig& noise,
                                       const PicardConfig& picard, double h);

/// n-point quantile compression of a weighted cloud (midpoint rule on the
/// quantile function).
std::vector<double> quantile_projection(const EmpiricalMeasure1D& mu, int n);

}  // namespace mfclab
