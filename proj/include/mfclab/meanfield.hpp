#pragma once

#include <functional>
#include <vector>

#include "mfclab/fbsde.hpp"
#include "mfclab/model.hpp"
#include "mfclab/types.hpp"

namespace mfclab {

struct MeanFieldSolution {
  MeasureFlow flow;       // mu-tilde_s over samples, sample order preserved
  double V = 0.0;         // V(t0, mu0)
  RegressedField field;   // per-step decoupling field on cloud features
  double residual = 0.0;
  bool converged = false;
  int sweeps = 0;
  int window_splits = 0;
  bool left_box = false;
};

/// Deterministic largest-remainder replication of weighted atoms into an
/// msamples-point uniform cloud.
std::vector<double> replicate_atoms(const EmpiricalMeasure1D& mu, int msamples);

/// Sample discretization of the mean-field FBSDE with the law replaced by the
/// empirical law of noise.paths samples. Requires sigma0 = 0 (common noise is
/// exercised through the N-particle solver, where it is pathwise).
MeanFieldSolution solve_mkv(const EmpiricalMeasure1D& mu0, const ModelSpec& model,
                            const TimeGrid& grid, const NoiseConfig& noise,
                            const PicardConfig& picard);

/// Decoupling-field value dV/dmu(t0, mu, x): solves the pinned FBSDE against
/// the frozen flow with `paths` fresh Brownian copies of the pinned particle.
double pinned_decoupling(const MeasureFlow& flow, double x, const ModelSpec& model,
                         const NoiseConfig& noise, const PicardConfig& picard);

/// Feedback (t, mu, x) -> dH_p(mu_tilde_t, x, field_t(x)) built from a solved
/// flow; the measure argument is ignored (Markovian given the frozen flow).
std::function<double(double, const EmpiricalMeasure1D&, double)> optimal_feedback(
    const MeanFieldSolution& sol, const ModelSpec& model);

/// Action of the second measure derivative: solves the linearized FBSDE along
/// the frozen flow with initial flow perturbation phi and a pinned particle
/// started at zero perturbation; returns the pinned backward value at t0,
/// i.e. the integral of d2V/dmudmu(t0, mu, x, .) phi against mu.
double second_derivative_action(const MeasureFlow& flow, double x,
                                const std::function<double(double)>& phi,
                                const ModelSpec& model, const NoiseConfig& noise,
                                const PicardConfig& picard,
                                int max_flow_samples = 1024);

/// Max absolute residual of the mean-field HJB over probe measures at an
/// interior time. Time derivative by central differences on sub-horizons with
/// common random numbers; spatial-measure terms from the pinned evaluator.
double hjb_residual(const std::vector<EmpiricalMeasure1D>& probes, double t_eval,
                    const ModelSpec& model, const TimeGrid& grid,
                    const NoiseConfig& noise, const PicardConfig& picard);

/// Cost of the controlled McKean-Vlasov dynamics under an arbitrary feedback;
/// the running cost is the Fenchel Lagrangian of the model.
double mfc_verify(const EmpiricalMeasure1D& mu0, const ModelSpec& model,
                  const std::function<double(double, const EmpiricalMeasure1D&,
                                             double)>& feedback,
                  const TimeGrid& grid, const NoiseConfig& noise);

// ---------------------------------------------------------------------------
// Linear master equations via the population-particle pair

struct LinearMasterCoeffs {
  using Field = std::function<double(double x, const EmpiricalMeasure1D& law)>;
  Field b_tilde;      // population drift
  Field sigma_tilde;  // population diffusion
  Field b;            // pinned-particle drift
  Field sigma;        // pinned-particle diffusion
  Field phi1;         // terminal
  Field phi2;         // discount rate
  Field phi3;         // running source
};

struct FkResult {
  double value = 0.0;
  double stderr_est = 0.0;
};

/// Monte-Carlo evaluation of the linear-master-equation representation:
/// simulate the population cloud and independent pinned particles, accumulate
/// the exponential discount and source, and average.
FkResult linear_master_fk(const LinearMasterCoeffs& coeffs, double t, double x,
                          const EmpiricalMeasure1D& mu, int msamples,
                          const TimeGrid& grid, std::uint64_t seed, int paths);

}  // namespace mfclab
