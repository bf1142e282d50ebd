#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mfclab/measures.hpp"
#include "mfclab/types.hpp"

namespace mfclab {

/// Runtime flags raised by built-in models (grid-boundary minimizers, ties).
struct ModelDiagnostics {
  bool boundary_minimizer = false;
  bool tie_broken = false;
};

/// Problem definition: generalized Hamiltonian H on P2(R^2), terminal cost U
/// on P2(R), and their measure derivatives. The derivative fields use the
/// empirical bridge: for an n-atom cloud with weights w_i, the gradient of
/// H w.r.t. atom i's momentum equals w_i * dH_p(mu, x_i, p_i).
struct ModelSpec {
  std::string name;

  std::function<double(const EmpiricalMeasure2D&)> H;
  std::function<double(const EmpiricalMeasure2D&, double, double)> dH_x;
  std::function<double(const EmpiricalMeasure2D&, double, double)> dH_p;

  using D2Fn =
      std::function<double(const EmpiricalMeasure2D&, double, double, double, double)>;
  D2Fn d2H_xx, d2H_xp, d2H_px, d2H_pp;

  using MixedFn = std::function<double(const EmpiricalMeasure2D&, double, double)>;
  MixedFn dx_dH_x, dp_dH_x, dx_dH_p, dp_dH_p;

  std::function<double(const EmpiricalMeasure1D&)> U;
  std::function<double(const EmpiricalMeasure1D&, double)> dU;
  std::function<double(const EmpiricalMeasure1D&, double, double)> d2U_mumu;
  std::function<double(const EmpiricalMeasure1D&, double)> dx_dU;

  /// Declared bound on all listed derivatives, valid on the state box.
  double lipschitz_bound = 0.0;
  StateBox box;

  std::shared_ptr<ModelDiagnostics> diagnostics;
};

struct LqParams {
  double q = 1.0;
  double qbar = 0.0;
  double lambda = 1.0;
  double u = 1.0;
  double ubar = 0.0;
  double box = 10.0;
};

/// H(mu) = q Int x^2 + qbar (Int x)^2 - (1/4 lambda) Int p^2,
/// U(mu) = u Int x^2 + ubar (Int x)^2, all derivatives in closed form.
ModelSpec builtin_lq(const LqParams& params);

namespace detail {
/// Same fields without the sign validation; used to build the deliberately
/// broken fixtures that the assumption checker must reject.
ModelSpec make_lq_unchecked(const LqParams& params);
}  // namespace detail

struct ThetaGrid {
  double lo = -5.0;
  double hi = 5.0;
  int points = 401;
};

using CentralizedTerm =
    std::function<double(double x, const EmpiricalMeasure1D& xlaw, double theta)>;

/// H(mu) = inf_theta { Int [L(x, xlaw, theta) + f(x, xlaw, theta) p] dmu
///          + lambda theta^2 }, minimized on theta_grid with a parabolic
/// refinement. First derivatives use the envelope at the inner minimizer;
/// second derivatives are Richardson-extrapolated central differences of
/// atom perturbations. Terminal cost is the quadratic u Int x^2 + ubar(Int x)^2.
ModelSpec builtin_centralized(CentralizedTerm L, CentralizedTerm f, double lambda,
                              ThetaGrid theta_grid, double u = 1.0,
                              double ubar = 0.0, double box = 10.0);

/// The instance used by the CLI and the cross-solver tests:
/// L = cx2 x^2 + cxm x mean(xlaw), f = theta (one shared control).
ModelSpec builtin_centralized_default(double cx2, double cxm, double lambda,
                                      double u, double ubar, double box = 10.0);

// ---------------------------------------------------------------------------
// Assumption checking

struct ConditionResult {
  std::string name;
  double worst_violation = 0.0;
  bool pass = true;
};

struct AssumptionReport {
  std::vector<ConditionResult> conditions;
  std::vector<std::string> notes;
  double tolerance = 1e-8;

  bool all_pass() const {
    for (const auto& c : conditions)
      if (!c.pass) return false;
    return true;
  }
  const ConditionResult* find(const std::string& name) const {
    for (const auto& c : conditions)
      if (c.name == name) return &c;
    return nullptr;
  }
};

using TestFn2D = std::function<double(double, double)>;

/// {1, x, p, x^2, p^2, xp, exp(-(x-c)^2)} over five centers c.
std::vector<TestFn2D> default_test_functions();

/// Deterministic random probe clouds on the model box.
std::vector<EmpiricalMeasure2D> random_probes(int count, std::uint64_t seed,
                                              double box, int min_atoms = 3,
                                              int max_atoms = 12);

/// Evaluates the three displacement quadratic forms, the two pointwise sign
/// conditions, and the cross-derivative symmetry on every (probe, test fn)
/// pair. Violations are recorded, not thrown.
AssumptionReport check_displacement(const ModelSpec& model,
                                    const std::vector<EmpiricalMeasure2D>& probes,
                                    const std::vector<TestFn2D>& testfns,
                                    double tolerance = 1e-8);

// ---------------------------------------------------------------------------
// Fenchel transform of the Hamiltonian

/// Per-particle Legendre machinery built on the p-slice of H through a
/// measure frame: slice(x, p) = (n+1) [H(frame + (x,p)) - H(frame + (x,0))].
class FenchelSlice {
 public:
  FenchelSlice(const ModelSpec& model, double bound, int p_points);

  double slice(double x, double p, const EmpiricalMeasure2D& frame) const;
  /// L(x, theta) = sup_p { slice(x,p) - theta p }, grid + parabolic refine.
  double operator()(double x, double theta, const EmpiricalMeasure2D& frame) const;
  /// inf_theta { L(x, theta) + theta p } over the same bound.
  double biconjugate(double x, double p, const EmpiricalMeasure2D& frame) const;

  bool boundary_warning() const { return *boundary_hit_; }

 private:
  const ModelSpec* model_;
  double bound_;
  int p_points_;
  std::shared_ptr<bool> boundary_hit_;
};

FenchelSlice fenchel_lagrangian(const ModelSpec& model, double bound, int p_points);

/// Running cost of a cloud whose controls are generated by its own momenta,
/// theta_i = dH_p(mu, x_i, p_i): the Fenchel supremum is attained there, so
/// L = H(mu) - sum_i w_i theta_i p_i exactly.
double aligned_running_cost(const ModelSpec& model, const EmpiricalMeasure2D& mutilde);

/// Running cost for arbitrary controls: momenta are aligned by solving
/// dH_p(mu[x,P], x_i, P_i) = theta_i atomwise (monotone in P_i), capped at
/// |P| <= bound, matching the confined transform. Returns
/// H(mu[x,P*]) - sum w_i theta_i P*_i.
double control_running_cost(const ModelSpec& model, const std::vector<double>& x,
                            const std::vector<double>& theta, double bound,
                            int sweeps = 3);

// ---------------------------------------------------------------------------
// Potential games of controls

struct MfgcSpec {
  std::string name;
  /// Pointwise Hamiltonian on the state-control population measure.
  std::function<double(const EmpiricalMeasure2D&, double, double)> breveH;
  std::function<double(const EmpiricalMeasure2D&, double, double)> d_breveH_x;
  std::function<double(const EmpiricalMeasure2D&, double, double)> d_breveH_p;
  std::function<double(double, const EmpiricalMeasure1D&)> G;
  std::function<double(double, const EmpiricalMeasure1D&)> dG_x;
  ModelSpec base;
};

/// Potential-game partner of the LQ model, built by integrating the
/// structural identities in closed form.
MfgcSpec lq_mfgc(const LqParams& params);

/// Remaps momenta atomwise: (x, p) -> (x, dH_p(mu, x, p)).
EmpiricalMeasure2D breve_from_tilde(const ModelSpec& model,
                                    const EmpiricalMeasure2D& mutilde);

/// Max absolute mismatch of the three structural identities over probes.
AssumptionReport check_potential_constraint(
    const MfgcSpec& spec, const std::vector<EmpiricalMeasure2D>& probes,
    double tolerance = 1e-8);

/// Game running cost sup_p { breveH(breve_mu, x, p) - theta p } on |p|<=bound.
double mfgc_lagrangian(const MfgcSpec& spec, double x, double theta,
                       const EmpiricalMeasure2D& breve_mu, double bound);

}  // namespace mfclab
