#pragma once

#include <functional>
#include <vector>

#include "mfclab/fbsde.hpp"
#include "mfclab/model.hpp"
#include "mfclab/types.hpp"

namespace mfclab {

/// N-particle Pontryagin solve: trajectories, value, rescaled gradient.
struct ParticleSolution {
  double V_N = 0.0;
  std::vector<double> grad;  // N dV_N/dx_i at t0
  int picard_iterations = 0;
  bool converged = false;
  double residual = 0.0;
  bool left_box = false;
  int window_splits = 0;
  RegressedField field;  // per-step decoupling field NY(t, .)
  TimeGrid grid;
  // populated when store_trajectories is requested: [step][path*N + i]
  std::vector<std::vector<double>> X;
  std::vector<std::vector<double>> Y;
};

ParticleSolution solve_pontryagin(int N, const std::vector<double>& x0,
                                  const ModelSpec& model, const TimeGrid& grid,
                                  const NoiseConfig& noise,
                                  const PicardConfig& picard,
                                  bool store_trajectories = false);

std::pair<double, std::vector<double>> value_and_grad(
    int N, const std::vector<double>& x0, const ModelSpec& model,
    const TimeGrid& grid, const NoiseConfig& noise, const PicardConfig& picard);

/// Symmetric-difference Hessian of V_N with common random numbers; the
/// returned matrix is (H + H^T)/2 and raw_asymmetry reports max |H - H^T|/2.
struct HessianResult {
  std::vector<std::vector<double>> matrix;
  double raw_asymmetry = 0.0;
};
HessianResult hessian_fd(int N, const std::vector<double>& x0,
                         const ModelSpec& model, const TimeGrid& grid,
                         const NoiseConfig& noise, const PicardConfig& picard,
                         double h);

/// FD kernel behind hessian_fd, exposed for direct use on any callable.
std::vector<std::vector<double>> hessian_fd_of(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, double h);

/// Monotone finite-difference solve of the N-particle HJB (N = 1 or 2) on
/// [-box, box]^N; returns an interpolating evaluator of V_N(t, x).
class GridHjbValue {
 public:
  double operator()(double t, const std::vector<double>& x) const;
  double terminal(const std::vector<double>& x) const;

 private:
  friend GridHjbValue grid_hjb(int, const ModelSpec&, const TimeGrid&, double,
                               double, double, int);
  int N_ = 1;
  double box_ = 10.0;
  int cells_ = 100;
  TimeGrid grid_;
  int stride_ = 1;
  std::vector<std::vector<double>> slices_;  // stored time slices
  std::vector<double> slice_times_;
  double node(int i) const { return -box_ + 2 * box_ * i / cells_; }
};

GridHjbValue grid_hjb(int N, const ModelSpec& model, const TimeGrid& grid,
                      double sigma, double sigma0, double box, int cells);

}  // namespace mfclab
