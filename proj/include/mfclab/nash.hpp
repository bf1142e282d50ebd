#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mfclab/chaos.hpp"
#include "mfclab/meanfield.hpp"
#include "mfclab/model.hpp"
#include "mfclab/particle.hpp"
#include "mfclab/types.hpp"

namespace mfclab {

/// Markovian feedback profile for an N-player game. `all` fills every
/// player's control at once (the per-player closures share one population
/// evaluation); `thetas` exposes the per-player view.
struct FeedbackProfile {
  int N = 0;
  std::string provenance;  // equilibrium-candidate | perturbation | custom
  std::function<void(double, const std::vector<double>&, std::vector<double>&)> all;
  std::vector<std::function<double(double, const std::vector<double>&)>> thetas;
};

/// Candidate equilibrium feedback from one offline N-particle solve: the
/// regressed decoupling field provides the rescaled momenta, the momentum
/// derivative of the Hamiltonian maps them to controls.
FeedbackProfile build_equilibrium_feedback(const ModelSpec& model, int N,
                                           const std::vector<double>& x0,
                                           const TimeGrid& grid,
                                           const NoiseConfig& noise,
                                           const PicardConfig& picard);

struct GameCosts {
  std::vector<double> J;
  std::vector<double> stderr_est;
};

/// Monte-Carlo player costs under a profile. Each player's running cost is
/// the game Lagrangian against the other players' state-control cloud.
/// Noise streams are keyed by the rank of the initial position, so relabeling
/// players permutes the costs exactly.
GameCosts simulate_game(const FeedbackProfile& profile,
                        const std::vector<double>& x0, const MfgcSpec& mfgc,
                        const TimeGrid& grid, const NoiseConfig& noise);

/// Representative-player cost started from x_k against the mean-field flow of
/// mu (the master-field proxy for the k-th player's game value).
FkResult proxy_cost(const MfgcSpec& mfgc, double t, double x_k,
                    const EmpiricalMeasure1D& mu, const TimeGrid& grid,
                    const NoiseConfig& noise, const PicardConfig& picard,
                    int rep_paths = 4000);

struct BRConfig {
  std::string mode = "parametric";  // parametric | grid (grid: N == 2 only)
  int sweeps = 6;
  int time_degree = 3;  // basis: t^c * {1, x_k, mean(x)}, c = 0..time_degree
  double step0 = 0.25;
  int search_paths = 1000;
  int report_paths = 4000;
  // grid mode
  int grid_cells = 120;
  double grid_box = 4.0;
  int grid_steps = 200;
};

struct DeviationEntry {
  int N = 0;
  int player = 0;
  double J_k = 0.0;        // equilibrium-profile cost
  double J_star_lb = 0.0;  // best found response cost
  double epsilon = 0.0;    // J_k - J_star_lb (lower bound on the true gap)
  double mc_stderr = 0.0;
  double spread = 0.0;     // (1/(N-1)) sum_{j != k} |x_j - x_k|
};

DeviationEntry best_response_deviation(const FeedbackProfile& profile, int k,
                                       const std::vector<double>& x0,
                                       const MfgcSpec& mfgc, const TimeGrid& grid,
                                       const NoiseConfig& noise,
                                       const BRConfig& search);

struct NashSweepResult {
  RateFit fit;  // mean-over-players epsilon per N
  std::vector<DeviationEntry> entries;
};

NashSweepResult nash_sweep(const ModelSpec& model, const MfgcSpec& mfgc,
                           const std::vector<int>& Ns, const MuFamily& init_family,
                           const TimeGrid& grid, const NoiseConfig& noise,
                           const PicardConfig& picard, const BRConfig& search);

}  // namespace mfclab
