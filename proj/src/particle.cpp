#include "mfclab/particle.hpp"

#include <algorithm>
#include <cmath>

namespace mfclab {

ParticleSolution solve_pontryagin(int N, const std::vector<double>& x0,
                                  const ModelSpec& model, const TimeGrid& grid,
                                  const NoiseConfig& noise,
                                  const PicardConfig& picard,
                                  bool store_trajectories) {
  FbsdeOptions opts;
  opts.store_trajectories = store_trajectories;
  FbsdeResult r = solve_fbsde(N, x0, model, grid, noise, picard, opts);
  ParticleSolution sol;
  sol.V_N = r.value;
  sol.grad = r.y0;
  sol.picard_iterations = r.sweeps;
  sol.converged = r.converged;
  sol.residual = r.residual;
  sol.left_box = r.left_box;
  sol.window_splits = r.window_splits;
  sol.field = std::move(r.field);
  sol.grid = grid;
  sol.X = std::move(r.X_traj);
  sol.Y = std::move(r.Y_traj);
  return sol;
}

std::pair<double, std::vector<double>> value_and_grad(
    int N, const std::vector<double>& x0, const ModelSpec& model,
    const TimeGrid& grid, const NoiseConfig& noise, const PicardConfig& picard) {
  ParticleSolution sol = solve_pontryagin(N, x0, model, grid, noise, picard);
  return {sol.V_N, sol.grad};
}

std::vector<std::vector<double>> hessian_fd_of(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, double h) {
  if (h <= 0) throw InvalidInput("hessian_fd: h must be positive");
  const int n = static_cast<int>(x.size());
  std::vector<std::vector<double>> H(n, std::vector<double>(n, 0.0));
  const double f0 = f(x);
  std::vector<double> xg = x;
  for (int i = 0; i < n; ++i) {
    xg[i] = x[i] + h;
    const double fp = f(xg);
    xg[i] = x[i] - h;
    const double fm = f(xg);
    xg[i] = x[i];
    H[i][i] = (fp - 2 * f0 + fm) / (h * h);
    for (int j = i + 1; j < n; ++j) {
      xg[i] = x[i] + h;
      xg[j] = x[j] + h;
      const double fpp = f(xg);
      xg[j] = x[j] - h;
      const double fpm = f(xg);
      xg[i] = x[i] - h;
      xg[j] = x[j] + h;
      const double fmp = f(xg);
      xg[j] = x[j] - h;
      const double fmm = f(xg);
      xg[i] = x[i];
      xg[j] = x[j];
      H[i][j] = H[j][i] = (fpp - fpm - fmp + fmm) / (4 * h * h);
    }
  }
  return H;
}

HessianResult hessian_fd(int N, const std::vector<double>& x0,
                         const ModelSpec& model, const TimeGrid& grid,
                         const NoiseConfig& noise, const PicardConfig& picard,
                         double h) {
  // Fix the sweep schedule from an adaptive base solve so every shifted
  // evaluation follows the numerically identical code path (common random
  // numbers + smooth dependence on x0).
  ParticleSolution base = solve_pontryagin(N, x0, model, grid, noise, picard);
  PicardConfig fixed = picard;
  fixed.fixed_sweeps = std::max(1, base.picard_iterations);
  auto value = [&](const std::vector<double>& x) {
    return solve_pontryagin(N, x, model, grid, noise, fixed).V_N;
  };
  std::vector<std::vector<double>> raw = hessian_fd_of(value, x0, h);
  HessianResult res;
  res.matrix.assign(N, std::vector<double>(N, 0.0));
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      res.matrix[i][j] = 0.5 * (raw[i][j] + raw[j][i]);
      res.raw_asymmetry =
          std::max(res.raw_asymmetry, 0.5 * std::abs(raw[i][j] - raw[j][i]));
    }
  return res;
}

// ---------------------------------------------------------------------------
// Grid HJB for N = 1, 2

namespace {

// gradient by central differences with one-sided stencils at the edges
inline double grad_1d(const std::vector<double>& v, int i, int cells, double hx) {
  if (i == 0) return (v[1] - v[0]) / hx;
  if (i == cells) return (v[cells] - v[cells - 1]) / hx;
  return (v[i + 1] - v[i - 1]) / (2 * hx);
}

inline double grad_1d_2d(const std::vector<double>& v, int i, int j, int cells,
                         double hx, bool first) {
  const int n1 = cells + 1;
  auto at = [&](int a, int b) { return v[a * n1 + b]; };
  if (first) {
    if (i == 0) return (at(1, j) - at(0, j)) / hx;
    if (i == cells) return (at(cells, j) - at(cells - 1, j)) / hx;
    return (at(i + 1, j) - at(i - 1, j)) / (2 * hx);
  }
  if (j == 0) return (at(i, 1) - at(i, 0)) / hx;
  if (j == cells) return (at(i, cells) - at(i, cells - 1)) / hx;
  return (at(i, j + 1) - at(i, j - 1)) / (2 * hx);
}

}  // namespace

double GridHjbValue::terminal(const std::vector<double>& x) const {
  return (*this)(grid_.T, x);
}

double GridHjbValue::operator()(double t, const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != N_)
    throw InvalidInput("grid_hjb evaluator: wrong state dimension");
  // locate bracketing stored slices
  const double tc = std::clamp(t, grid_.t0, grid_.T);
  int hi = 0;
  while (hi + 1 < static_cast<int>(slice_times_.size()) && slice_times_[hi] < tc)
    ++hi;
  const int lo = std::max(0, hi - 1);
  const double tlo = slice_times_[lo], thi = slice_times_[hi];
  const double wt = (thi > tlo) ? (tc - tlo) / (thi - tlo) : 1.0;

  auto interp = [&](const std::vector<double>& v) {
    const double hx = 2 * box_ / cells_;
    if (N_ == 1) {
      const double s = std::clamp((x[0] + box_) / hx, 0.0, double(cells_));
      const int i = std::min(static_cast<int>(s), cells_ - 1);
      const double a = s - i;
      return (1 - a) * v[i] + a * v[i + 1];
    }
    const double sx = std::clamp((x[0] + box_) / hx, 0.0, double(cells_));
    const double sy = std::clamp((x[1] + box_) / hx, 0.0, double(cells_));
    const int i = std::min(static_cast<int>(sx), cells_ - 1);
    const int j = std::min(static_cast<int>(sy), cells_ - 1);
    const double a = sx - i, b = sy - j;
    const int n1 = cells_ + 1;
    return (1 - a) * (1 - b) * v[i * n1 + j] + a * (1 - b) * v[(i + 1) * n1 + j] +
           (1 - a) * b * v[i * n1 + j + 1] + a * b * v[(i + 1) * n1 + j + 1];
  };
  return (1 - wt) * interp(slices_[lo]) + wt * interp(slices_[hi]);
}

GridHjbValue grid_hjb(int N, const ModelSpec& model, const TimeGrid& grid,
                      double sigma, double sigma0, double box, int cells) {
  if (N != 1 && N != 2) throw InvalidInput("grid_hjb supports N = 1 or 2 only");
  if (cells < 50) throw InvalidInput("grid_hjb requires cells >= 50");
  const double hx = 2 * box / cells;
  const double dt = grid.dt();
  const double diff = sigma * sigma + sigma0 * sigma0;
  // explicit scheme stability for the diffusion part
  const double cfl = diff * dt / (hx * hx) * (N == 2 ? 2.0 : 1.0) +
                     (N == 2 ? sigma0 * sigma0 * dt / (hx * hx) : 0.0);
  if (cfl > 0.5)
    throw InvalidInput("grid_hjb: CFL violated, dt = " + std::to_string(dt) +
                       " too large for " + std::to_string(cells) + " cells");

  GridHjbValue out;
  out.N_ = N;
  out.box_ = box;
  out.cells_ = cells;
  out.grid_ = grid;

  const int n1 = cells + 1;
  const std::size_t total = (N == 1) ? n1 : static_cast<std::size_t>(n1) * n1;
  std::vector<double> v(total, 0.0), vn(total, 0.0);

  // terminal slice V(T, x) = U(mu_x), exact at nodes
  if (N == 1) {
    for (int i = 0; i <= cells; ++i)
      v[i] = model.U(EmpiricalMeasure1D::dirac(out.node(i)));
  } else {
    for (int i = 0; i <= cells; ++i)
      for (int j = 0; j <= cells; ++j)
        v[i * n1 + j] =
            model.U(EmpiricalMeasure1D::uniform({out.node(i), out.node(j)}));
  }

  const int keep_every = std::max(1, grid.steps / 16);
  out.stride_ = keep_every;
  std::vector<std::vector<double>> kept;
  std::vector<double> kept_times;
  kept.push_back(v);
  kept_times.push_back(grid.T);

  EmpiricalMeasure2D cloud;
  for (int step = grid.steps - 1; step >= 0; --step) {
    if (N == 1) {
      for (int i = 0; i <= cells; ++i) {
        const double x = out.node(i);
        const double g = grad_1d(v, i, cells, hx);
        double lap;
        if (i == 0 || i == cells) {
          lap = 0.0;  // linear extrapolation: vanishing second derivative
        } else {
          lap = (v[i + 1] - 2 * v[i] + v[i - 1]) / (hx * hx);
        }
        const double xs[1] = {x};
        const double ps[1] = {g};
        cloud.assign_uniform(xs, ps, 1);
        vn[i] = v[i] + dt * (0.5 * diff * lap + model.H(cloud));
      }
    } else {
      for (int i = 0; i <= cells; ++i) {
        for (int j = 0; j <= cells; ++j) {
          const double x1 = out.node(i), x2 = out.node(j);
          const double g1 = grad_1d_2d(v, i, j, cells, hx, true);
          const double g2 = grad_1d_2d(v, i, j, cells, hx, false);
          double lap1 = 0, lap2 = 0, cross = 0;
          if (i > 0 && i < cells)
            lap1 = (v[(i + 1) * n1 + j] - 2 * v[i * n1 + j] + v[(i - 1) * n1 + j]) /
                   (hx * hx);
          if (j > 0 && j < cells)
            lap2 = (v[i * n1 + j + 1] - 2 * v[i * n1 + j] + v[i * n1 + j - 1]) /
                   (hx * hx);
          if (i > 0 && i < cells && j > 0 && j < cells)
            cross = (v[(i + 1) * n1 + j + 1] - v[(i + 1) * n1 + j - 1] -
                     v[(i - 1) * n1 + j + 1] + v[(i - 1) * n1 + j - 1]) /
                    (4 * hx * hx);
          const double xs[2] = {x1, x2};
          const double ps[2] = {2 * g1, 2 * g2};  // N p_i with N = 2
          cloud.assign_uniform(xs, ps, 2);
          vn[i * n1 + j] =
              v[i * n1 + j] +
              dt * (0.5 * sigma * sigma * (lap1 + lap2) +
                    0.5 * sigma0 * sigma0 * (lap1 + lap2 + 2 * cross) +
                    model.H(cloud));
        }
      }
    }
    std::swap(v, vn);
    if (step % keep_every == 0 || step == 0) {
      kept.push_back(v);
      kept_times.push_back(grid.time(step));
    }
  }
  std::reverse(kept.begin(), kept.end());
  std::reverse(kept_times.begin(), kept_times.end());
  out.slices_ = std::move(kept);
  out.slice_times_ = std::move(kept_times);
  return out;
}

}  // namespace mfclab
