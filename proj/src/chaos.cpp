#include "mfclab/chaos.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace mfclab {

RateFit fit_rate(const std::vector<int>& Ns, const std::vector<double>& gaps) {
  if (Ns.size() != gaps.size() || Ns.size() < 2)
    throw InvalidInput("fit_rate: need matching Ns and gaps, at least 2 points");
  for (std::size_t i = 1; i < Ns.size(); ++i)
    if (Ns[i] <= Ns[i - 1]) throw InvalidInput("fit_rate: Ns must increase");
  RateFit fit;
  fit.Ns = Ns;
  fit.gaps = gaps;
  const std::size_t n = Ns.size();
  std::vector<double> lx(n), ly(n);
  bool degenerate = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(gaps[i] > 0) || !std::isfinite(gaps[i])) degenerate = true;
    lx[i] = std::log(static_cast<double>(Ns[i]));
    ly[i] = std::log(std::max(gaps[i], 1e-300));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 0.0;
  fit.conclusive = !degenerate && fit.r2 >= 0.9;
  return fit;
}

MuFamily gaussian_family(double scale, double box) {
  return [scale, box](int n) { return gaussian_quantile_family(n, scale, box); };
}

namespace {

int paths_for(const ChaosConfig& cfg, int N) {
  long p = cfg.paths_budget / N;
  p = std::max<long>(p, cfg.min_paths);
  if (p % 2) ++p;
  return static_cast<int>(p);
}

std::vector<double> atom_locations(const EmpiricalMeasure1D& mu) {
  std::vector<double> xs(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) xs[i] = mu.atoms()[i].x;
  return xs;
}

double reference_value(const EmpiricalMeasure1D& mu, const ModelSpec& model,
                       const ChaosConfig& cfg, int maxN, const TimeGrid& grid,
                       const NoiseConfig& noise, const PicardConfig& picard) {
  NoiseConfig ref = noise;
  ref.paths = cfg.reference_factor * maxN;
  const bool deterministic = noise.sigma == 0 && noise.sigma0 == 0;
  const int reps = deterministic ? 1 : std::max(1, cfg.reference_replications);
  double acc = 0;
  for (int r = 0; r < reps; ++r) {
    ref.seed = noise.seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(r);
    acc += solve_mkv(mu, model, grid, ref, picard).V;
  }
  return acc / reps;
}

}  // namespace

RateFit value_gap_sweep(const ModelSpec& model, const MuFamily& family,
                        const ChaosConfig& cfg, const TimeGrid& grid,
                        const NoiseConfig& noise, const PicardConfig& picard) {
  const int maxN = *std::max_element(cfg.Ns.begin(), cfg.Ns.end());
  std::vector<double> gaps;
  gaps.reserve(cfg.Ns.size());
  for (int N : cfg.Ns) {
    const EmpiricalMeasure1D mu = family(N);
    NoiseConfig pn = noise;
    pn.paths = paths_for(cfg, N);
    const double vN =
        solve_pontryagin(N, atom_locations(mu), model, grid, pn, picard).V_N;
    const double vRef = reference_value(mu, model, cfg, maxN, grid, noise, picard);
    gaps.push_back(std::abs(vRef - vN));
  }
  return fit_rate(cfg.Ns, gaps);
}

RateFit gradient_gap_sweep(const ModelSpec& model, const MuFamily& family,
                           const ChaosConfig& cfg, const TimeGrid& grid,
                           const NoiseConfig& noise, const PicardConfig& picard) {
  const int maxN = *std::max_element(cfg.Ns.begin(), cfg.Ns.end());
  std::vector<double> gaps;
  gaps.reserve(cfg.Ns.size());
  for (int N : cfg.Ns) {
    const EmpiricalMeasure1D mu = family(N);
    const std::vector<double> xs = atom_locations(mu);
    NoiseConfig pn = noise;
    pn.paths = paths_for(cfg, N);
    const std::vector<double> grad =
        solve_pontryagin(N, xs, model, grid, pn, picard).grad;

    NoiseConfig ref = noise;
    ref.paths = cfg.reference_factor * maxN;
    const MeanFieldSolution sol = solve_mkv(mu, model, grid, ref, picard);
    NoiseConfig pin = noise;
    pin.paths = cfg.pinned_paths;
    double worst = 0;
    for (int k = 0; k < N; ++k) {
      const double dmu = pinned_decoupling(sol.flow, xs[k], model, pin, picard);
      worst = std::max(worst, std::abs(grad[k] - dmu));
    }
    gaps.push_back(worst);
  }
  return fit_rate(cfg.Ns, gaps);
}

std::vector<double> quantile_projection(const EmpiricalMeasure1D& mu, int n) {
  if (n <= 0) throw InvalidInput("quantile_projection: n > 0 required");
  std::vector<Atom1D> sorted = mu.atoms();
  std::sort(sorted.begin(), sorted.end(),
            [](const Atom1D& a, const Atom1D& b) { return a.x < b.x; });
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    const double u = (i + 0.5) / n;
    double cum = 0;
    double val = sorted.back().x;
    for (const auto& a : sorted) {
      cum += a.w;
      if (cum >= u - 1e-15) {
        val = a.x;
        break;
      }
    }
    out[i] = val;
  }
  return out;
}

std::function<double(double, const EmpiricalMeasure1D&)> lift_gradient(
    const ModelSpec& model, int N, const TimeGrid& grid, const NoiseConfig& noise,
    const PicardConfig& picard, double lipC) {
  if (N < 2) throw InvalidInput("lift_gradient: N >= 2 required");
  const ModelSpec* m = &model;
  return [m, N, grid, noise, picard, lipC](double x, const EmpiricalMeasure1D& mu) {
    const std::vector<double> proj = quantile_projection(mu, N - 1);
    const EmpiricalMeasure1D proj_mu = EmpiricalMeasure1D::uniform(proj);
    const double d0 = wasserstein_1d(proj_mu, mu, 2);
    const double delta = std::max(d0, 1e-3);

    double best = 0;
    bool first = true;
    for (double shift : {0.0, delta, -delta}) {
      std::vector<double> state(1, x);
      std::vector<double> cand = proj;
      for (double& c : cand) c += shift;
      state.insert(state.end(), cand.begin(), cand.end());
      const auto [v, grad] = value_and_grad(N, state, *m, grid, noise, picard);
      (void)v;
      const double dist =
          wasserstein_1d(EmpiricalMeasure1D::uniform(cand), mu, 2);
      const double candidate = grad[0] + lipC * dist;
      if (first || candidate < best) best = candidate;
      first = false;
    }
    return best;
  };
}

HessianSweepReport hessian_bound_sweep(const ModelSpec& model,
                                       const MuFamily& family,
                                       const std::vector<int>& Ns,
                                       const TimeGrid& grid,
                                       const NoiseConfig& noise,
                                       const PicardConfig& picard, double h) {
  HessianSweepReport rep;
  for (int N : Ns) {
    const EmpiricalMeasure1D mu = family(N);
    const HessianResult hres =
        hessian_fd(N, atom_locations(mu), model, grid, noise, picard, h);
    Eigen::MatrixXd H(N, N);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) H(i, j) = hres.matrix[i][j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
    HessianSweepEntry e;
    e.N = N;
    e.min_eig = eig.eigenvalues().minCoeff();
    e.max_eig_scaled = N * eig.eigenvalues().maxCoeff();
    rep.entries.push_back(e);
  }
  double acc = 0;
  for (const auto& e : rep.entries) acc += e.max_eig_scaled;
  rep.fitted_C = acc / rep.entries.size();
  for (const auto& e : rep.entries)
    rep.max_rel_dev = std::max(
        rep.max_rel_dev, std::abs(e.max_eig_scaled - rep.fitted_C) /
                             std::max(std::abs(rep.fitted_C), 1e-12));
  return rep;
}

}  // namespace mfclab
