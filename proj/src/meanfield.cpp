#include "mfclab/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mfclab/rng.hpp"

namespace mfclab {

std::vector<double> replicate_atoms(const EmpiricalMeasure1D& mu, int msamples) {
  if (msamples <= 0) throw InvalidInput("replicate_atoms: msamples > 0 required");
  const auto& atoms = mu.atoms();
  std::vector<int> counts(atoms.size(), 0);
  std::vector<std::pair<double, std::size_t>> rema(atoms.size());
  int assigned = 0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const double exact = atoms[i].w * msamples;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    rema[i] = {exact - counts[i], i};
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  for (int r = 0; r < msamples - assigned; ++r) ++counts[rema[r % rema.size()].second];
  std::vector<double> out;
  out.reserve(msamples);
  for (std::size_t i = 0; i < atoms.size(); ++i)
    out.insert(out.end(), counts[i], atoms[i].x);
  return out;
}

MeanFieldSolution solve_mkv(const EmpiricalMeasure1D& mu0, const ModelSpec& model,
                            const TimeGrid& grid, const NoiseConfig& noise,
                            const PicardConfig& picard) {
  if (mu0.empty()) throw InvalidInput("solve_mkv: empty initial measure");
  if (noise.sigma0 != 0.0)
    throw InvalidInput(
        "solve_mkv: sigma0 > 0 is unsupported here; use the N-particle solver");
  const std::vector<double> samples = replicate_atoms(mu0, noise.paths);

  NoiseConfig cloud_noise = noise;
  cloud_noise.paths = 1;
  FbsdeOptions opts;
  opts.store_flow = true;
  FbsdeResult r = solve_fbsde(static_cast<int>(samples.size()), samples, model,
                              grid, cloud_noise, picard, opts);
  MeanFieldSolution sol;
  sol.flow = std::move(r.flow);
  sol.V = r.value;
  sol.field = std::move(r.field);
  sol.residual = r.residual;
  sol.converged = r.converged;
  sol.sweeps = r.sweeps;
  sol.window_splits = r.window_splits;
  sol.left_box = r.left_box;
  return sol;
}

double pinned_decoupling(const MeasureFlow& flow, double x, const ModelSpec& model,
                         const NoiseConfig& noise, const PicardConfig& picard) {
  if (flow.mutilde.empty()) throw InvalidInput("pinned_decoupling: empty flow");
  NoiseConfig pn = noise;
  if (pn.sigma == 0.0 && pn.sigma0 == 0.0) pn.paths = 1;
  FbsdeOptions opts;
  opts.frozen = &flow;
  opts.stream_kind = StreamKind::pinned;
  // Each "particle" is an independent pinned copy; paths of the engine stay 1
  // so the regression pools the copies.
  const int copies = (pn.sigma == 0.0 && pn.sigma0 == 0.0) ? 1 : pn.paths;
  std::vector<double> x0(copies, x);
  NoiseConfig one = pn;
  one.paths = 1;
  // Pinned copies must not interact: frozen measures guarantee that.
  FbsdeResult r = solve_fbsde(copies, x0, model, flow.grid, one, picard, opts);
  double acc = 0;
  for (double v : r.y0) acc += v;
  return acc / r.y0.size();
}

std::function<double(double, const EmpiricalMeasure1D&, double)> optimal_feedback(
    const MeanFieldSolution& sol, const ModelSpec& model) {
  auto flow = std::make_shared<MeasureFlow>(sol.flow);
  auto field = std::make_shared<RegressedField>(sol.field);
  const ModelSpec* m = &model;
  return [flow, field, m](double t, const EmpiricalMeasure1D&, double x) {
    const TimeGrid& g = flow->grid;
    int k = static_cast<int>(std::lround((t - g.t0) / g.dt()));
    k = std::clamp(k, 0, g.steps);
    const EmpiricalMeasure2D& mu = flow->at(k);
    const EmpiricalMeasure1D xm = pushforward_x(mu);
    const int kf = std::min(k, g.steps - 1);
    const double ny = field->eval(kf, x, xm.mean(), xm.second_moment());
    return m->dH_p(mu, x, ny);
  };
}

// ---------------------------------------------------------------------------
// Linearized system along a frozen flow

namespace {

struct FlowHatSystem {
  // hat-values along (subsampled) flow samples, all steps
  std::vector<std::vector<double>> Xhat, Yhat;
  std::vector<std::size_t> picked;  // indices of the subsampled flow atoms
};

// Solves the flow-level linearized FBSDE by damped Picard with a linear
// regression backward pass (basis {1, x, xhat, mean(xhat), x*xhat}).
FlowHatSystem solve_flow_hat(const MeasureFlow& flow,
                             const std::function<double(double)>& phi,
                             const ModelSpec& model, const PicardConfig& picard,
                             bool stochastic, int max_samples) {
  const int K = flow.grid.steps;
  const double dt = flow.grid.dt();
  const std::size_t S = flow.mutilde.front().size();
  const std::size_t stride = std::max<std::size_t>(1, S / max_samples);
  FlowHatSystem sys;
  for (std::size_t j = 0; j < S; j += stride) sys.picked.push_back(j);
  const std::size_t n = sys.picked.size();
  sys.Xhat.assign(K + 1, std::vector<double>(n, 0.0));
  sys.Yhat.assign(K + 1, std::vector<double>(n, 0.0));

  for (std::size_t a = 0; a < n; ++a)
    sys.Xhat[0][a] = phi(flow.at(0).atoms()[sys.picked[a]].x);

  auto avg_terms = [&](int k, double x, double y, const std::vector<double>& xh,
                       const std::vector<double>& yh, bool for_x) {
    // (1/n) sum_l d2H_{(p or x)(x)} xhat_l + d2H_{(p or x)(p)} yhat_l
    const EmpiricalMeasure2D& mu = flow.at(k);
    double acc = 0;
    for (std::size_t l = 0; l < n; ++l) {
      const auto& al = mu.atoms()[sys.picked[l]];
      if (for_x)
        acc += model.d2H_px(mu, x, y, al.x, al.p) * xh[l] +
               model.d2H_pp(mu, x, y, al.x, al.p) * yh[l];
      else
        acc += model.d2H_xx(mu, x, y, al.x, al.p) * xh[l] +
               model.d2H_xp(mu, x, y, al.x, al.p) * yh[l];
    }
    return acc / static_cast<double>(n);
  };

  double prev_res = -1;
  std::vector<std::vector<double>> old_yhat;
  for (int sweep = 0; sweep < picard.max_iter; ++sweep) {
    // forward
    for (int k = 0; k < K; ++k) {
      const EmpiricalMeasure2D& mu = flow.at(k);
      for (std::size_t a = 0; a < n; ++a) {
        const auto& atom = mu.atoms()[sys.picked[a]];
        const double drift =
            avg_terms(k, atom.x, atom.p, sys.Xhat[k], sys.Yhat[k], true) +
            model.dx_dH_p(mu, atom.x, atom.p) * sys.Xhat[k][a] +
            model.dp_dH_p(mu, atom.x, atom.p) * sys.Yhat[k][a];
        sys.Xhat[k + 1][a] = sys.Xhat[k][a] + dt * drift;
      }
    }
    // backward
    old_yhat = sys.Yhat;
    double res = 0;
    const EmpiricalMeasure2D& muT = flow.at(K);
    const EmpiricalMeasure1D xmT = pushforward_x(muT);
    std::vector<double> ynew(n, 0.0);
    {
      for (std::size_t a = 0; a < n; ++a) {
        const auto& atom = muT.atoms()[sys.picked[a]];
        double acc = 0;
        for (std::size_t l = 0; l < n; ++l)
          acc += model.d2U_mumu(xmT, atom.x, muT.atoms()[sys.picked[l]].x) *
                 sys.Xhat[K][l];
        ynew[a] = acc / n + model.dx_dU(xmT, atom.x) * sys.Xhat[K][a];
        sys.Yhat[K][a] = ynew[a];
      }
    }
    for (int k = K - 1; k >= 0; --k) {
      const EmpiricalMeasure2D& mu = flow.at(k + 1);
      for (std::size_t a = 0; a < n; ++a) {
        const auto& atom = mu.atoms()[sys.picked[a]];
        const double driver =
            avg_terms(k + 1, atom.x, atom.p, sys.Xhat[k + 1], sys.Yhat[k + 1],
                      false) +
            model.dp_dH_x(mu, atom.x, atom.p) * sys.Yhat[k + 1][a] +
            model.dx_dH_x(mu, atom.x, atom.p) * sys.Xhat[k + 1][a];
        ynew[a] = sys.Yhat[k + 1][a] + dt * driver;
      }
      // conditional expectation: in the stochastic case project on the linear
      // span of (1, x, xhat, mean(xhat), x*xhat); deterministic runs keep the
      // pathwise values.
      if (stochastic) {
        constexpr int F = 5;
        double xtx[F][F] = {}, xty[F] = {};
        double mean_xh = 0;
        for (double v : sys.Xhat[k]) mean_xh += v;
        mean_xh /= n;
        const EmpiricalMeasure2D& muk = flow.at(k);
        auto feats = [&](std::size_t a, double* f) {
          const auto& at = muk.atoms()[sys.picked[a]];
          f[0] = 1;
          f[1] = at.x;
          f[2] = sys.Xhat[k][a];
          f[3] = mean_xh;
          f[4] = at.x * sys.Xhat[k][a];
        };
        double f[F];
        for (std::size_t a = 0; a < n; ++a) {
          feats(a, f);
          for (int i = 0; i < F; ++i) {
            xty[i] += f[i] * ynew[a];
            for (int j = 0; j < F; ++j) xtx[i][j] += f[i] * f[j];
          }
        }
        // tiny ridge; solve 5x5 by Gaussian elimination
        for (int i = 0; i < F; ++i) xtx[i][i] += 1e-10 * (1 + xtx[i][i]);
        double A[F][F + 1];
        for (int i = 0; i < F; ++i) {
          for (int j = 0; j < F; ++j) A[i][j] = xtx[i][j];
          A[i][F] = xty[i];
        }
        for (int c = 0; c < F; ++c) {
          int piv = c;
          for (int rr = c + 1; rr < F; ++rr)
            if (std::abs(A[rr][c]) > std::abs(A[piv][c])) piv = rr;
          std::swap(A[c], A[piv]);
          for (int rr = 0; rr < F; ++rr) {
            if (rr == c || A[c][c] == 0) continue;
            const double fpiv = A[rr][c] / A[c][c];
            for (int cc = c; cc <= F; ++cc) A[rr][cc] -= fpiv * A[c][cc];
          }
        }
        double coef[F];
        for (int i = 0; i < F; ++i) coef[i] = A[i][i] != 0 ? A[i][F] / A[i][i] : 0;
        for (std::size_t a = 0; a < n; ++a) {
          feats(a, f);
          double v = 0;
          for (int i = 0; i < F; ++i) v += coef[i] * f[i];
          ynew[a] = v;
        }
      }
      for (std::size_t a = 0; a < n; ++a) sys.Yhat[k][a] = ynew[a];
    }
    // damping blends the previous sweep's values once per sweep; per-step
    // blending would stall the chain
    const double damp = sweep == 0 ? 0.0 : picard.damping;
    for (int k = 0; k <= K; ++k)
      for (std::size_t a = 0; a < n; ++a) {
        const double mixed =
            damp * old_yhat[k][a] + (1 - damp) * sys.Yhat[k][a];
        res = std::max(res, std::abs(mixed - old_yhat[k][a]));
        sys.Yhat[k][a] = mixed;
      }
    if (res < picard.tol) break;
    if (prev_res > 0 && res > picard.blowup_factor * std::max(prev_res, 1.0))
      throw DivergenceError("linearized flow system diverged", {res});
    if (prev_res < 0) prev_res = std::max(res, 1e-12);
  }
  return sys;
}

}  // namespace

double second_derivative_action(const MeasureFlow& flow, double x,
                                const std::function<double(double)>& phi,
                                const ModelSpec& model, const NoiseConfig& noise,
                                const PicardConfig& picard, int max_flow_samples) {
  if (flow.mutilde.empty()) throw InvalidInput("second_derivative_action: empty flow");
  const bool stochastic = noise.sigma > 0 || noise.sigma0 > 0;
  const FlowHatSystem sys =
      solve_flow_hat(flow, phi, model, picard, stochastic, max_flow_samples);
  const std::size_t n = sys.picked.size();
  const int K = flow.grid.steps;
  const double dt = flow.grid.dt();

  // pinned trajectories against the frozen flow
  NoiseConfig pn = noise;
  const int copies = stochastic ? std::min(noise.paths, 2000) : 1;
  std::vector<double> x0(copies, x);
  NoiseConfig one = pn;
  one.paths = 1;
  FbsdeOptions opts;
  opts.frozen = &flow;
  opts.stream_kind = StreamKind::pinned;
  opts.store_trajectories = true;
  FbsdeResult pinned = solve_fbsde(copies, x0, model, flow.grid, one, picard, opts);

  // hat system along every pinned copy: Xhat^x(0) = 0
  std::vector<std::vector<double>> Xh(K + 1, std::vector<double>(copies, 0.0));
  std::vector<std::vector<double>> Yh(K + 1, std::vector<double>(copies, 0.0));

  auto avg_terms = [&](int k, double px, double py, bool for_x) {
    const EmpiricalMeasure2D& mu = flow.at(k);
    double acc = 0;
    for (std::size_t l = 0; l < n; ++l) {
      const auto& al = mu.atoms()[sys.picked[l]];
      if (for_x)
        acc += model.d2H_px(mu, px, py, al.x, al.p) * sys.Xhat[k][l] +
               model.d2H_pp(mu, px, py, al.x, al.p) * sys.Yhat[k][l];
      else
        acc += model.d2H_xx(mu, px, py, al.x, al.p) * sys.Xhat[k][l] +
               model.d2H_xp(mu, px, py, al.x, al.p) * sys.Yhat[k][l];
    }
    return acc / static_cast<double>(n);
  };

  double prev_res = -1;
  std::vector<std::vector<double>> old_yh;
  for (int sweep = 0; sweep < picard.max_iter; ++sweep) {
    for (int k = 0; k < K; ++k) {
      const EmpiricalMeasure2D& mu = flow.at(k);
      for (int c = 0; c < copies; ++c) {
        const double px = pinned.X_traj[k][c], py = pinned.Y_traj[k][c];
        const double drift = avg_terms(k, px, py, true) +
                             model.dx_dH_p(mu, px, py) * Xh[k][c] +
                             model.dp_dH_p(mu, px, py) * Yh[k][c];
        Xh[k + 1][c] = Xh[k][c] + dt * drift;
      }
    }
    old_yh = Yh;
    double res = 0;
    const EmpiricalMeasure2D& muT = flow.at(K);
    const EmpiricalMeasure1D xmT = pushforward_x(muT);
    std::vector<double> ynew(copies, 0.0);
    for (int c = 0; c < copies; ++c) {
      const double px = pinned.X_traj[K][c];
      double acc = 0;
      for (std::size_t l = 0; l < n; ++l)
        acc += model.d2U_mumu(xmT, px, muT.atoms()[sys.picked[l]].x) *
               sys.Xhat[K][l];
      ynew[c] = acc / n + model.dx_dU(xmT, px) * Xh[K][c];
      Yh[K][c] = ynew[c];
    }
    for (int k = K - 1; k >= 0; --k) {
      const EmpiricalMeasure2D& mu = flow.at(k + 1);
      for (int c = 0; c < copies; ++c) {
        const double px = pinned.X_traj[k + 1][c], py = pinned.Y_traj[k + 1][c];
        const double driver = avg_terms(k + 1, px, py, false) +
                              model.dx_dH_x(mu, px, py) * Xh[k + 1][c] +
                              model.dp_dH_x(mu, px, py) * Yh[k + 1][c];
        ynew[c] = Yh[k + 1][c] + dt * driver;
      }
      if (stochastic && copies > 4) {
        // project on {1, x, xhat, x*xhat}
        constexpr int F = 4;
        double xtx[F][F] = {}, xty[F] = {};
        double f[F];
        auto feats = [&](int c, double* ff) {
          ff[0] = 1;
          ff[1] = pinned.X_traj[k][c];
          ff[2] = Xh[k][c];
          ff[3] = pinned.X_traj[k][c] * Xh[k][c];
        };
        for (int c = 0; c < copies; ++c) {
          feats(c, f);
          for (int i = 0; i < F; ++i) {
            xty[i] += f[i] * ynew[c];
            for (int j = 0; j < F; ++j) xtx[i][j] += f[i] * f[j];
          }
        }
        for (int i = 0; i < F; ++i) xtx[i][i] += 1e-10 * (1 + xtx[i][i]);
        double A[F][F + 1];
        for (int i = 0; i < F; ++i) {
          for (int j = 0; j < F; ++j) A[i][j] = xtx[i][j];
          A[i][F] = xty[i];
        }
        for (int c2 = 0; c2 < F; ++c2) {
          int piv = c2;
          for (int rr = c2 + 1; rr < F; ++rr)
            if (std::abs(A[rr][c2]) > std::abs(A[piv][c2])) piv = rr;
          std::swap(A[c2], A[piv]);
          for (int rr = 0; rr < F; ++rr) {
            if (rr == c2 || A[c2][c2] == 0) continue;
            const double fpiv = A[rr][c2] / A[c2][c2];
            for (int cc = c2; cc <= F; ++cc) A[rr][cc] -= fpiv * A[c2][cc];
          }
        }
        double coef[F];
        for (int i = 0; i < F; ++i)
          coef[i] = A[i][i] != 0 ? A[i][F] / A[i][i] : 0;
        for (int c = 0; c < copies; ++c) {
          feats(c, f);
          double v = 0;
          for (int i = 0; i < F; ++i) v += coef[i] * f[i];
          ynew[c] = v;
        }
      }
      for (int c = 0; c < copies; ++c) Yh[k][c] = ynew[c];
    }
    const double damp = sweep == 0 ? 0.0 : picard.damping;
    for (int k = 0; k <= K; ++k)
      for (int c = 0; c < copies; ++c) {
        const double mixed = damp * old_yh[k][c] + (1 - damp) * Yh[k][c];
        res = std::max(res, std::abs(mixed - old_yh[k][c]));
        Yh[k][c] = mixed;
      }
    if (res < picard.tol) break;
    if (prev_res > 0 && res > picard.blowup_factor * std::max(prev_res, 1.0))
      throw DivergenceError("linearized pinned system diverged", {res});
    if (prev_res < 0) prev_res = std::max(res, 1e-12);
  }
  double acc = 0;
  for (int c = 0; c < copies; ++c) acc += Yh[0][c];
  return acc / copies;
}

double hjb_residual(const std::vector<EmpiricalMeasure1D>& probes, double t_eval,
                    const ModelSpec& model, const TimeGrid& grid,
                    const NoiseConfig& noise, const PicardConfig& picard) {
  if (probes.empty()) throw InvalidInput("hjb_residual: no probes");
  const double dt = grid.dt();
  if (t_eval - dt < grid.t0 - 1e-12 || t_eval + dt > grid.T - 1e-12)
    throw InvalidInput("hjb_residual: t_eval must be interior to the grid");

  double worst = 0;
  for (const auto& mu : probes) {
    // dV/dt by central difference on sub-horizons, same seed (CRN)
    const int steps_lo =
        static_cast<int>(std::lround((grid.T - (t_eval - dt)) / dt));
    const int steps_hi =
        static_cast<int>(std::lround((grid.T - (t_eval + dt)) / dt));
    const TimeGrid glo(t_eval - dt, grid.T, steps_lo);
    const TimeGrid ghi(t_eval + dt, grid.T, steps_hi);
    const MeanFieldSolution slo = solve_mkv(mu, model, glo, noise, picard);
    const MeanFieldSolution shi = solve_mkv(mu, model, ghi, noise, picard);
    const double dVdt = (shi.V - slo.V) / (2 * dt);

    // decoupling field and its x-derivative at probe atoms from the flow
    // anchored at t_eval
    const int steps_mid = static_cast<int>(std::lround((grid.T - t_eval) / dt));
    const TimeGrid gmid(t_eval, grid.T, steps_mid);
    const MeanFieldSolution smid = solve_mkv(mu, model, gmid, noise, picard);
    const double hx = 1e-3 * (1 + std::abs(mu.mean()));
    double int_dxdmu = 0;
    std::vector<double> dmu_at(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double xi = mu.atoms()[i].x;
      dmu_at[i] = pinned_decoupling(smid.flow, xi, model, noise, picard);
      const double up = pinned_decoupling(smid.flow, xi + hx, model, noise, picard);
      const double dn = pinned_decoupling(smid.flow, xi - hx, model, noise, picard);
      int_dxdmu += mu.atoms()[i].w * (up - dn) / (2 * hx);
    }
    std::vector<Atom2D> lifted(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i)
      lifted[i] = {mu.atoms()[i].x, dmu_at[i], mu.atoms()[i].w};
    const EmpiricalMeasure2D mutilde{std::move(lifted)};

    double dbl = 0;
    if (noise.sigma0 > 0) {
      // Int Int d2V(x, y) mu(dx) mu(dy) = sum_i w_i * action(x_i, phi = 1)
      auto ones = [](double) { return 1.0; };
      for (std::size_t i = 0; i < mu.size(); ++i)
        dbl += mu.atoms()[i].w *
               second_derivative_action(smid.flow, mu.atoms()[i].x, ones, model,
                                        noise, picard);
    }

    const double resid = dVdt +
                         0.5 * (noise.sigma * noise.sigma + noise.sigma0 * noise.sigma0) *
                             int_dxdmu +
                         0.5 * noise.sigma0 * noise.sigma0 * dbl +
                         model.H(mutilde);
    worst = std::max(worst, std::abs(resid));
  }
  return worst;
}

double mfc_verify(const EmpiricalMeasure1D& mu0, const ModelSpec& model,
                  const std::function<double(double, const EmpiricalMeasure1D&,
                                             double)>& feedback,
                  const TimeGrid& grid, const NoiseConfig& noise) {
  if (noise.sigma0 != 0.0)
    throw InvalidInput("mfc_verify: sigma0 > 0 unsupported");
  std::vector<double> x = replicate_atoms(mu0, noise.paths);
  const std::size_t n = x.size();
  std::vector<double> th(n, 0.0), xn(n, 0.0);
  CounterRng rng(noise.seed);
  const double dt = grid.dt();
  const double sdt = std::sqrt(dt);
  EmpiricalMeasure1D law;
  double cost = 0;
  for (int k = 0; k <= grid.steps; ++k) {
    law.assign_uniform(x.data(), n);
    const double t = grid.time(k);
    for (std::size_t j = 0; j < n; ++j) th[j] = feedback(t, law, x[j]);
    const double w = (k == 0 || k == grid.steps) ? 0.5 : 1.0;
    cost += w * dt *
            control_running_cost(model, x, th, model.lipschitz_bound, 3);
    if (k == grid.steps) break;
    for (std::size_t j = 0; j < n; ++j) {
      const double s = (j & 1) ? -1.0 : 1.0;  // antithetic sample pairs
      const double xi =
          s * rng.normal(stream_id(StreamKind::auxiliary, 0, j >> 1), k);
      xn[j] = x[j] + dt * th[j] + noise.sigma * sdt * xi;
    }
    x.swap(xn);
  }
  law.assign_uniform(x.data(), n);
  return cost + model.U(law);
}

FkResult linear_master_fk(const LinearMasterCoeffs& coeffs, double t, double x,
                          const EmpiricalMeasure1D& mu, int msamples,
                          const TimeGrid& grid, std::uint64_t seed, int paths) {
  if (msamples <= 0 || paths <= 0)
    throw InvalidInput("linear_master_fk: msamples and paths must be positive");
  TimeGrid g(t, grid.T, grid.steps);
  const double dt = g.dt();
  const double sdt = std::sqrt(dt);
  CounterRng rng(seed);

  // population cloud (its conditional law is deterministic: no common noise)
  std::vector<double> pop = replicate_atoms(mu, msamples);
  std::vector<double> popn(pop.size());
  std::vector<EmpiricalMeasure1D> laws(g.steps + 1);
  EmpiricalMeasure1D law;
  for (int k = 0; k <= g.steps; ++k) {
    laws[k] = EmpiricalMeasure1D();
    laws[k].assign_uniform(pop.data(), pop.size());
    if (k == g.steps) break;
    for (std::size_t j = 0; j < pop.size(); ++j) {
      const double s = (j & 1) ? -1.0 : 1.0;
      const double xi = s * rng.normal(stream_id(StreamKind::auxiliary, 1, j >> 1), k);
      popn[j] = pop[j] + dt * coeffs.b_tilde(pop[j], laws[k]) +
                sdt * coeffs.sigma_tilde(pop[j], laws[k]) * xi;
    }
    pop.swap(popn);
  }

  // pinned particles
  double sum = 0, sum2 = 0;
  for (int p = 0; p < paths; ++p) {
    double xp = x;
    double discount = 1.0, source = 0.0;
    for (int k = 0; k < g.steps; ++k) {
      const EmpiricalMeasure1D& lw = laws[k];
      source += discount * coeffs.phi3(xp, lw) * dt;
      discount *= std::exp(-coeffs.phi2(xp, lw) * dt);
      const double s = (p & 1) ? -1.0 : 1.0;
      const double xi = s * rng.normal(stream_id(StreamKind::pinned, p >> 1), k);
      xp += dt * coeffs.b(xp, lw) + sdt * coeffs.sigma(xp, lw) * xi;
    }
    const double val = discount * coeffs.phi1(xp, laws[g.steps]) - source;
    sum += val;
    sum2 += val * val;
  }
  FkResult out;
  out.value = sum / paths;
  const double var = std::max(0.0, sum2 / paths - out.value * out.value);
  out.stderr_est = std::sqrt(var / paths);
  return out;
}

}  // namespace mfclab
