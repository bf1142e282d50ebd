#include "mfclab/nash.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "mfclab/rng.hpp"

namespace mfclab {

namespace {

std::vector<int> ranks_of(const std::vector<double>& x) {
  std::vector<int> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return x[a] < x[b]; });
  std::vector<int> rank(x.size());
  for (std::size_t r = 0; r < idx.size(); ++r) rank[idx[r]] = static_cast<int>(r);
  return rank;
}

// sup_p { breveH(bm, x, p) - theta p } via the monotone derivative root,
// capped at |p| <= bound (the confined transform).
double lagrangian_rooted(const MfgcSpec& spec, double x, double theta,
                         const EmpiricalMeasure2D& bm, double bound) {
  auto g = [&](double p) { return spec.d_breveH_p(bm, x, p) - theta; };
  double lo = -bound, hi = bound;
  double p_star;
  const double glo = g(lo), ghi = g(hi);
  if (glo <= 0)
    p_star = lo;
  else if (ghi >= 0)
    p_star = hi;
  else {
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) > 0 ? lo : hi) = mid;
    }
    p_star = 0.5 * (lo + hi);
  }
  return spec.breveH(bm, x, p_star) - theta * p_star;
}

}  // namespace

FeedbackProfile build_equilibrium_feedback(const ModelSpec& model, int N,
                                           const std::vector<double>& x0,
                                           const TimeGrid& grid,
                                           const NoiseConfig& noise,
                                           const PicardConfig& picard) {
  // dispersed starts widen the regression design so the memoized field is
  // valid wherever the game wanders
  FbsdeOptions opts;
  opts.initial_jitter = 1.0;
  FbsdeResult raw = solve_fbsde(N, x0, model, grid, noise, picard, opts);
  ParticleSolution sol;
  sol.field = std::move(raw.field);
  auto field = std::make_shared<RegressedField>(std::move(sol.field));
  const ModelSpec* m = &model;
  const TimeGrid g = grid;

  FeedbackProfile profile;
  profile.N = N;
  profile.provenance = "equilibrium-candidate";
  profile.all = [field, m, g, N](double t, const std::vector<double>& x,
                                 std::vector<double>& out) {
    int k = static_cast<int>(std::lround((t - g.t0) / g.dt()));
    k = std::clamp(k, 0, g.steps - 1);
    double mean = 0, m2 = 0;
    for (double v : x) {
      mean += v;
      m2 += v * v;
    }
    mean /= N;
    m2 /= N;
    static thread_local std::vector<double> ny;
    ny.resize(N);
    for (int i = 0; i < N; ++i) ny[i] = field->eval(k, x[i], mean, m2);
    static thread_local EmpiricalMeasure2D cloud;
    cloud.assign_uniform(x.data(), ny.data(), N);
    out.resize(N);
    for (int i = 0; i < N; ++i) out[i] = m->dH_p(cloud, x[i], ny[i]);
  };
  profile.thetas.resize(N);
  for (int k = 0; k < N; ++k) {
    profile.thetas[k] = [k, all = profile.all](double t,
                                               const std::vector<double>& x) {
      std::vector<double> out;
      all(t, x, out);
      return out[k];
    };
  }
  return profile;
}

namespace {

// Shared game simulator. When `only_player` >= 0, only that player's cost is
// accumulated (best-response search); `override_k` replaces player k's control.
GameCosts run_game(const FeedbackProfile& profile, const std::vector<double>& x0,
                   const MfgcSpec& mfgc, const TimeGrid& grid,
                   const NoiseConfig& noise, int only_player,
                   const std::function<double(double, const std::vector<double>&)>*
                       override_k = nullptr,
                   int override_player = -1) {
  const int N = profile.N;
  if (static_cast<int>(x0.size()) != N)
    throw InvalidInput("simulate_game: x0 size mismatch");
  const std::vector<int> rank = ranks_of(x0);
  const double dt = grid.dt();
  const double sdt = std::sqrt(dt);
  CounterRng rng(noise.seed);
  const double bound = mfgc.base.lipschitz_bound;

  int M = noise.paths;
  if (M % 2) ++M;
  std::vector<double> cost(N, 0.0), cost2(N, 0.0);
  std::vector<double> x(N), th(N), others_x(std::max(N - 1, 1)),
      others_th(std::max(N - 1, 1));
  EmpiricalMeasure2D breve;
  EmpiricalMeasure1D xm;

  for (int path = 0; path < M; ++path) {
    x = x0;
    std::vector<double> acc(N, 0.0);
    const double sgn = (path & 1) ? -1.0 : 1.0;
    const std::uint64_t pair = static_cast<std::uint64_t>(path) >> 1;
    for (int step = 0; step <= grid.steps; ++step) {
      const double t = grid.time(step);
      profile.all(t, x, th);
      if (override_k && override_player >= 0)
        th[override_player] = (*override_k)(t, x);
      const double w = (step == 0 || step == grid.steps) ? 0.5 : 1.0;
      for (int k = 0; k < N; ++k) {
        if (only_player >= 0 && k != only_player) continue;
        if (N == 1) {
          // degenerate single-player game: the population frame is the
          // player's own state-control pair
          breve.assign_uniform(&x[k], &th[k], 1);
        } else {
          int c = 0;
          for (int j = 0; j < N; ++j) {
            if (j == k) continue;
            others_x[c] = x[j];
            others_th[c] = th[j];
            ++c;
          }
          breve.assign_uniform(others_x.data(), others_th.data(), N - 1);
        }
        acc[k] += w * dt * lagrangian_rooted(mfgc, x[k], th[k], breve, bound);
      }
      if (step == grid.steps) break;
      const double common =
          noise.sigma0 > 0
              ? noise.sigma0 * sdt * sgn *
                    rng.normal(stream_id(StreamKind::common, pair), step)
              : 0.0;
      for (int j = 0; j < N; ++j) {
        const double xi =
            sgn * rng.normal(stream_id(StreamKind::idiosyncratic, pair, rank[j]),
                             step);
        x[j] += dt * th[j] + noise.sigma * sdt * xi + common;
      }
    }
    for (int k = 0; k < N; ++k) {
      if (only_player >= 0 && k != only_player) continue;
      if (N == 1) {
        xm.assign_uniform(&x[k], 1);
      } else {
        int c = 0;
        for (int j = 0; j < N; ++j)
          if (j != k) others_x[c++] = x[j];
        xm.assign_uniform(others_x.data(), N - 1);
      }
      acc[k] += mfgc.G(x[k], xm);
      cost[k] += acc[k];
      cost2[k] += acc[k] * acc[k];
    }
  }
  GameCosts out;
  out.J.assign(N, 0.0);
  out.stderr_est.assign(N, 0.0);
  for (int k = 0; k < N; ++k) {
    if (only_player >= 0 && k != only_player) continue;
    out.J[k] = cost[k] / M;
    const double var = std::max(0.0, cost2[k] / M - out.J[k] * out.J[k]);
    out.stderr_est[k] = std::sqrt(var / M);
  }
  return out;
}

}  // namespace

GameCosts simulate_game(const FeedbackProfile& profile,
                        const std::vector<double>& x0, const MfgcSpec& mfgc,
                        const TimeGrid& grid, const NoiseConfig& noise) {
  return run_game(profile, x0, mfgc, grid, noise, -1);
}

FkResult proxy_cost(const MfgcSpec& mfgc, double t, double x_k,
                    const EmpiricalMeasure1D& mu, const TimeGrid& grid,
                    const NoiseConfig& noise, const PicardConfig& picard,
                    int rep_paths) {
  if (noise.sigma0 != 0.0)
    throw InvalidInput("proxy_cost: sigma0 > 0 unsupported (mean-field side)");
  const int steps = static_cast<int>(std::lround((grid.T - t) / grid.dt()));
  if (steps < 1) throw InvalidInput("proxy_cost: t too close to T");
  const TimeGrid g(t, grid.T, steps);
  MeanFieldSolution sol = solve_mkv(mu, mfgc.base, g, noise, picard);

  // per-step compressed state-control population for the Lagrangian argument
  const int comp = 64;
  std::vector<EmpiricalMeasure2D> breves;
  std::vector<double> flow_mean(g.steps + 1), flow_m2(g.steps + 1);
  breves.reserve(g.steps + 1);
  for (int k = 0; k <= g.steps; ++k) {
    const EmpiricalMeasure2D& mt = sol.flow.at(k);
    const EmpiricalMeasure1D xm = pushforward_x(mt);
    flow_mean[k] = xm.mean();
    flow_m2[k] = xm.second_moment();
    const EmpiricalMeasure2D full = breve_from_tilde(mfgc.base, mt);
    if (static_cast<int>(full.size()) <= comp) {
      breves.push_back(full);
      continue;
    }
    const std::size_t stride = full.size() / comp;
    std::vector<double> xs, ps;
    for (std::size_t j = 0; j < full.size(); j += stride) {
      xs.push_back(full.atoms()[j].x);
      ps.push_back(full.atoms()[j].p);
    }
    breves.push_back(EmpiricalMeasure2D::uniform(xs, ps));
  }

  const double dt = g.dt();
  const double sdt = std::sqrt(dt);
  CounterRng rng(noise.seed);
  const double bound = mfgc.base.lipschitz_bound;
  int P = rep_paths;
  if (P % 2) ++P;
  double sum = 0, sum2 = 0;
  for (int p = 0; p < P; ++p) {
    double x = x_k, acc = 0;
    const double sgn = (p & 1) ? -1.0 : 1.0;
    for (int k = 0; k <= g.steps; ++k) {
      const int kf = std::min(k, g.steps - 1);
      const double ny = sol.field.eval(kf, x, flow_mean[k], flow_m2[k]);
      const double th = mfgc.base.dH_p(sol.flow.at(k), x, ny);
      const double w = (k == 0 || k == g.steps) ? 0.5 : 1.0;
      acc += w * dt * lagrangian_rooted(mfgc, x, th, breves[k], bound);
      if (k == g.steps) break;
      const double xi =
          sgn * rng.normal(stream_id(StreamKind::pinned, p >> 1), k);
      x += dt * th + noise.sigma * sdt * xi;
    }
    acc += mfgc.G(x, pushforward_x(sol.flow.at(g.steps)));
    sum += acc;
    sum2 += acc * acc;
  }
  FkResult out;
  out.value = sum / P;
  out.stderr_est = std::sqrt(std::max(0.0, sum2 / P - out.value * out.value) / P);
  return out;
}

namespace {

// Explicit backward solve of the deviating player's HJB on a 2-D grid with
// the other player frozen to the profile; returns the time-indexed feedback.
class GridBestResponse {
 public:
  GridBestResponse(const FeedbackProfile& profile, int k, const MfgcSpec& mfgc,
                   const TimeGrid& grid, const NoiseConfig& noise,
                   const BRConfig& cfg)
      : k_(k), box_(cfg.grid_box), cells_(cfg.grid_cells) {
    if (profile.N != 2)
      throw InvalidInput("grid best response supports N = 2 only");
    const int other = 1 - k_;
    grid_ = TimeGrid(grid.t0, grid.T, cfg.grid_steps);
    const double dt = grid_.dt();
    const double hx = 2 * box_ / cells_;
    const double diff = noise.sigma * noise.sigma + noise.sigma0 * noise.sigma0;
    if (diff * dt / (hx * hx) * 2 > 0.5)
      throw InvalidInput("grid best response: CFL violated, dt = " +
                         std::to_string(dt));
    const int n1 = cells_ + 1;
    std::vector<double> v(static_cast<std::size_t>(n1) * n1),
        vn(static_cast<std::size_t>(n1) * n1);
    for (int i = 0; i <= cells_; ++i)
      for (int j = 0; j <= cells_; ++j) {
        const double xk = node(i), xo = node(j);
        v[idx(i, j)] = mfgc.G(xk, EmpiricalMeasure1D::dirac(xo));
      }
    beta_.assign(grid_.steps, std::vector<float>(v.size(), 0.0f));
    std::vector<double> st(2);
    std::vector<double> th(2);
    const double bound = mfgc.base.lipschitz_bound;
    for (int step = grid_.steps - 1; step >= 0; --step) {
      const double t = grid_.time(step);
      for (int i = 0; i <= cells_; ++i) {
        for (int j = 0; j <= cells_; ++j) {
          const double xk = node(i), xo = node(j);
          st[k_] = xk;
          st[other] = xo;
          profile.all(t, st, th);
          const double th_o = th[other];
          // upwind transport of the frozen player
          double dvo;
          if (th_o >= 0)
            dvo = (j < cells_ ? (v[idx(i, j + 1)] - v[idx(i, j)]) / hx : 0.0);
          else
            dvo = (j > 0 ? (v[idx(i, j)] - v[idx(i, j - 1)]) / hx : 0.0);
          double dvk;
          if (i == 0)
            dvk = (v[idx(1, j)] - v[idx(0, j)]) / hx;
          else if (i == cells_)
            dvk = (v[idx(cells_, j)] - v[idx(cells_ - 1, j)]) / hx;
          else
            dvk = (v[idx(i + 1, j)] - v[idx(i - 1, j)]) / (2 * hx);
          double lap = 0;
          if (i > 0 && i < cells_)
            lap += (v[idx(i + 1, j)] - 2 * v[idx(i, j)] + v[idx(i - 1, j)]) /
                   (hx * hx);
          if (j > 0 && j < cells_)
            lap += (v[idx(i, j + 1)] - 2 * v[idx(i, j)] + v[idx(i, j - 1)]) /
                   (hx * hx);
          const double xs[1] = {xo};
          const double ps[1] = {th_o};
          breve_.assign_uniform(xs, ps, 1);
          const double ham = hamiltonian(mfgc, xk, dvk, bound);
          vn[idx(i, j)] =
              v[idx(i, j)] + dt * (0.5 * diff * lap + th_o * dvo + ham);
          beta_[step][idx(i, j)] =
              static_cast<float>(mfgc.d_breveH_p(breve_, xk, dvk));
        }
      }
      std::swap(v, vn);
    }
  }

  double feedback(double t, const std::vector<double>& x) const {
    int step = static_cast<int>(std::lround((t - grid_.t0) / grid_.dt()));
    step = std::clamp(step, 0, grid_.steps - 1);
    const double hx = 2 * box_ / cells_;
    const double si = std::clamp((x[k_] + box_) / hx, 0.0, double(cells_));
    const double sj =
        std::clamp((x[1 - k_] + box_) / hx, 0.0, double(cells_));
    const int i = std::min(static_cast<int>(si), cells_ - 1);
    const int j = std::min(static_cast<int>(sj), cells_ - 1);
    const double a = si - i, b = sj - j;
    const auto& B = beta_[step];
    return (1 - a) * (1 - b) * B[idx(i, j)] + a * (1 - b) * B[idx(i + 1, j)] +
           (1 - a) * b * B[idx(i, j + 1)] + a * b * B[idx(i + 1, j + 1)];
  }

 private:
  double hamiltonian(const MfgcSpec& mfgc, double xk, double p, double bound) {
    // inf_theta { Ltilde + theta p } = breveH(breve, xk, p)
    (void)bound;
    return mfgc.breveH(breve_, xk, p);
  }
  double node(int i) const { return -box_ + 2 * box_ * i / cells_; }
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(i) * (cells_ + 1) + j;
  }
  int k_;
  double box_;
  int cells_;
  TimeGrid grid_{0, 1, 1};
  std::vector<std::vector<float>> beta_;
  EmpiricalMeasure2D breve_;
};

}  // namespace

DeviationEntry best_response_deviation(const FeedbackProfile& profile, int k,
                                       const std::vector<double>& x0,
                                       const MfgcSpec& mfgc, const TimeGrid& grid,
                                       const NoiseConfig& noise,
                                       const BRConfig& search) {
  const int N = profile.N;
  DeviationEntry entry;
  entry.N = N;
  entry.player = k;
  double spread = 0;
  for (int j = 0; j < N; ++j)
    if (j != k) spread += std::abs(x0[j] - x0[k]);
  entry.spread = N > 1 ? spread / (N - 1) : 0.0;

  NoiseConfig report_noise = noise;
  report_noise.paths = search.report_paths;
  const GameCosts base = run_game(profile, x0, mfgc, grid, report_noise, k);
  entry.J_k = base.J[k];
  entry.mc_stderr = base.stderr_est[k];

  double best = entry.J_k;
  if (search.mode == "grid") {
    GridBestResponse br(profile, k, mfgc, grid, noise, search);
    std::function<double(double, const std::vector<double>&)> beta =
        [&br](double t, const std::vector<double>& x) { return br.feedback(t, x); };
    const GameCosts dev =
        run_game(profile, x0, mfgc, grid, report_noise, k, &beta, k);
    best = std::min(best, dev.J[k]);
  } else if (search.mode == "parametric") {
    const int nb = (search.time_degree + 1) * 3;
    std::vector<double> coef(nb, 0.0);
    NoiseConfig search_noise = noise;
    search_noise.paths = search.search_paths;
    const double t0 = grid.t0, T = grid.T;
    auto beta_of = [&](const std::vector<double>& c) {
      return std::function<double(double, const std::vector<double>&)>(
          [&, c](double t, const std::vector<double>& x) {
            std::vector<double> th;
            profile.all(t, x, th);
            const double s = (t - t0) / (T - t0);
            double mean = 0;
            for (double v : x) mean += v;
            mean /= x.size();
            double add = 0;
            double tp = 1.0;
            for (int d = 0; d <= search.time_degree; ++d) {
              add += tp * (c[3 * d] + c[3 * d + 1] * x[k] + c[3 * d + 2] * mean);
              tp *= s;
            }
            return th[k] + add;
          });
    };
    auto cost_of = [&](const std::vector<double>& c) {
      auto beta = beta_of(c);
      return run_game(profile, x0, mfgc, grid, search_noise, k, &beta, k).J[k];
    };
    double J0 = cost_of(coef);
    double delta = search.step0;
    for (int sweep = 0; sweep < search.sweeps; ++sweep) {
      for (int i = 0; i < nb; ++i) {
        std::vector<double> cp = coef, cm = coef;
        cp[i] += delta;
        cm[i] -= delta;
        const double Jp = cost_of(cp), Jm = cost_of(cm);
        const double curv = Jp - 2 * J0 + Jm;
        double move;
        if (curv > 1e-14)
          move = std::clamp(-delta * (Jp - Jm) / (2 * curv), -3 * delta, 3 * delta);
        else
          move = Jp < Jm ? delta : -delta;
        std::vector<double> cand = coef;
        cand[i] += move;
        const double Jc = cost_of(cand);
        if (Jc < J0) {
          coef = cand;
          J0 = Jc;
        } else if (Jp < J0) {
          coef = cp;
          J0 = Jp;
        } else if (Jm < J0) {
          coef = cm;
          J0 = Jm;
        }
      }
      delta *= 0.5;
    }
    // re-evaluate the winner at reporting accuracy with the base's streams
    auto beta = beta_of(coef);
    const GameCosts dev =
        run_game(profile, x0, mfgc, grid, report_noise, k, &beta, k);
    best = std::min(best, dev.J[k]);
  } else {
    throw InvalidInput("best_response_deviation: unknown mode " + search.mode);
  }
  entry.J_star_lb = best;
  entry.epsilon = entry.J_k - best;
  return entry;
}

NashSweepResult nash_sweep(const ModelSpec& model, const MfgcSpec& mfgc,
                           const std::vector<int>& Ns, const MuFamily& init_family,
                           const TimeGrid& grid, const NoiseConfig& noise,
                           const PicardConfig& picard, const BRConfig& search) {
  NashSweepResult out;
  std::vector<double> eps_means;
  for (int N : Ns) {
    const EmpiricalMeasure1D mu = init_family(N);
    std::vector<double> x0(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) x0[i] = mu.atoms()[i].x;
    const FeedbackProfile profile =
        build_equilibrium_feedback(model, N, x0, grid, noise, picard);
    double acc = 0;
    for (int k = 0; k < N; ++k) {
      DeviationEntry e =
          best_response_deviation(profile, k, x0, mfgc, grid, noise, search);
      acc += std::max(e.epsilon, 0.0);
      out.entries.push_back(e);
    }
    eps_means.push_back(std::max(acc / N, 1e-12));
  }
  out.fit = fit_rate(Ns, eps_means);
  return out;
}

}  // namespace mfclab
