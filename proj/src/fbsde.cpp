#include "mfclab/fbsde.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <cstdlib>

namespace mfclab {

namespace {

constexpr int kF = RegressedField::kFeatures;

class Engine {
 public:
  Engine(int n_particles, const std::vector<double>& x0, const ModelSpec& model,
         const TimeGrid& grid, const NoiseConfig& noise, const PicardConfig& picard,
         const FbsdeOptions& opts)
      : N_(n_particles),
        model_(model),
        grid_(grid),
        noise_(noise),
        picard_(picard),
        opts_(opts) {
    if (n_particles <= 0) throw InvalidInput("solve_fbsde: need particles");
    if (static_cast<int>(x0.size()) != n_particles)
      throw InvalidInput("solve_fbsde: x0 size must equal particle count");
    for (double v : x0)
      if (!std::isfinite(v)) throw InvalidInput("solve_fbsde: x0 must be finite");
    noise.validate();
    picard.validate();
    deterministic_ = noise.sigma == 0.0 && noise.sigma0 == 0.0;
    M_ = deterministic_ ? 1 : noise.paths;
    if (opts.antithetic && !deterministic_ && M_ > 1 && M_ % 2 != 0) ++M_;
    S_ = static_cast<std::size_t>(M_) * N_;
    x0_ = x0;
    terminal_ = opts.terminal_gradient
                    ? opts.terminal_gradient
                    : [this](const EmpiricalMeasure1D& mu, double x) {
                        return model_.dU(mu, x);
                      };
    const int K = grid.steps;
    X_.assign(K + 1, std::vector<double>(S_, 0.0));
    coeff_.assign(K + 1, {});
    Ynext_.assign(S_, 0.0);
    Yhere_.assign(S_, 0.0);
    ny_buf_.assign(N_, 0.0);
    xpred_.assign(N_, 0.0);
    if (deterministic_) Ydet_.assign(K + 1, std::vector<double>(S_, 0.0));
    cloud_.assign_uniform(x0_.data(), ny_buf_.data(), N_);
    marg_.assign_uniform(x0_.data(), N_);
    precompute_noise();
  }

  FbsdeResult run() {
    FbsdeResult res;
    picard_window(0, grid_.steps, 0, res);
    value_pass(res);
    res.field.coeffs = coeff_;
    res.y0.assign(N_, 0.0);
    double mean0, m20;
    path_moments(0, 0, mean0, m20);
    for (int i = 0; i < N_; ++i) res.y0[i] = y_value(0, 0, i, mean0, m20);
    res.left_box = left_box_;
    return res;
  }

 private:
  double dt() const { return grid_.dt(); }

  // Brownian increments are drawn once per solve; noise streams are keyed by
  // the rank of the initial position so relabeling particles permutes all
  // outputs exactly.
  void precompute_noise() {
    rank_.resize(N_);
    std::vector<int> order(N_);
    for (int i = 0; i < N_; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return x0_[a] < x0_[b]; });
    for (int r = 0; r < N_; ++r) rank_[order[r]] = r;
    if (deterministic_) return;
    const CounterRng rng(noise_.seed);
    const int K = grid_.steps;
    if (noise_.sigma > 0) {
      xi_.assign(static_cast<std::size_t>(K) * S_, 0.0f);
      for (int m = 0; m < M_; ++m)
        for (int i = 0; i < N_; ++i) {
          double sign = 1.0;
          std::uint64_t stream;
          if (!opts_.antithetic) {
            stream = stream_id(opts_.stream_kind, m, rank_[i]);
          } else if (M_ > 1) {
            sign = (m & 1) ? -1.0 : 1.0;
            stream = stream_id(opts_.stream_kind, m >> 1, rank_[i]);
          } else {
            sign = (rank_[i] & 1) ? -1.0 : 1.0;
            stream = stream_id(opts_.stream_kind, m, rank_[i] >> 1);
          }
          for (int k = 0; k < K; ++k)
            xi_[static_cast<std::size_t>(k) * S_ + m * N_ + i] =
                static_cast<float>(sign * rng.normal(stream, k));
        }
      // cloud mode: moment-match each step's increment batch across the
      // exchangeable samples (mean is exactly zero from the antithetic
      // pairing; normalizing the batch variance removes the chi-square
      // fluctuation of the empirical law at O(1/M) weak bias)
      if (M_ == 1 && opts_.antithetic && N_ > 8) {
        for (int k = 0; k < K; ++k) {
          float* row = &xi_[static_cast<std::size_t>(k) * S_];
          double s1 = 0, s2 = 0;
          for (int i = 0; i < N_; ++i) s1 += row[i];
          const double mean = s1 / N_;
          for (int i = 0; i < N_; ++i) {
            const double c = row[i] - mean;
            s2 += c * c;
          }
          const double scale = s2 > 0 ? 1.0 / std::sqrt(s2 / N_) : 1.0;
          for (int i = 0; i < N_; ++i)
            row[i] = static_cast<float>((row[i] - mean) * scale);
        }
      }
    }
    if (noise_.sigma0 > 0) {
      xi0_.assign(static_cast<std::size_t>(K) * M_, 0.0f);
      for (int m = 0; m < M_; ++m) {
        double sign = 1.0;
        std::uint64_t stream;
        if (!opts_.antithetic || M_ == 1) {
          stream = stream_id(StreamKind::common, m);
        } else {
          sign = (m & 1) ? -1.0 : 1.0;
          stream = stream_id(StreamKind::common, m >> 1);
        }
        for (int k = 0; k < K; ++k)
          xi0_[static_cast<std::size_t>(k) * M_ + m] =
              static_cast<float>(sign * rng.normal(stream, k));
      }
    }
  }

  void path_moments(int k, int m, double& mean, double& m2) const {
    const double* x = &X_[k][static_cast<std::size_t>(m) * N_];
    double s1 = 0, s2 = 0;
    for (int i = 0; i < N_; ++i) {
      s1 += x[i];
      s2 += x[i] * x[i];
    }
    mean = s1 / N_;
    m2 = s2 / N_;
  }

  double y_value(int k, int m, int i, double mean, double m2) const {
    if (deterministic_) return Ydet_[k][static_cast<std::size_t>(m) * N_ + i];
    const double x = X_[k][static_cast<std::size_t>(m) * N_ + i];
    const auto& c = coeff_[k];
    return c[0] + c[1] * x + c[2] * mean + c[3] * x * x + c[4] * x * mean +
           c[5] * mean * mean + c[6] * m2;
  }

  // Fills ny_buf_ and the scratch cloud for (k, path); returns the measure to
  // evaluate coefficients against (frozen flow in pinned mode).
  const EmpiricalMeasure2D& population(int k, int m) {
    double mean, m2;
    path_moments(k, m, mean, m2);
    for (int i = 0; i < N_; ++i) ny_buf_[i] = y_value(k, m, i, mean, m2);
    if (opts_.frozen) return opts_.frozen->at(k);
    cloud_.assign_uniform(&X_[k][static_cast<std::size_t>(m) * N_],
                          ny_buf_.data(), N_);
    return cloud_;
  }

  // Heun step: predict with the field at k, correct with the field at k + 1
  // evaluated on the predicted population.
  void forward_pass() {
    for (std::size_t j = 0; j < S_; ++j) X_[0][j] = x0_[j % N_];
    if (opts_.initial_jitter > 0 && !deterministic_) {
      const CounterRng rng(noise_.seed);
      for (int m = 1; m < M_; ++m)  // path 0 keeps the nominal start
        for (int i = 0; i < N_; ++i)
          X_[0][static_cast<std::size_t>(m) * N_ + i] +=
              opts_.initial_jitter *
              rng.normal(stream_id(StreamKind::auxiliary, m, i), 0);
    }
    const double h = dt();
    const double sdt = std::sqrt(h);
    const int K = grid_.steps;
    for (int k = 0; k < K; ++k) {
      for (int m = 0; m < M_; ++m) {
        const EmpiricalMeasure2D& mu = population(k, m);
        const double* x = &X_[k][static_cast<std::size_t>(m) * N_];
        double* xn = &X_[k + 1][static_cast<std::size_t>(m) * N_];
        const double common =
            noise_.sigma0 > 0
                ? noise_.sigma0 * sdt * xi0_[static_cast<std::size_t>(k) * M_ + m]
                : 0.0;
        for (int i = 0; i < N_; ++i) {
          drift_buf_[i] = model_.dH_p(mu, x[i], ny_buf_[i]);
          const double dw =
              noise_.sigma > 0
                  ? noise_.sigma * sdt *
                        xi_[static_cast<std::size_t>(k) * S_ + m * N_ + i]
                  : 0.0;
          noise_buf_[i] = dw + common;
          xpred_[i] = x[i] + h * drift_buf_[i] + noise_buf_[i];
          if (!std::isfinite(xpred_[i]))
            throw DivergenceError("forward state blew up", residual_trace_);
        }
        // corrector drift at the predicted state with the next-step field
        double meanp = 0, m2p = 0;
        for (int i = 0; i < N_; ++i) {
          meanp += xpred_[i];
          m2p += xpred_[i] * xpred_[i];
        }
        meanp /= N_;
        m2p /= N_;
        const int kf = std::min(k + 1, K - 1);
        if (deterministic_) {
          // pathwise mode: previous-sweep values at the next step stand in
          // for the field (self-consistent at the Picard fixed point)
          for (int i = 0; i < N_; ++i)
            ny_buf_[i] = Ydet_[kf][static_cast<std::size_t>(m) * N_ + i];
        } else {
          const auto& c = coeff_[kf];
          for (int i = 0; i < N_; ++i)
            ny_buf_[i] = c[0] + c[1] * xpred_[i] + c[2] * meanp +
                         c[3] * xpred_[i] * xpred_[i] + c[4] * xpred_[i] * meanp +
                         c[5] * meanp * meanp + c[6] * m2p;
        }
        const EmpiricalMeasure2D* mup;
        if (opts_.frozen) {
          mup = &opts_.frozen->at(kf);
        } else {
          cloud_.assign_uniform(xpred_.data(), ny_buf_.data(), N_);
          mup = &cloud_;
        }
        for (int i = 0; i < N_; ++i) {
          const double drift2 = model_.dH_p(*mup, xpred_[i], ny_buf_[i]);
          xn[i] = x[i] + 0.5 * h * (drift_buf_[i] + drift2) + noise_buf_[i];
          if (!model_.box.contains(xn[i])) left_box_ = true;
          if (!std::isfinite(xn[i]))
            throw DivergenceError("forward state blew up", residual_trace_);
        }
      }
    }
  }

  void fill_terminal_values(std::vector<double>& out) {
    const int K = grid_.steps;
    for (int m = 0; m < M_; ++m) {
      const double* x = &X_[K][static_cast<std::size_t>(m) * N_];
      if (opts_.frozen) {
        const EmpiricalMeasure1D xm = pushforward_x(opts_.frozen->at(K));
        for (int i = 0; i < N_; ++i)
          out[static_cast<std::size_t>(m) * N_ + i] = terminal_(xm, x[i]);
      } else {
        marg_.assign_uniform(x, N_);
        for (int i = 0; i < N_; ++i)
          out[static_cast<std::size_t>(m) * N_ + i] = terminal_(marg_, x[i]);
      }
    }
  }

  // driver dH_x evaluated on the population implied by y-values `ys` at step k
  void driver_at(int k, const std::vector<double>& ys, std::vector<double>& out) {
    for (int m = 0; m < M_; ++m) {
      const double* x = &X_[k][static_cast<std::size_t>(m) * N_];
      const double* y = &ys[static_cast<std::size_t>(m) * N_];
      const EmpiricalMeasure2D* mu;
      if (opts_.frozen) {
        mu = &opts_.frozen->at(k);
      } else {
        cloud_.assign_uniform(x, y, N_);
        mu = &cloud_;
      }
      for (int i = 0; i < N_; ++i)
        out[static_cast<std::size_t>(m) * N_ + i] = model_.dH_x(*mu, x[i], y[i]);
    }
  }

  // least-squares fit of `target` on the step-k features
  std::array<double, kF> regress(int k, const std::vector<double>& target) {
    Eigen::Matrix<double, kF, kF> xtx;
    Eigen::Matrix<double, kF, 1> xty;
    xtx.setZero();
    xty.setZero();
    std::array<double, kF> f;
    for (int m = 0; m < M_; ++m) {
      double mean, m2;
      path_moments(k, m, mean, m2);
      const double* x = &X_[k][static_cast<std::size_t>(m) * N_];
      for (int i = 0; i < N_; ++i) {
        RegressedField::features(x[i], mean, m2, f);
        const double t = target[static_cast<std::size_t>(m) * N_ + i];
        for (int a = 0; a < kF; ++a) {
          xty(a) += f[a] * t;
          for (int b = a; b < kF; ++b) xtx(a, b) += f[a] * f[b];
        }
      }
    }
    for (int a = 0; a < kF; ++a)
      for (int b = 0; b < a; ++b) xtx(a, b) = xtx(b, a);
    const double ridge = 1e-10 * (xtx.trace() / kF + 1.0);
    for (int a = 0; a < kF; ++a) xtx(a, a) += ridge;
    const Eigen::Matrix<double, kF, 1> sol = xtx.ldlt().solve(xty);
    std::array<double, kF> out;
    for (int a = 0; a < kF; ++a) out[a] = sol(a);
    return out;
  }

  double eval_coeff(const std::array<double, kF>& c, int k, int m, int i,
                    double mean, double m2) const {
    const double x = X_[k][static_cast<std::size_t>(m) * N_ + i];
    return c[0] + c[1] * x + c[2] * mean + c[3] * x * x + c[4] * x * mean +
           c[5] * mean * mean + c[6] * m2;
  }

  // One backward sweep over [klo, khi). The chain itself runs undamped with a
  // trapezoidal predictor-corrector driver; damping blends the old and new
  // fields once per sweep (per-step blending would drag stale values through
  // the whole chain and stall the iteration). Returns the sup-norm Y-update.
  double backward_sweep(int klo, int khi, bool first_sweep) {
    const int K = grid_.steps;
    if (khi == K) {
      fill_terminal_values(Ynext_);
    } else {
      for (int m = 0; m < M_; ++m) {
        double mean, m2;
        path_moments(khi, m, mean, m2);
        for (int i = 0; i < N_; ++i)
          Ynext_[static_cast<std::size_t>(m) * N_ + i] =
              deterministic_ ? eval_coeff(coeff_[khi], khi, m, i, mean, m2)
                             : y_value(khi, m, i, mean, m2);
      }
    }
    const double h = dt();
    const double damp = first_sweep ? 0.0 : picard_.damping;
    std::vector<double>& fnext = driver_next_;
    std::vector<double>& fpred = driver_pred_;
    std::vector<double>& pred = pred_;

    old_coeff_.assign(coeff_.begin() + klo, coeff_.begin() + khi);
    if (deterministic_)
      old_ydet_.assign(Ydet_.begin() + klo, Ydet_.begin() + khi);

    for (int k = khi - 1; k >= klo; --k) {
      driver_at(k + 1, Ynext_, fnext);
      for (std::size_t j = 0; j < S_; ++j) pred[j] = Ynext_[j] + h * fnext[j];
      if (deterministic_) {
        driver_at(k, pred, fpred);
        for (std::size_t j = 0; j < S_; ++j) {
          const double corrected = Ynext_[j] + 0.5 * h * (fnext[j] + fpred[j]);
          Ydet_[k][j] = corrected;
          Ynext_[j] = corrected;
        }
        continue;
      }
      const std::array<double, kF> cpred = regress(k, pred);
      for (int m = 0; m < M_; ++m) {
        double mean, m2;
        path_moments(k, m, mean, m2);
        for (int i = 0; i < N_; ++i)
          pred[static_cast<std::size_t>(m) * N_ + i] =
              eval_coeff(cpred, k, m, i, mean, m2);
      }
      driver_at(k, pred, fpred);
      for (std::size_t j = 0; j < S_; ++j)
        pred[j] = Ynext_[j] + 0.5 * h * (fnext[j] + fpred[j]);
      const std::array<double, kF> cnew = regress(k, pred);
      coeff_[k] = cnew;
      for (int m = 0; m < M_; ++m) {
        double mean, m2;
        path_moments(k, m, mean, m2);
        for (int i = 0; i < N_; ++i)
          Ynext_[static_cast<std::size_t>(m) * N_ + i] =
              eval_coeff(cnew, k, m, i, mean, m2);
      }
    }

    if (deterministic_) coeff_[klo] = regress(klo, Ydet_[klo]);
    double res = 0.0;
    for (int k = klo; k < khi; ++k) {
      if (deterministic_) {
        auto& prev = old_ydet_[k - klo];
        for (std::size_t j = 0; j < S_; ++j) {
          const double mixed = damp * prev[j] + (1 - damp) * Ydet_[k][j];
          res = std::max(res, std::abs(mixed - prev[j]));
          Ydet_[k][j] = mixed;
        }
        continue;
      }
      const auto& prev = old_coeff_[k - klo];
      std::array<double, kF> mixed;
      for (int a = 0; a < kF; ++a)
        mixed[a] = damp * prev[a] + (1 - damp) * coeff_[k][a];
      for (int m = 0; m < M_; ++m) {
        double mean, m2;
        path_moments(k, m, mean, m2);
        for (int i = 0; i < N_; ++i)
          res = std::max(res, std::abs(eval_coeff(mixed, k, m, i, mean, m2) -
                                       eval_coeff(prev, k, m, i, mean, m2)));
      }
      coeff_[k] = mixed;
    }
    if (!std::isfinite(res))
      throw DivergenceError("backward regression blew up", residual_trace_);
    return res;
  }

  // Runs the damped Picard loop on [klo, khi). Returns false on blowup.
  // `first_out` receives the first sweep's residual (the stitching loop uses
  // it as its stationarity measure).
  bool window_picard(int klo, int khi, bool cold, FbsdeResult& res,
                     double& first_out) {
    double first_res = -1.0;
    const int sweeps_target =
        picard_.fixed_sweeps > 0 ? picard_.fixed_sweeps : picard_.max_iter;
    first_out = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < sweeps_target; ++sweep) {
      double r = std::numeric_limits<double>::infinity();
      bool blown = false;
      try {
        forward_pass();
        r = backward_sweep(klo, khi, sweep == 0 && cold);
      } catch (const DivergenceError&) {
        blown = true;
      } catch (const InvalidInput&) {
        blown = true;  // non-finite states reached a measure constructor
      }
      ++res.sweeps;
      if (std::getenv("MFCLAB_TRACE"))
        std::fprintf(stderr, "[win %d,%d] sweep %d r=%.3e blown=%d\n", klo, khi,
                     sweep, r, int(blown));
      residual_trace_.push_back(r);
      res.residual = r;
      if (sweep == 0) first_out = r;
      if (!blown) {
        if (first_res < 0) first_res = std::max(r, 1e-12);
        // absolute cap: Y-updates far beyond the maximum-principle scale are
        // inherited garbage even when the relative test is blind to them
        const double cap = 100.0 * (model_.lipschitz_bound + 1.0) *
                           (grid_.T - grid_.t0 + 1.0);
        blown = !std::isfinite(r) ||
                r > picard_.blowup_factor * std::max(first_res, 1.0) || r > cap;
      }
      if (blown) return false;
      if (picard_.fixed_sweeps == 0 && r < picard_.tol) {
        res.converged = true;
        return true;
      }
    }
    res.converged = picard_.fixed_sweeps > 0 && res.residual < picard_.tol;
    return true;
  }

  void reset_fields() {
    for (auto& c : coeff_) c = {};
    if (deterministic_)
      for (auto& v : Ydet_) std::fill(v.begin(), v.end(), 0.0);
  }

  // Horizon bisection: on divergence the horizon is re-partitioned into
  // 2^depth windows solved backward in time, with outer block Gauss-Seidel
  // passes until every window is stationary under a re-solve.
  void picard_window(int klo, int khi, int depth_unused, FbsdeResult& res) {
    (void)klo;
    (void)khi;
    (void)depth_unused;
    const int K = grid_.steps;
    for (int depth = 0; depth <= picard_.max_window_splits; ++depth) {
      const int nwin = 1 << depth;
      if (nwin > K) break;
      if (depth > 0) reset_fields();
      res.window_splits = depth > 0 ? depth : res.window_splits;
      std::vector<int> edge(nwin + 1);
      for (int w = 0; w <= nwin; ++w)
        edge[w] = static_cast<int>(static_cast<long>(K) * w / nwin);
      const int max_outer = nwin == 1 ? 1 : 60;
      bool blown = false;
      for (int outer = 0; outer < max_outer && !blown; ++outer) {
        bool all_small = true;
        for (int w = nwin - 1; w >= 0 && !blown; --w) {
          double first = 0;
          if (!window_picard(edge[w], edge[w + 1], outer == 0, res, first)) {
            blown = true;
            break;
          }
          if (!res.converged && picard_.fixed_sweeps == 0 && nwin == 1)
            return;  // single window exhausted max_iter without blowing
          all_small = all_small && first < 4 * picard_.tol;
        }
        if (blown) break;
        if (nwin == 1) {
          res.residual_trace = residual_trace_;
          return;
        }
        if (outer > 0 && all_small) {
          res.converged = true;
          res.residual_trace = residual_trace_;
          return;
        }
      }
      // fall through to a deeper partition
    }
    res.residual_trace = residual_trace_;
    throw DivergenceError("Picard iteration diverged", residual_trace_);
  }

  void value_pass(FbsdeResult& res) {
    forward_pass();
    const int K = grid_.steps;
    fill_terminal_values(Yhere_);

    if (opts_.store_flow) {
      res.flow.grid = grid_;
      res.flow.msamples = static_cast<int>(S_);
      res.flow.mutilde.clear();
      res.flow.mutilde.reserve(K + 1);
    }
    if (opts_.store_trajectories) {
      res.X_traj = X_;
      res.Y_traj.assign(K + 1, std::vector<double>(S_, 0.0));
    }

    std::vector<double> cost(M_, 0.0);
    std::vector<double> ys(S_, 0.0);
    for (int k = 0; k <= K; ++k) {
      const double w = (k == 0 || k == K) ? 0.5 : 1.0;
      if (k == K) {
        ys = Yhere_;
      } else {
        for (int m = 0; m < M_; ++m) {
          double mean, m2;
          path_moments(k, m, mean, m2);
          for (int i = 0; i < N_; ++i)
            ys[static_cast<std::size_t>(m) * N_ + i] = y_value(k, m, i, mean, m2);
        }
      }
      const double sdt = std::sqrt(dt());
      for (int m = 0; m < M_; ++m) {
        const double* x = &X_[k][static_cast<std::size_t>(m) * N_];
        const double* y = &ys[static_cast<std::size_t>(m) * N_];
        const EmpiricalMeasure2D* mu;
        if (opts_.frozen) {
          mu = &opts_.frozen->at(k);
        } else {
          cloud_.assign_uniform(x, y, N_);
          mu = &cloud_;
        }
        double run = model_.H(*mu);
        for (int i = 0; i < N_; ++i)
          run -= model_.dH_p(*mu, x[i], y[i]) * y[i] / N_;
        cost[m] += w * dt() * run;
        // martingale control variate: Y is adapted, so Y (sigma dW) has zero
        // mean and tracks the cost's leading fluctuation
        if (k < K && !deterministic_) {
          double cv = 0;
          if (noise_.sigma > 0) {
            const float* xk = &xi_[static_cast<std::size_t>(k) * S_ + m * N_];
            for (int i = 0; i < N_; ++i)
              cv += y[i] * noise_.sigma * sdt * xk[i];
          }
          if (noise_.sigma0 > 0) {
            const double common =
                noise_.sigma0 * sdt * xi0_[static_cast<std::size_t>(k) * M_ + m];
            for (int i = 0; i < N_; ++i) cv += y[i] * common;
          }
          cost[m] -= cv / N_;
        }
      }
      if (opts_.store_flow) {
        std::vector<Atom2D> atoms(S_);
        for (std::size_t j = 0; j < S_; ++j)
          atoms[j] = {X_[k][j], ys[j], 1.0 / static_cast<double>(S_)};
        res.flow.mutilde.emplace_back(std::move(atoms));
      }
      if (opts_.store_trajectories) res.Y_traj[k] = ys;
    }
    for (int m = 0; m < M_; ++m) {
      const double* x = &X_[K][static_cast<std::size_t>(m) * N_];
      marg_.assign_uniform(x, N_);
      cost[m] += model_.U(marg_);
    }
    double v = 0;
    for (int m = 0; m < M_; ++m) v += cost[m];
    res.value = v / M_;
  }

  int N_;
  const ModelSpec& model_;
  TimeGrid grid_;
  NoiseConfig noise_;
  PicardConfig picard_;
  FbsdeOptions opts_;

  bool deterministic_ = false;
  int M_ = 1;
  std::size_t S_ = 0;
  std::vector<double> x0_;
  std::vector<int> rank_;
  std::function<double(const EmpiricalMeasure1D&, double)> terminal_;

  std::vector<std::vector<double>> X_;
  std::vector<std::array<double, kF>> coeff_;
  std::vector<std::vector<double>> Ydet_;
  std::vector<double> Ynext_, Yhere_, ny_buf_, xpred_;
  std::vector<double> drift_buf_ = std::vector<double>(1024),
                      noise_buf_ = std::vector<double>(1024);
  std::vector<double> driver_next_, driver_pred_, pred_;
  std::vector<std::array<double, kF>> old_coeff_;
  std::vector<std::vector<double>> old_ydet_;
  std::vector<float> xi_, xi0_;
  EmpiricalMeasure2D cloud_;
  EmpiricalMeasure1D marg_;
  std::vector<double> residual_trace_;
  bool left_box_ = false;

 public:
  void size_buffers() {
    drift_buf_.assign(N_, 0.0);
    noise_buf_.assign(N_, 0.0);
    driver_next_.assign(S_, 0.0);
    driver_pred_.assign(S_, 0.0);
    pred_.assign(S_, 0.0);
  }
};

}  // namespace

FbsdeResult solve_fbsde(int n_particles, const std::vector<double>& x0,
                        const ModelSpec& model, const TimeGrid& grid,
                        const NoiseConfig& noise, const PicardConfig& picard,
                        const FbsdeOptions& opts) {
  Engine engine(n_particles, x0, model, grid, noise, picard, opts);
  engine.size_buffers();
  return engine.run();
}

}  // namespace mfclab
