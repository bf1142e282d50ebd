#include <cmath>
#include <doctest.h>

#include "mfclab/nash.hpp"
#include "support/riccati.hpp"

using namespace mfclab;

namespace {

const LqParams kGame{1.0, 0.5, 1.0, 1.0, 0.5, 10.0};

PicardConfig quick_picard() {
  PicardConfig p;
  p.tol = 1e-6;
  p.max_iter = 60;
  p.damping = 0.5;
  return p;
}

}  // namespace

TEST_CASE("equilibrium feedback matches the riccati control") {
  const ModelSpec m = builtin_lq(kGame);
  const auto r = oracle::solve_riccati(kGame.q, kGame.qbar, kGame.lambda,
                                       kGame.u, kGame.ubar, 0.5, 0.0, 0.5);
  NoiseConfig noise;
  noise.sigma = 0.5;
  noise.paths = 4000;
  noise.seed = 3;
  const TimeGrid grid(0, 0.5, 50);
  const std::vector<double> x0 = {0.4, -0.6, 1.0};
  const auto profile = build_equilibrium_feedback(m, 3, x0, grid, noise,
                                                  quick_picard());
  CHECK(profile.provenance == "equilibrium-candidate");
  for (const std::vector<double> probe :
       {std::vector<double>{0.4, -0.6, 1.0}, std::vector<double>{0.1, 0.3, -0.2}}) {
    double mean = (probe[0] + probe[1] + probe[2]) / 3;
    for (int k = 0; k < 3; ++k) {
      const double ny = 2 * r.a0() * probe[k] + 2 * r.b0() * mean;
      const double expect = -ny / (2 * kGame.lambda);
      CHECK(profile.thetas[k](0.0, probe) ==
            doctest::Approx(expect).epsilon(0.0).scale(1.0).epsilon(0.02));
    }
  }
  // exchangeability: swapping two coordinates swaps the feedback
  std::vector<double> swapped = {-0.6, 0.4, 1.0};
  CHECK(profile.thetas[0](0.0, x0) ==
        doctest::Approx(profile.thetas[1](0.0, swapped)).epsilon(1e-12));
  // boundedness on the box
  CHECK(std::abs(profile.thetas[0](0.25, {5.0, -5.0, 2.0})) <=
        m.lipschitz_bound);
}

TEST_CASE("symmetric two-player game costs coincide within noise") {
  const ModelSpec m = builtin_lq(kGame);
  const MfgcSpec game = lq_mfgc(kGame);
  NoiseConfig noise;
  noise.sigma = 0.5;
  noise.paths = 4000;
  noise.seed = 5;
  const TimeGrid grid(0, 0.5, 50);
  const std::vector<double> x0 = {0.3, 0.3};
  const auto profile =
      build_equilibrium_feedback(m, 2, x0, grid, noise, quick_picard());
  const GameCosts costs = simulate_game(profile, x0, game, grid, noise);
  CHECK(std::abs(costs.J[0] - costs.J[1]) <=
        3 * (costs.stderr_est[0] + costs.stderr_est[1]));
}

TEST_CASE("terminal-only game reduces to the terminal cost") {
  // zero running cost: breveH == 0, so the Lagrangian of the zero control
  // vanishes and only G remains; deterministic dynamics pin X at x0
  MfgcSpec game = lq_mfgc(kGame);
  game.breveH = [](const EmpiricalMeasure2D&, double, double) { return 0.0; };
  game.d_breveH_x = [](const EmpiricalMeasure2D&, double, double) { return 0.0; };
  game.d_breveH_p = [](const EmpiricalMeasure2D&, double, double) { return 0.0; };
  FeedbackProfile zero;
  zero.N = 2;
  zero.provenance = "custom";
  zero.all = [](double, const std::vector<double>&, std::vector<double>& out) {
    out.assign(2, 0.0);
  };
  zero.thetas = {[](double, const std::vector<double>&) { return 0.0; },
                 [](double, const std::vector<double>&) { return 0.0; }};
  NoiseConfig noise;
  noise.sigma = 0.0;
  noise.paths = 16;
  const TimeGrid grid(0, 0.5, 25);
  const std::vector<double> x0 = {0.7, -0.4};
  const GameCosts costs = simulate_game(zero, x0, game, grid, noise);
  CHECK(costs.J[0] ==
        doctest::Approx(game.G(0.7, EmpiricalMeasure1D::dirac(-0.4))).epsilon(1e-12));
  CHECK(costs.J[1] ==
        doctest::Approx(game.G(-0.4, EmpiricalMeasure1D::dirac(0.7))).epsilon(1e-12));
}

TEST_CASE("proxy cost matches the master-field riccati value") {
  const ModelSpec m = builtin_lq(kGame);
  const MfgcSpec game = lq_mfgc(kGame);
  const auto r = oracle::solve_riccati(kGame.q, kGame.qbar, kGame.lambda,
                                       kGame.u, kGame.ubar, 0.5, 0.0, 0.5);
  NoiseConfig noise;
  noise.sigma = 0.5;
  noise.paths = 3000;
  noise.seed = 7;
  const TimeGrid grid(0, 0.5, 50);
  const EmpiricalMeasure1D mu = gaussian_quantile_family(8, 0.8, 10.0);
  const double xk = 0.6;
  const FkResult proxy = proxy_cost(game, 0.0, xk, mu, grid, noise,
                                    quick_picard(), 4000);
  const double expect = oracle::value_master(r, 0.0, xk, mu.mean());
  CHECK(proxy.value == doctest::Approx(expect).epsilon(0.0).scale(1.0).epsilon(0.02));

  // potential structure: d/dx of the proxy equals the decoupling field
  const double h = 5e-2;
  const FkResult up =
      proxy_cost(game, 0.0, xk + h, mu, grid, noise, quick_picard(), 4000);
  const FkResult dn =
      proxy_cost(game, 0.0, xk - h, mu, grid, noise, quick_picard(), 4000);
  const double fd = (up.value - dn.value) / (2 * h);
  const double field = oracle::decoupling_field(r, mu, 0.0, xk);
  CHECK(std::abs(fd - field) <= 2e-2 / h * 0.0 + 0.05);
}

TEST_CASE("single-player deviation vanishes for the optimal profile") {
  // q-bar and u-bar are zero so the mean-field coupling is absent and the
  // one-player game is the classical control problem the profile solves
  const LqParams solo{1.0, 0.0, 1.0, 1.0, 0.0, 10.0};
  const ModelSpec m = builtin_lq(solo);
  const MfgcSpec game = lq_mfgc(solo);
  NoiseConfig noise;
  noise.sigma = 0.5;
  noise.paths = 4000;
  noise.seed = 11;
  const TimeGrid grid(0, 0.5, 50);
  const std::vector<double> x0 = {0.5};
  const auto profile =
      build_equilibrium_feedback(m, 1, x0, grid, noise, quick_picard());
  BRConfig search;
  search.mode = "parametric";
  search.sweeps = 3;
  search.search_paths = 1000;
  search.report_paths = 4000;
  const DeviationEntry e =
      best_response_deviation(profile, 0, x0, game, grid, noise, search);
  CHECK(e.epsilon >= -3 * e.mc_stderr);
  CHECK(e.epsilon <= 3 * e.mc_stderr + 1e-3);
}

TEST_CASE("grid best response at a symmetric two-player start") {
  const ModelSpec m = builtin_lq(kGame);
  const MfgcSpec game = lq_mfgc(kGame);
  NoiseConfig noise;
  noise.sigma = 0.5;
  noise.paths = 4000;
  noise.seed = 13;
  const TimeGrid grid(0, 0.5, 50);
  const std::vector<double> x0 = {0.3, 0.3};
  const auto profile =
      build_equilibrium_feedback(m, 2, x0, grid, noise, quick_picard());
  BRConfig search;
  search.mode = "grid";
  search.grid_cells = 120;
  search.grid_box = 4.0;
  search.grid_steps = 200;
  const DeviationEntry e =
      best_response_deviation(profile, 0, x0, game, grid, noise, search);
  CHECK(e.spread == doctest::Approx(0.0));
  CHECK(e.epsilon >= -3 * e.mc_stderr);
  CHECK(e.epsilon <= 3 * e.mc_stderr);
}

TEST_CASE("a detuned profile loses more than the equilibrium candidate") {
  const ModelSpec m = builtin_lq(kGame);
  const MfgcSpec game = lq_mfgc(kGame);
  NoiseConfig noise;
  noise.sigma = 0.5;
  noise.paths = 4000;
  noise.seed = 17;
  const TimeGrid grid(0, 0.5, 50);
  const std::vector<double> x0 = {0.5, -0.3};
  const auto base =
      build_equilibrium_feedback(m, 2, x0, grid, noise, quick_picard());
  FeedbackProfile detuned = base;
  detuned.provenance = "perturbation";
  detuned.all = [inner = base.all](double t, const std::vector<double>& x,
                                   std::vector<double>& out) {
    inner(t, x, out);
    for (double& v : out) v += 1.0;
  };
  for (int k = 0; k < 2; ++k)
    detuned.thetas[k] = [k, all = detuned.all](double t,
                                               const std::vector<double>& x) {
      std::vector<double> out;
      all(t, x, out);
      return out[k];
    };
  BRConfig search;
  search.mode = "grid";
  search.grid_cells = 120;
  search.grid_box = 4.0;
  search.grid_steps = 200;
  const DeviationEntry e0 =
      best_response_deviation(base, 0, x0, game, grid, noise, search);
  const DeviationEntry e1 =
      best_response_deviation(detuned, 0, x0, game, grid, noise, search);
  CHECK(e1.epsilon > e0.epsilon + 5 * e0.mc_stderr);
}

TEST_CASE("relabeling players permutes the deviation entries") {
  const ModelSpec m = builtin_lq(kGame);
  const MfgcSpec game = lq_mfgc(kGame);
  NoiseConfig noise;
  noise.sigma = 0.5;
  noise.paths = 1000;
  noise.seed = 19;
  const TimeGrid grid(0, 0.5, 25);
  const std::vector<double> xa = {0.5, -0.3};
  const std::vector<double> xb = {-0.3, 0.5};
  const auto pa = build_equilibrium_feedback(m, 2, xa, grid, noise, quick_picard());
  const auto pb = build_equilibrium_feedback(m, 2, xb, grid, noise, quick_picard());
  const GameCosts ca = simulate_game(pa, xa, game, grid, noise);
  const GameCosts cb = simulate_game(pb, xb, game, grid, noise);
  CHECK(ca.J[0] == doctest::Approx(cb.J[1]).epsilon(1e-12));
  CHECK(ca.J[1] == doctest::Approx(cb.J[0]).epsilon(1e-12));
}
