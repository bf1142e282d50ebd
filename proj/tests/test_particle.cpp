#include <cmath>
#include <doctest.h>

#include "mfclab/particle.hpp"
#include "support/riccati.hpp"

using namespace mfclab;

namespace {

const LqParams kLq{1.0, 0.5, 1.0, 1.0, 0.5, 10.0};

PicardConfig quick_picard() {
  PicardConfig p;
  p.tol = 1e-7;
  p.max_iter = 80;
  p.damping = 0.5;
  return p;
}

}  // namespace

TEST_CASE("riccati oracle anchors") {
  // frozen from an independent integration of the backward system
  const auto r = oracle::solve_riccati(1, 1, 1, 1, 1, 1.0, 0.0, 1.0);
  CHECK(r.a0() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.b0() == doctest::Approx(0.4431903321).epsilon(1e-7));
  CHECK(r.c0() == doctest::Approx(1.0).epsilon(1e-7));
  const auto r2 = oracle::solve_riccati(1, 0.5, 1, 1, 0.5, 1.0, 0.0, 1.0);
  CHECK(r2.b0() == doctest::Approx(0.2462969816).epsilon(1e-7));
}

TEST_CASE("deterministic single particle at the origin") {
  const ModelSpec m = builtin_lq({1, 0, 1, 1, 0, 10});
  NoiseConfig noise;
  noise.sigma = 0;
  noise.sigma0 = 0;
  noise.paths = 1;
  const auto sol =
      solve_pontryagin(1, {0.0}, m, TimeGrid(0, 1, 100), noise, quick_picard());
  CHECK(sol.converged);
  CHECK(std::abs(sol.V_N) <= 1e-12);
  CHECK(std::abs(sol.grad[0]) <= 1e-12);
}

TEST_CASE("single particle with noise matches the riccati value") {
  const ModelSpec m = builtin_lq({1, 0, 1, 1, 0, 10});
  const auto r = oracle::solve_riccati(1, 0, 1, 1, 0, 1.0, 0.0, 1.0);
  NoiseConfig noise;
  noise.sigma = 1.0;
  noise.paths = 20000;
  noise.seed = 3;
  const double x0 = 0.7;
  const auto sol =
      solve_pontryagin(1, {x0}, m, TimeGrid(0, 1, 100), noise, quick_picard());
  const double expect = r.a0() * x0 * x0 + r.c0();
  CHECK(sol.converged);
  CHECK(sol.V_N == doctest::Approx(expect).epsilon(0.02));
}

TEST_CASE("two-particle gradient matches the riccati field") {
  const ModelSpec m = builtin_lq(kLq);
  const auto r = oracle::solve_riccati(kLq.q, kLq.qbar, kLq.lambda, kLq.u,
                                       kLq.ubar, 1.0, 0.0, 1.0);
  NoiseConfig noise;
  noise.sigma = 1.0;
  noise.paths = 20000;
  noise.seed = 5;
  const std::vector<double> x0 = {0.4, -0.9};
  const auto [v, grad] =
      value_and_grad(2, x0, m, TimeGrid(0, 1, 100), noise, quick_picard());
  (void)v;
  const double mean = 0.5 * (x0[0] + x0[1]);
  for (int i = 0; i < 2; ++i) {
    const double expect = 2 * r.a0() * x0[i] + 2 * r.b0() * mean;
    CHECK(grad[i] == doctest::Approx(expect).epsilon(0.0).scale(1.0).epsilon(0.02));
  }
}

TEST_CASE("permutation equivariance with identical seeds") {
  const ModelSpec m = builtin_lq(kLq);
  NoiseConfig noise;
  noise.sigma = 1.0;
  noise.paths = 400;
  noise.seed = 11;
  const TimeGrid grid(0, 0.5, 50);
  const std::vector<double> x0 = {0.3, -1.1, 0.8};
  const std::vector<double> xp = {0.8, 0.3, -1.1};  // cyclic permutation
  const auto a = value_and_grad(3, x0, m, grid, noise, quick_picard());
  const auto b = value_and_grad(3, xp, m, grid, noise, quick_picard());
  CHECK(a.first == doctest::Approx(b.first).epsilon(1e-12));
  CHECK(a.second[0] == doctest::Approx(b.second[1]).epsilon(1e-12));
  CHECK(a.second[1] == doctest::Approx(b.second[2]).epsilon(1e-12));
  CHECK(a.second[2] == doctest::Approx(b.second[0]).epsilon(1e-12));
}

TEST_CASE("finite difference of the value reproduces the gradient") {
  const ModelSpec m = builtin_lq(kLq);
  NoiseConfig noise;
  noise.sigma = 1.0;
  noise.paths = 4000;
  noise.seed = 7;
  const TimeGrid grid(0, 1, 100);
  const std::vector<double> x0 = {0.5, -0.2};
  PicardConfig pc = quick_picard();
  const auto base = solve_pontryagin(2, x0, m, grid, noise, pc);
  pc.fixed_sweeps = base.picard_iterations;
  const double h = 1e-3;
  for (int i = 0; i < 2; ++i) {
    std::vector<double> xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    const double vp = solve_pontryagin(2, xp, m, grid, noise, pc).V_N;
    const double vm = solve_pontryagin(2, xm, m, grid, noise, pc).V_N;
    const double fd = (vp - vm) / (2 * h);
    CHECK(std::abs(fd - base.grad[i] / 2) <= 5 * h);
  }
}

TEST_CASE("gradient obeys the maximum-principle bound") {
  const ModelSpec m = builtin_lq(kLq);
  NoiseConfig noise;
  noise.sigma = 1.0;
  noise.paths = 2000;
  noise.seed = 13;
  const TimeGrid grid(0, 1, 100);
  const auto sol =
      solve_pontryagin(4, {0.5, -0.5, 1.5, -1.5}, m, grid, noise, quick_picard());
  const double bound = m.lipschitz_bound * (grid.T - grid.t0) + m.lipschitz_bound;
  for (double g : sol.grad) CHECK(std::abs(g) <= bound);
}

TEST_CASE("picard residuals decrease monotonically on a short horizon") {
  const ModelSpec m = builtin_lq(kLq);
  NoiseConfig noise;
  noise.sigma = 1.0;
  noise.paths = 2000;
  noise.seed = 17;
  FbsdeOptions opts;
  PicardConfig pc = quick_picard();
  const auto res =
      solve_fbsde(2, {0.5, -0.5}, m, TimeGrid(0, 0.5, 50), noise, pc, opts);
  REQUIRE(res.residual_trace.size() >= 3);
  for (std::size_t k = 2; k < res.residual_trace.size(); ++k)
    CHECK(res.residual_trace[k] <= res.residual_trace[k - 1] * 1.0001);
}

TEST_CASE("divergence raises with a residual trace when splitting is disabled") {
  const ModelSpec m = builtin_lq({4.0, 0.0, 0.05, 4.0, 0.0, 10.0});
  NoiseConfig noise;
  noise.sigma = 1.0;
  noise.paths = 200;
  noise.seed = 19;
  PicardConfig pc;
  pc.tol = 1e-8;
  pc.max_iter = 60;
  pc.damping = 0.0;
  pc.blowup_factor = 50.0;
  pc.max_window_splits = 0;
  try {
    solve_pontryagin(1, {1.0}, m, TimeGrid(0, 4, 200), noise, pc);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK_FALSE(e.residual_trace.empty());
  }
}

TEST_CASE("window splitting rescues a long stiff horizon") {
  // strong control and long horizon: the full-horizon Picard loop diverges,
  // the bisected solve recovers the Riccati solution
  const LqParams prm{4.0, 0.0, 0.05, 4.0, 0.0, 50.0};
  const ModelSpec m = builtin_lq(prm);
  const auto r = oracle::solve_riccati(prm.q, prm.qbar, prm.lambda, prm.u,
                                       prm.ubar, 0.5, 0.0, 4.0);
  NoiseConfig noise;
  noise.sigma = 0.5;
  noise.paths = 2000;
  noise.seed = 9;
  PicardConfig pc;
  pc.tol = 1e-7;
  pc.max_iter = 50;
  pc.damping = 0.5;
  pc.max_window_splits = 0;
  const TimeGrid grid(0, 4, 400);
  CHECK_THROWS_AS(solve_pontryagin(1, {0.5}, m, grid, noise, pc),
                  DivergenceError);
  pc.max_window_splits = 8;
  const auto sol = solve_pontryagin(1, {0.5}, m, grid, noise, pc);
  CHECK(sol.converged);
  CHECK(sol.window_splits > 0);
  const double expect = r.a0() * 0.25 + r.c0();
  CHECK(sol.V_N == doctest::Approx(expect).epsilon(0.02));
  CHECK(sol.grad[0] == doctest::Approx(2 * r.a0() * 0.5).epsilon(0.02));
}

TEST_CASE("hessian kernel shows second-order richardson behaviour") {
  auto f = [](const std::vector<double>& x) {
    return std::pow(x[0], 4) + 0.5 * std::pow(x[1], 4) + x[0] * x[1];
  };
  const std::vector<double> x = {0.8, -0.6};
  const double exact00 = 12 * 0.8 * 0.8;
  const double e1 = std::abs(hessian_fd_of(f, x, 0.2)[0][0] - exact00);
  const double e2 = std::abs(hessian_fd_of(f, x, 0.1)[0][0] - exact00);
  CHECK(e1 / e2 >= 3.5);
  CHECK(e1 / e2 <= 4.5);
}

TEST_CASE("hessian of the single-particle value equals the riccati curvature") {
  const ModelSpec m = builtin_lq(kLq);
  // one particle sees the combined coefficients q + qbar, u + ubar
  const auto r = oracle::solve_riccati(kLq.q + kLq.qbar, 0, kLq.lambda,
                                       kLq.u + kLq.ubar, 0, 1.0, 0.0, 1.0);
  NoiseConfig noise;
  noise.sigma = 1.0;
  noise.paths = 4000;
  noise.seed = 23;
  const auto h =
      hessian_fd(1, {0.4}, m, TimeGrid(0, 1, 100), noise, quick_picard(), 0.05);
  CHECK(h.matrix[0][0] == doctest::Approx(2 * r.a0()).epsilon(2.5e-3));
  CHECK(h.raw_asymmetry <= 1e-10);
}

TEST_CASE("two-particle hessian satisfies the eigen bounds") {
  const ModelSpec m = builtin_lq(kLq);
  NoiseConfig noise;
  noise.sigma = 1.0;
  noise.paths = 2000;
  noise.seed = 29;
  const auto h = hessian_fd(2, {0.5, -0.5}, m, TimeGrid(0, 1, 100), noise,
                            quick_picard(), 0.05);
  const auto r = oracle::solve_riccati(kLq.q, kLq.qbar, kLq.lambda, kLq.u,
                                       kLq.ubar, 1.0, 0.0, 1.0);
  // exact: H = (2a/N) I + (2b/N^2) 11^T, eigenvalues 2a/2 and (2a + 2b)/2
  const double tr = h.matrix[0][0] + h.matrix[1][1];
  const double det = h.matrix[0][0] * h.matrix[1][1] -
                     h.matrix[0][1] * h.matrix[1][0];
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4 - det));
  const double lo = tr / 2 - disc, hi = tr / 2 + disc;
  CHECK(lo >= -1e-3);
  CHECK(2 * hi == doctest::Approx(2 * r.a0() + 2 * r.b0()).epsilon(0.02));
}

TEST_CASE("grid hjb terminal slice and riccati agreement") {
  const LqParams prm{1.0, 0.0, 1.0, 1.0, 0.0, 5.0};
  const ModelSpec m = builtin_lq(prm);
  const TimeGrid grid(0, 1, 1000);
  const auto V = grid_hjb(1, m, grid, 1.0, 0.0, 5.0, 200);
  // terminal condition exact at nodes
  CHECK(V(1.0, {1.3}) == doctest::Approx(m.U(EmpiricalMeasure1D::dirac(1.3)))
                             .epsilon(1e-6));
  const auto r = oracle::solve_riccati(1, 0, 1, 1, 0, 1.0, 0.0, 1.0);
  double worst = 0;
  for (double x = -2.5; x <= 2.5; x += 0.25) {
    const double expect = r.a0() * x * x + r.c0();
    worst = std::max(worst, std::abs(V(0.0, {x}) - expect));
  }
  CHECK(worst <= 1e-2);
}

TEST_CASE("grid hjb agrees with the particle solver") {
  const LqParams prm{1.0, 0.0, 1.0, 1.0, 0.0, 5.0};
  const ModelSpec m = builtin_lq(prm);
  const auto V = grid_hjb(1, m, TimeGrid(0, 1, 1000), 1.0, 0.0, 5.0, 200);
  NoiseConfig noise;
  noise.sigma = 1.0;
  noise.paths = 20000;
  noise.seed = 31;
  for (double x : {-1.5, -0.5, 0.0, 0.7, 1.8}) {
    const double vp =
        solve_pontryagin(1, {x}, m, TimeGrid(0, 1, 100), noise, quick_picard()).V_N;
    CHECK(std::abs(V(0.0, {x}) - vp) <= 2e-2);
  }
}

TEST_CASE("grid hjb rejects a CFL-violating configuration") {
  const ModelSpec m = builtin_lq({1, 0, 1, 1, 0, 5});
  CHECK_THROWS_WITH_AS(grid_hjb(1, m, TimeGrid(0, 1, 20), 1.0, 0.0, 5.0, 200),
                       doctest::Contains("CFL"), InvalidInput);
  CHECK_THROWS_AS(grid_hjb(3, m, TimeGrid(0, 1, 1000), 1.0, 0.0, 5.0, 200),
                  InvalidInput);
  CHECK_THROWS_AS(grid_hjb(1, m, TimeGrid(0, 1, 1000), 1.0, 0.0, 5.0, 30),
                  InvalidInput);
}

TEST_CASE("two-dimensional grid hjb tracks the riccati pair") {
  const LqParams prm{1.0, 0.5, 1.0, 1.0, 0.5, 4.0};
  const ModelSpec m = builtin_lq(prm);
  const auto V = grid_hjb(2, m, TimeGrid(0, 0.5, 500), 0.7, 0.0, 4.0, 120);
  const auto r = oracle::solve_riccati(prm.q, prm.qbar, prm.lambda, prm.u,
                                       prm.ubar, 0.7, 0.0, 0.5);
  for (const auto& x : std::vector<std::vector<double>>{{0.5, -0.5}, {1.0, 0.2}}) {
    const double expect = oracle::value_nparticle(r, x, 0.0, 0.7, 0.0);
    CHECK(V(0.0, x) == doctest::Approx(expect).epsilon(0.03));
  }
}
