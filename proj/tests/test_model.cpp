#include <cmath>
#include <doctest.h>

#include "mfclab/model.hpp"
#include "mfclab/rng.hpp"

using namespace mfclab;

namespace {

const LqParams kLq{1.0, 1.0, 1.0, 1.0, 1.0, 10.0};

// Empirical-bridge finite differences of H and U under atom perturbations,
// used as the independent check of every analytic derivative field.
double fd_dH(const ModelSpec& m, const EmpiricalMeasure2D& mu, std::size_t i,
             bool in_x, double h = 1e-4) {
  auto shifted = [&](double hh) {
    std::vector<Atom2D> atoms = mu.atoms();
    (in_x ? atoms[i].x : atoms[i].p) += hh;
    return EmpiricalMeasure2D(std::move(atoms));
  };
  return (m.H(shifted(h)) - m.H(shifted(-h))) / (2 * h * mu.atoms()[i].w);
}

double fd_dU(const ModelSpec& m, const EmpiricalMeasure1D& mu, std::size_t i,
             double h = 1e-4) {
  auto shifted = [&](double hh) {
    std::vector<Atom1D> atoms = mu.atoms();
    atoms[i].x += hh;
    return EmpiricalMeasure1D(std::move(atoms));
  };
  return (m.U(shifted(h)) - m.U(shifted(-h))) / (2 * h * mu.atoms()[i].w);
}

}  // namespace

TEST_CASE("lq closed forms") {
  const ModelSpec m = builtin_lq({1.0, 0.0, 1.0, 1.0, 0.0, 10.0});
  CHECK(m.H(EmpiricalMeasure2D::dirac(2.0, 4.0)) == doctest::Approx(0.0));
  CHECK(m.dH_p(EmpiricalMeasure2D::dirac(0.0, 2.0), 0.0, 2.0) ==
        doctest::Approx(-1.0));
  CHECK_THROWS_AS(builtin_lq({1, 0, 0.0, 1, 0, 10}), InvalidInput);
  CHECK_THROWS_AS(builtin_lq({-1, 0, 1.0, 1, 0, 10}), InvalidInput);
}

TEST_CASE("displacement checker passes for built-ins") {
  const auto probes = random_probes(50, 42, 10.0);
  const auto fns = default_test_functions();
  for (const ModelSpec& m :
       {builtin_lq(kLq), builtin_centralized_default(1.0, 0.5, 1.0, 1.0, 0.5)}) {
    const AssumptionReport rep = check_displacement(m, probes, fns, 1e-8);
    for (const auto& c : rep.conditions) {
      INFO(m.name << " condition " << c.name << " violation "
                  << c.worst_violation);
      CHECK(c.pass);
    }
  }
}

TEST_CASE("displacement checker rejects the negated-q fixture") {
  LqParams broken = kLq;
  broken.q = -1.0;
  const ModelSpec m = detail::make_lq_unchecked(broken);
  const auto probes = random_probes(10, 9, 10.0);
  const AssumptionReport rep =
      check_displacement(m, probes, default_test_functions(), 1e-8);
  const auto* cond = rep.find("state-displacement");
  REQUIRE(cond != nullptr);
  CHECK_FALSE(cond->pass);
  CHECK(cond->worst_violation > 0.1);  // form = -2 Int phi^2 < 0 for phi = x
  CHECK_FALSE(rep.all_pass());
}

TEST_CASE("zero test function passes with equality") {
  const ModelSpec m = builtin_lq(kLq);
  const auto probes = random_probes(5, 4, 10.0);
  std::vector<TestFn2D> zero = {[](double, double) { return 0.0; }};
  const AssumptionReport rep = check_displacement(m, probes, zero, 1e-8);
  for (const auto& c : rep.conditions)
    if (c.name.find("displacement") != std::string::npos ||
        c.name == "momentum-concavity")
      CHECK(c.worst_violation == 0.0);
}

TEST_CASE("derivative fields match finite differences at atoms") {
  const auto probes = random_probes(20, 17, 10.0, 3, 8);
  for (const ModelSpec& m :
       {builtin_lq(kLq), builtin_centralized_default(1.0, 0.5, 1.0, 1.0, 0.5)}) {
    for (const auto& mu : probes) {
      const EmpiricalMeasure1D xm = pushforward_x(mu);
      for (std::size_t i = 0; i < mu.size(); ++i) {
        const auto& a = mu.atoms()[i];
        const double ax = m.dH_x(mu, a.x, a.p);
        const double ap = m.dH_p(mu, a.x, a.p);
        CHECK(std::abs(ax - fd_dH(m, mu, i, true)) <= 1e-5 * (1 + std::abs(ax)));
        CHECK(std::abs(ap - fd_dH(m, mu, i, false)) <= 1e-5 * (1 + std::abs(ap)));
        const double au = m.dU(xm, a.x);
        CHECK(std::abs(au - fd_dU(m, xm, i)) <= 1e-5 * (1 + std::abs(au)));
      }
    }
  }
}

TEST_CASE("cross symmetry holds to 1e-8 on built-ins") {
  const auto probes = random_probes(10, 23, 10.0, 3, 6);
  for (const ModelSpec& m :
       {builtin_lq(kLq), builtin_centralized_default(1.0, 0.5, 1.0, 1.0, 0.5)}) {
    for (const auto& mu : probes) {
      for (const auto& a : mu.atoms()) {
        CHECK(std::abs(m.dx_dH_p(mu, a.x, a.p) - m.dp_dH_x(mu, a.x, a.p)) <= 1e-8);
      }
      const auto& a0 = mu.atoms()[0];
      const auto& a1 = mu.atoms()[mu.size() - 1];
      CHECK(std::abs(m.d2H_xp(mu, a0.x, a0.p, a1.x, a1.p) -
                     m.d2H_px(mu, a1.x, a1.p, a0.x, a0.p)) <= 1e-8);
    }
  }
}

TEST_CASE("centralized hamiltonian matches the completed square") {
  // L = x^2, f = theta: H = Int x^2 - (Int p)^2 / (4 lambda)
  const double lambda = 1.0;
  const ModelSpec m = builtin_centralized_default(1.0, 0.0, lambda, 1.0, 0.0);
  const auto probes = random_probes(5, 31, 10.0, 3, 7);
  for (const auto& mu : probes) {
    const double expected =
        mu.second_x() - mu.mean_p() * mu.mean_p() / (4 * lambda);
    CHECK(m.H(mu) == doctest::Approx(expected).epsilon(1e-6));
    // envelope: dH_p equals the inner minimizer's drift f = theta*
    const double theta_star = -mu.mean_p() / (2 * lambda);
    CHECK(m.dH_p(mu, mu.atoms()[0].x, mu.atoms()[0].p) ==
          doctest::Approx(theta_star).epsilon(1e-4));
  }
  // L = 0, f = 0 gives H = 0
  const ModelSpec z = builtin_centralized(
      [](double, const EmpiricalMeasure1D&, double) { return 0.0; },
      [](double, const EmpiricalMeasure1D&, double) { return 0.0; }, 1.0,
      ThetaGrid{-2, 2, 101});
  CHECK(z.H(EmpiricalMeasure2D::uniform({0.5, -1.0}, {2.0, 0.0})) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fenchel lagrangian of the lq slice") {
  const ModelSpec m = builtin_lq(kLq);
  const FenchelSlice L = fenchel_lagrangian(m, m.lipschitz_bound + 1, 257);
  const auto frame = EmpiricalMeasure2D::uniform({0.3, -0.7, 1.1}, {0.2, 0.0, -0.4});
  for (double theta : {-1.0, -0.4, 0.0, 0.3, 1.0}) {
    CHECK(L(0.5, theta, frame) ==
          doctest::Approx(kLq.lambda * theta * theta).epsilon(1e-3));
  }
  // theta = 0: the supremum dominates the p = 0 point of the slice
  CHECK(L(0.5, 0.0, frame) >= -1e-12);
  // biconjugation recovers the slice
  CounterRng rng(5);
  for (int i = 0; i < 10; ++i) {
    const double x = 4 * rng.uniform(1, 2 * i) - 2;
    const double p = 4 * rng.uniform(1, 2 * i + 1) - 2;
    const double slice = -p * p / (4 * kLq.lambda);
    CHECK(std::abs(L.biconjugate(x, p, frame) - slice) <= 1e-3);
  }
  CHECK_THROWS_AS(fenchel_lagrangian(m, 0.5 * m.lipschitz_bound, 257),
                  InvalidInput);
}

TEST_CASE("aligned and generic running costs agree for lq") {
  const ModelSpec m = builtin_lq(kLq);
  const std::vector<double> xs = {0.4, -1.2, 0.9, 2.0};
  const std::vector<double> ps = {0.3, -0.5, 0.0, 1.4};
  const EmpiricalMeasure2D cloud = EmpiricalMeasure2D::uniform(xs, ps);
  std::vector<double> th(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) th[i] = m.dH_p(cloud, xs[i], ps[i]);
  const double lhs = aligned_running_cost(m, cloud);
  const double rhs = control_running_cost(m, xs, th, m.lipschitz_bound);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
  // closed form: q Int x^2 + qbar mean^2 + lambda (1/n) sum theta^2
  double expect = 0, mean = 0;
  for (double v : xs) {
    expect += kLq.q * v * v / xs.size();
    mean += v / xs.size();
  }
  expect += kLq.qbar * mean * mean;
  for (double t : th) expect += kLq.lambda * t * t / th.size();
  CHECK(rhs == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("potential constraint on the lq game") {
  const MfgcSpec spec = lq_mfgc(kLq);
  const auto probes = random_probes(10, 77, 10.0);
  const AssumptionReport rep = check_potential_constraint(spec, probes, 1e-10);
  CHECK(rep.all_pass());

  // a perturbed terminal gradient is flagged with the perturbation magnitude
  MfgcSpec bad = spec;
  auto old = bad.dG_x;
  bad.dG_x = [old](double x, const EmpiricalMeasure1D& mu) {
    return old(x, mu) + 0.25;
  };
  const AssumptionReport rep2 = check_potential_constraint(bad, probes, 1e-10);
  const auto* cond = rep2.find("coincidence-terminal");
  REQUIRE(cond != nullptr);
  CHECK(cond->worst_violation == doctest::Approx(0.25).epsilon(1e-9));

  // a single Dirac reduces to a pointwise identity
  const std::vector<EmpiricalMeasure2D> dirac = {EmpiricalMeasure2D::dirac(0.7, -0.2)};
  CHECK(check_potential_constraint(spec, dirac, 1e-10).all_pass());
}

TEST_CASE("game lagrangian closed form") {
  const MfgcSpec spec = lq_mfgc(kLq);
  const auto bm = EmpiricalMeasure2D::uniform({1.0, -0.5}, {0.1, 0.2});
  for (double theta : {-0.8, 0.0, 0.6}) {
    const double x = 0.4;
    const double expect = kLq.q * x * x + 2 * kLq.qbar * bm.mean_x() * x +
                          kLq.lambda * theta * theta;
    CHECK(mfgc_lagrangian(spec, x, theta, bm, spec.base.lipschitz_bound) ==
          doctest::Approx(expect).epsilon(1e-6));
  }
}
