#include "mfclab/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>

#include "mfclab/rng.hpp"

namespace mfclab {

namespace {

// ---------------------------------------------------------------------------
// small numeric helpers

struct ScalarOpt {
  double arg = 0.0;
  double value = 0.0;
  bool on_boundary = false;
  bool tie = false;
};

// Grid scan + golden-section refinement of a 1-D minimum on [lo, hi].
ScalarOpt minimize_scalar(const std::function<double(double)>& f, double lo,
                          double hi, int points) {
  ScalarOpt best;
  const double step = (hi - lo) / (points - 1);
  int best_i = 0;
  double best_v = f(lo);
  for (int i = 1; i < points; ++i) {
    const double v = f(lo + i * step);
    if (v < best_v - 1e-15 * (1 + std::abs(best_v))) {
      best_v = v;
      best_i = i;
    } else if (std::abs(v - best_v) <= 1e-15 * (1 + std::abs(best_v)) &&
               i != best_i) {
      best.tie = true;  // ties broken toward the smaller theta
    }
  }
  double a = lo + std::max(0, best_i - 1) * step;
  double b = lo + std::min(points - 1, best_i + 1) * step;
  constexpr double kGolden = 0.6180339887498949;
  double x1 = b - kGolden * (b - a), x2 = a + kGolden * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 80 && (b - a) > 1e-13 * (1 + std::abs(a)); ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kGolden * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kGolden * (b - a);
      f2 = f(x2);
    }
  }
  best.arg = 0.5 * (a + b);
  best.value = f(best.arg);
  best.on_boundary = best_i == 0 || best_i == points - 1;
  return best;
}

ScalarOpt maximize_scalar(const std::function<double(double)>& f, double lo,
                          double hi, int points) {
  ScalarOpt r = minimize_scalar([&](double x) { return -f(x); }, lo, hi, points);
  r.value = -r.value;
  return r;
}

EmpiricalMeasure2D with_atom(const EmpiricalMeasure2D& mu, std::size_t i,
                             double x, double p) {
  std::vector<Atom2D> atoms = mu.atoms();
  atoms[i].x = x;
  atoms[i].p = p;
  return EmpiricalMeasure2D(std::move(atoms));
}

EmpiricalMeasure2D augment(const EmpiricalMeasure2D& mu, double x, double p,
                           double w0) {
  std::vector<Atom2D> atoms = mu.atoms();
  for (auto& a : atoms) a.w *= (1.0 - w0);
  atoms.push_back({x, p, w0});
  return EmpiricalMeasure2D(std::move(atoms));
}

int find_atom(const EmpiricalMeasure2D& mu, double x, double p) {
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const auto& a = mu.atoms()[i];
    if (std::abs(a.x - x) <= 1e-13 * (1 + std::abs(x)) &&
        std::abs(a.p - p) <= 1e-13 * (1 + std::abs(p)))
      return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

// ---------------------------------------------------------------------------
// LQ built-in

ModelSpec detail::make_lq_unchecked(const LqParams& prm) {
  ModelSpec m;
  m.name = "lq";
  m.box.half_width = prm.box;
  const double q = prm.q, qbar = prm.qbar, lam = prm.lambda, u = prm.u,
               ubar = prm.ubar;

  m.H = [=](const EmpiricalMeasure2D& mu) {
    return q * mu.second_x() + qbar * mu.mean_x() * mu.mean_x() -
           mu.second_p() / (4 * lam);
  };
  m.dH_x = [=](const EmpiricalMeasure2D& mu, double x, double) {
    return 2 * q * x + 2 * qbar * mu.mean_x();
  };
  m.dH_p = [=](const EmpiricalMeasure2D&, double, double p) { return -p / (2 * lam); };
  m.d2H_xx = [=](const EmpiricalMeasure2D&, double, double, double, double) {
    return 2 * qbar;
  };
  m.d2H_xp = [](const EmpiricalMeasure2D&, double, double, double, double) { return 0.0; };
  m.d2H_px = [](const EmpiricalMeasure2D&, double, double, double, double) { return 0.0; };
  m.d2H_pp = [](const EmpiricalMeasure2D&, double, double, double, double) { return 0.0; };
  m.dx_dH_x = [=](const EmpiricalMeasure2D&, double, double) { return 2 * q; };
  m.dp_dH_x = [](const EmpiricalMeasure2D&, double, double) { return 0.0; };
  m.dx_dH_p = [](const EmpiricalMeasure2D&, double, double) { return 0.0; };
  m.dp_dH_p = [=](const EmpiricalMeasure2D&, double, double) { return -1 / (2 * lam); };

  m.U = [=](const EmpiricalMeasure1D& mu) {
    return u * mu.second_moment() + ubar * mu.mean() * mu.mean();
  };
  m.dU = [=](const EmpiricalMeasure1D& mu, double x) {
    return 2 * u * x + 2 * ubar * mu.mean();
  };
  m.d2U_mumu = [=](const EmpiricalMeasure1D&, double, double) { return 2 * ubar; };
  m.dx_dU = [=](const EmpiricalMeasure1D&, double) { return 2 * u; };

  const double B = prm.box;
  // p-range a momentum can reach under the maximum-principle bound
  const double pmax = 2 * (q + qbar) * B * 2.0 + 2 * (u + ubar) * B * 2.0;
  m.lipschitz_bound =
      std::max({2 * (q + std::abs(qbar)) * B * 2, 2 * (u + std::abs(ubar)) * B * 2,
                pmax / (2 * lam), 1.0});
  m.diagnostics = std::make_shared<ModelDiagnostics>();
  return m;
}

ModelSpec builtin_lq(const LqParams& prm) {
  if (prm.lambda <= 0) throw InvalidInput("builtin_lq: lambda must be > 0");
  if (prm.q < 0 || prm.qbar < 0 || prm.u < 0 || prm.ubar < 0)
    throw InvalidInput("builtin_lq: q, qbar, u, ubar must be >= 0");
  return detail::make_lq_unchecked(prm);
}

// ---------------------------------------------------------------------------
// Centralized-control built-in

namespace {

struct CentralCore {
  CentralizedTerm L, f;
  double lambda;
  ThetaGrid grid;
  std::shared_ptr<ModelDiagnostics> diag;

  struct Prepared {
    std::uint64_t rev = 0;
    double theta_star = 0;
    double value = 0;
    std::shared_ptr<EmpiricalMeasure1D> xlaw;
  };
  mutable std::array<Prepared, 8> cache;
  mutable int next_slot = 0;
  mutable std::mutex mtx;

  double objective(const EmpiricalMeasure2D& mu, const EmpiricalMeasure1D& xlaw,
                   double theta) const {
    double acc = 0;
    for (const auto& a : mu.atoms())
      acc += a.w * (L(a.x, xlaw, theta) + f(a.x, xlaw, theta) * a.p);
    return acc + lambda * theta * theta;
  }

  Prepared prepared(const EmpiricalMeasure2D& mu) const {
    {
      std::lock_guard<std::mutex> lock(mtx);
      for (const auto& e : cache)
        if (e.rev == mu.revision() && e.xlaw) return e;
    }
    Prepared p;
    p.rev = mu.revision();
    p.xlaw = std::make_shared<EmpiricalMeasure1D>(pushforward_x(mu));
    auto opt = minimize_scalar(
        [&](double th) { return objective(mu, *p.xlaw, th); }, grid.lo, grid.hi,
        grid.points);
    p.theta_star = opt.arg;
    p.value = opt.value;
    if (opt.on_boundary) diag->boundary_minimizer = true;
    if (opt.tie) diag->tie_broken = true;
    std::lock_guard<std::mutex> lock(mtx);
    cache[next_slot] = p;
    next_slot = (next_slot + 1) % static_cast<int>(cache.size());
    return p;
  }

  double H(const EmpiricalMeasure2D& mu) const { return prepared(mu).value; }

  // Lions derivative at (x, p) via atom shifts; Richardson-extrapolated.
  // Off-atom points are handled by a small-weight augmentation.
  double first_derivative(const EmpiricalMeasure2D& mu, double x, double p,
                          bool in_x, double h0 = 1e-4) const {
    int idx = find_atom(mu, x, p);
    EmpiricalMeasure2D base = mu;
    double w;
    if (idx < 0) {
      const double w0 = 1.0 / (mu.size() + 1.0);
      base = augment(mu, x, p, w0);
      idx = static_cast<int>(base.size()) - 1;
      w = w0;
    } else {
      w = base.atoms()[idx].w;
    }
    const double h = h0 * (1 + std::abs(in_x ? x : p));
    auto diff = [&](double hh) {
      const double xa = in_x ? x + hh : x, pa = in_x ? p : p + hh;
      const double xb = in_x ? x - hh : x, pb = in_x ? p : p - hh;
      return (H(with_atom(base, idx, xa, pa)) - H(with_atom(base, idx, xb, pb))) /
             (2 * hh * w);
    };
    const double d1 = diff(h), d2 = diff(h / 2);
    return (4 * d2 - d1) / 3;
  }

  // Second Lions derivative between two evaluation points; coincident points
  // are split into half-weight twins first.
  double second_derivative(const EmpiricalMeasure2D& mu, double x1, double p1,
                           double x2, double p2, bool first_x, bool second_x) const {
    EmpiricalMeasure2D base = mu;
    int i = find_atom(base, x1, p1);
    if (i < 0) {
      base = augment(base, x1, p1, 1.0 / (base.size() + 1.0));
      i = static_cast<int>(base.size()) - 1;
    }
    int j = -1;
    const bool same_point =
        std::abs(x1 - x2) <= 1e-13 * (1 + std::abs(x1)) &&
        std::abs(p1 - p2) <= 1e-13 * (1 + std::abs(p1));
    if (same_point) {
      // split atom i into twins; differentiate across the twins
      std::vector<Atom2D> atoms = base.atoms();
      const double half = atoms[i].w / 2;
      atoms[i].w = half;
      atoms.push_back({x2, p2, half});
      base = EmpiricalMeasure2D(std::move(atoms));
      j = static_cast<int>(base.size()) - 1;
    } else {
      j = find_atom(base, x2, p2);
      if (j < 0) {
        base = augment(base, x2, p2, 1.0 / (base.size() + 1.0));
        j = static_cast<int>(base.size()) - 1;
      }
    }
    const double wi = base.atoms()[i].w, wj = base.atoms()[j].w;
    const double h = 5e-2 * (1 + std::abs(first_x ? x1 : p1));
    auto shift = [&](const EmpiricalMeasure2D& m, int idx, double hh, bool in_x) {
      const auto& a = m.atoms()[idx];
      return with_atom(m, idx, in_x ? a.x + hh : a.x, in_x ? a.p : a.p + hh);
    };
    auto cross = [&](double hh) {
      const double vpp = H(shift(shift(base, i, hh, first_x), j, hh, second_x));
      const double vpm = H(shift(shift(base, i, hh, first_x), j, -hh, second_x));
      const double vmp = H(shift(shift(base, i, -hh, first_x), j, hh, second_x));
      const double vmm = H(shift(shift(base, i, -hh, first_x), j, -hh, second_x));
      return (vpp - vpm - vmp + vmm) / (4 * hh * hh * wi * wj);
    };
    const double c1 = cross(h), c2 = cross(h / 2);
    return (4 * c2 - c1) / 3;
  }

  // d/d(arg) of the first derivative, measure held fixed.
  double mixed_derivative(const EmpiricalMeasure2D& mu, double x, double p,
                          bool outer_x, bool field_x) const {
    const double h = 3e-2 * (1 + std::abs(outer_x ? x : p));
    auto at = [&](double hh) {
      const double xa = outer_x ? x + hh : x, pa = outer_x ? p : p + hh;
      return first_derivative(mu, xa, pa, field_x, 3e-3);
    };
    auto diff = [&](double hh) { return (at(hh) - at(-hh)) / (2 * hh); };
    const double d1 = diff(h), d2 = diff(h / 2);
    return (4 * d2 - d1) / 3;
  }
};

}  // namespace

ModelSpec builtin_centralized(CentralizedTerm L, CentralizedTerm f, double lambda,
                              ThetaGrid theta_grid, double u, double ubar,
                              double box) {
  if (lambda <= 0) throw InvalidInput("builtin_centralized: lambda must be > 0");
  if (theta_grid.points < 3 || !(theta_grid.lo < theta_grid.hi))
    throw InvalidInput("builtin_centralized: bad theta grid");
  auto core = std::make_shared<CentralCore>();
  core->L = std::move(L);
  core->f = std::move(f);
  core->lambda = lambda;
  core->grid = theta_grid;
  core->diag = std::make_shared<ModelDiagnostics>();

  ModelSpec m;
  m.name = "centralized";
  m.box.half_width = box;
  m.diagnostics = core->diag;
  m.H = [core](const EmpiricalMeasure2D& mu) { return core->H(mu); };
  m.dH_x = [core](const EmpiricalMeasure2D& mu, double x, double p) {
    return core->first_derivative(mu, x, p, true);
  };
  m.dH_p = [core](const EmpiricalMeasure2D& mu, double x, double) {
    // envelope: the momentum derivative is the drift term at the minimizer
    auto prep = core->prepared(mu);
    return core->f(x, *prep.xlaw, prep.theta_star);
  };
  m.d2H_xx = [core](const EmpiricalMeasure2D& mu, double x1, double p1, double x2,
                    double p2) {
    return core->second_derivative(mu, x1, p1, x2, p2, true, true);
  };
  m.d2H_xp = [core](const EmpiricalMeasure2D& mu, double x1, double p1, double x2,
                    double p2) {
    return core->second_derivative(mu, x1, p1, x2, p2, true, false);
  };
  m.d2H_px = [core](const EmpiricalMeasure2D& mu, double x1, double p1, double x2,
                    double p2) {
    return core->second_derivative(mu, x1, p1, x2, p2, false, true);
  };
  m.d2H_pp = [core](const EmpiricalMeasure2D& mu, double x1, double p1, double x2,
                    double p2) {
    return core->second_derivative(mu, x1, p1, x2, p2, false, false);
  };
  m.dx_dH_x = [core](const EmpiricalMeasure2D& mu, double x, double p) {
    return core->mixed_derivative(mu, x, p, true, true);
  };
  m.dp_dH_x = [core](const EmpiricalMeasure2D& mu, double x, double p) {
    return core->mixed_derivative(mu, x, p, false, true);
  };
  m.dx_dH_p = [core](const EmpiricalMeasure2D& mu, double x, double p) {
    return core->mixed_derivative(mu, x, p, true, false);
  };
  m.dp_dH_p = [core](const EmpiricalMeasure2D& mu, double x, double p) {
    return core->mixed_derivative(mu, x, p, false, false);
  };

  m.U = [=](const EmpiricalMeasure1D& mu) {
    return u * mu.second_moment() + ubar * mu.mean() * mu.mean();
  };
  m.dU = [=](const EmpiricalMeasure1D& mu, double x) {
    return 2 * u * x + 2 * ubar * mu.mean();
  };
  m.d2U_mumu = [=](const EmpiricalMeasure1D&, double, double) { return 2 * ubar; };
  m.dx_dU = [=](const EmpiricalMeasure1D&, double) { return 2 * u; };

  const double tmax = std::max(std::abs(theta_grid.lo), std::abs(theta_grid.hi));
  m.lipschitz_bound = std::max({4 * box + tmax, 2 * (u + ubar) * 2 * box, 1.0});
  return m;
}

ModelSpec builtin_centralized_default(double cx2, double cxm, double lambda,
                                      double u, double ubar, double box) {
  if (cx2 < 0 || cxm < 0)
    throw InvalidInput("centralized default: cx2, cxm must be >= 0");
  auto L = [cx2, cxm](double x, const EmpiricalMeasure1D& xlaw, double) {
    return cx2 * x * x + cxm * x * xlaw.mean();
  };
  auto f = [](double, const EmpiricalMeasure1D&, double theta) { return theta; };
  return builtin_centralized(L, f, lambda, ThetaGrid{-6.0, 6.0, 241}, u, ubar, box);
}

// ---------------------------------------------------------------------------
// Displacement checker

std::vector<TestFn2D> default_test_functions() {
  std::vector<TestFn2D> fns;
  fns.push_back([](double, double) { return 1.0; });
  fns.push_back([](double x, double) { return x; });
  fns.push_back([](double, double p) { return p; });
  fns.push_back([](double x, double) { return x * x; });
  fns.push_back([](double, double p) { return p * p; });
  fns.push_back([](double x, double p) { return x * p; });
  for (double c : {-2.0, -1.0, 0.0, 1.0, 2.0})
    fns.push_back([c](double x, double) { return std::exp(-(x - c) * (x - c)); });
  return fns;
}

std::vector<EmpiricalMeasure2D> random_probes(int count, std::uint64_t seed,
                                              double box, int min_atoms,
                                              int max_atoms) {
  CounterRng rng(seed);
  std::vector<EmpiricalMeasure2D> probes;
  probes.reserve(count);
  for (int c = 0; c < count; ++c) {
    const auto stream = stream_id(StreamKind::auxiliary, c);
    const int n =
        min_atoms + static_cast<int>(rng.uniform(stream, 0) * (max_atoms - min_atoms + 1));
    std::vector<Atom2D> atoms(n);
    double total = 0;
    for (int i = 0; i < n; ++i) {
      atoms[i].x = (2 * rng.uniform(stream, 3 * i + 1) - 1) * box / 3;
      atoms[i].p = (2 * rng.uniform(stream, 3 * i + 2) - 1) * box / 3;
      atoms[i].w = 0.1 + rng.uniform(stream, 3 * i + 3);
      total += atoms[i].w;
    }
    for (auto& a : atoms) a.w /= total;
    // re-normalize exactly
    double s = 0;
    for (std::size_t i = 0; i + 1 < atoms.size(); ++i) s += atoms[i].w;
    atoms.back().w = 1.0 - s;
    probes.emplace_back(std::move(atoms));
  }
  return probes;
}

AssumptionReport check_displacement(const ModelSpec& model,
                                    const std::vector<EmpiricalMeasure2D>& probes,
                                    const std::vector<TestFn2D>& testfns,
                                    double tolerance) {
  if (probes.empty() || testfns.empty())
    throw InvalidInput("check_displacement: probes and testfns must be nonempty");

  AssumptionReport rep;
  rep.tolerance = tolerance;
  double v_disp_u = 0, v_disp_x = 0, v_conc_p = 0, v_sign_u = 0, v_sign_p = 0,
         v_sym = 0, v_lip = 0;

  for (const auto& mu : probes) {
    const auto& atoms = mu.atoms();
    const std::size_t n = atoms.size();
    const EmpiricalMeasure1D xlaw = pushforward_x(mu);

    // tabulate the derivative fields once per probe; FD-backed models make
    // these the dominant cost
    std::vector<double> d2u(n * n), d2xx(n * n), d2pp(n * n), d2xp(n * n),
        d2px(n * n);
    std::vector<double> dxdu(n), dxdhx(n), dpdhp(n), dxdhp(n), dpdhx(n);
    for (std::size_t i = 0; i < n; ++i) {
      dxdu[i] = model.dx_dU(xlaw, atoms[i].x);
      dxdhx[i] = model.dx_dH_x(mu, atoms[i].x, atoms[i].p);
      dpdhp[i] = model.dp_dH_p(mu, atoms[i].x, atoms[i].p);
      dxdhp[i] = model.dx_dH_p(mu, atoms[i].x, atoms[i].p);
      dpdhx[i] = model.dp_dH_x(mu, atoms[i].x, atoms[i].p);
      for (std::size_t j = 0; j < n; ++j) {
        d2u[i * n + j] = model.d2U_mumu(xlaw, atoms[i].x, atoms[j].x);
        d2xx[i * n + j] =
            model.d2H_xx(mu, atoms[i].x, atoms[i].p, atoms[j].x, atoms[j].p);
        d2pp[i * n + j] =
            model.d2H_pp(mu, atoms[i].x, atoms[i].p, atoms[j].x, atoms[j].p);
        d2xp[i * n + j] =
            model.d2H_xp(mu, atoms[i].x, atoms[i].p, atoms[j].x, atoms[j].p);
        d2px[i * n + j] =
            model.d2H_px(mu, atoms[i].x, atoms[i].p, atoms[j].x, atoms[j].p);
      }
    }

    for (const auto& phi : testfns) {
      std::vector<double> ph(n);
      for (std::size_t i = 0; i < n; ++i) ph[i] = phi(atoms[i].x, atoms[i].p);

      double form_u = 0, form_x = 0, form_p = 0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double wij = atoms[i].w * atoms[j].w * ph[i] * ph[j];
          form_u += wij * d2u[i * n + j];
          form_x += wij * d2xx[i * n + j];
          form_p += wij * d2pp[i * n + j];
        }
        const double wi2 = atoms[i].w * ph[i] * ph[i];
        form_u += wi2 * dxdu[i];
        form_x += wi2 * dxdhx[i];
        form_p += wi2 * dpdhp[i];
      }
      v_disp_u = std::max(v_disp_u, -form_u);
      v_disp_x = std::max(v_disp_x, -form_x);
      v_conc_p = std::max(v_conc_p, form_p);
    }

    for (std::size_t i = 0; i < n; ++i) {
      v_sign_u = std::max(v_sign_u, -dxdu[i]);
      v_sign_p = std::max(v_sign_p, dpdhp[i]);
      v_sym = std::max(v_sym, std::abs(dxdhp[i] - dpdhx[i]));
      for (std::size_t j = 0; j < n; ++j)
        v_sym = std::max(v_sym, std::abs(d2xp[i * n + j] - d2px[j * n + i]));
      const double lb = model.lipschitz_bound;
      for (double v :
           {model.dH_x(mu, atoms[i].x, atoms[i].p), model.dH_p(mu, atoms[i].x, atoms[i].p),
            model.dU(xlaw, atoms[i].x)})
        v_lip = std::max(v_lip, std::abs(v) - lb);
    }
  }

  auto add = [&](const std::string& name, double violation) {
    rep.conditions.push_back({name, std::max(0.0, violation),
                              std::max(0.0, violation) <= tolerance});
  };
  add("terminal-displacement", v_disp_u);
  add("state-displacement", v_disp_x);
  add("momentum-concavity", v_conc_p);
  add("sign-dx-dU", v_sign_u);
  add("sign-dp-dH-p", v_sign_p);
  add("cross-symmetry", v_sym);
  add("lipschitz-bound", v_lip);
  if (model.diagnostics && model.diagnostics->boundary_minimizer)
    rep.notes.push_back("inner minimizer hit the theta grid boundary");
  if (model.diagnostics && model.diagnostics->tie_broken)
    rep.notes.push_back("inner minimizer tie broken toward smaller theta");
  return rep;
}

// ---------------------------------------------------------------------------
// Fenchel transform

FenchelSlice::FenchelSlice(const ModelSpec& model, double bound, int p_points)
    : model_(&model),
      bound_(bound),
      p_points_(p_points),
      boundary_hit_(std::make_shared<bool>(false)) {
  if (bound < model.lipschitz_bound)
    throw InvalidInput("fenchel_lagrangian: bound must cover the model's Lipschitz bound");
  if (p_points < 9) throw InvalidInput("fenchel_lagrangian: p grid too coarse");
}

double FenchelSlice::slice(double x, double p, const EmpiricalMeasure2D& frame) const {
  const double w0 = 1.0 / (frame.size() + 1.0);
  const double h1 = model_->H(augment(frame, x, p, w0));
  const double h0 = model_->H(augment(frame, x, 0.0, w0));
  return (h1 - h0) / w0;
}

double FenchelSlice::operator()(double x, double theta,
                                const EmpiricalMeasure2D& frame) const {
  auto g = [&](double p) { return slice(x, p, frame) - theta * p; };
  const ScalarOpt r = maximize_scalar(g, -bound_, bound_, p_points_);
  if (r.on_boundary) *boundary_hit_ = true;
  return r.value;
}

double FenchelSlice::biconjugate(double x, double p,
                                 const EmpiricalMeasure2D& frame) const {
  auto g = [&](double th) { return (*this)(x, th, frame) + th * p; };
  const ScalarOpt r = minimize_scalar(g, -bound_, bound_, p_points_);
  if (r.on_boundary) *boundary_hit_ = true;
  return r.value;
}

FenchelSlice fenchel_lagrangian(const ModelSpec& model, double bound, int p_points) {
  return FenchelSlice(model, bound, p_points);
}

double aligned_running_cost(const ModelSpec& model, const EmpiricalMeasure2D& mutilde) {
  double acc = model.H(mutilde);
  for (const auto& a : mutilde.atoms())
    acc -= a.w * model.dH_p(mutilde, a.x, a.p) * a.p;
  return acc;
}

double control_running_cost(const ModelSpec& model, const std::vector<double>& x,
                            const std::vector<double>& theta, double bound,
                            int sweeps) {
  if (x.size() != theta.size() || x.empty())
    throw InvalidInput("control_running_cost: mismatched state/control sizes");
  const std::size_t n = x.size();
  std::vector<double> momenta(n, 0.0);

  for (int sweep = 0; sweep < sweeps; ++sweep) {
    const EmpiricalMeasure2D frame = EmpiricalMeasure2D::uniform(x, momenta);
    for (std::size_t i = 0; i < n; ++i) {
      // dH_p is nonincreasing in p; solve dH_p(frame, x_i, p) = theta_i
      auto g = [&](double p) { return model.dH_p(frame, x[i], p) - theta[i]; };
      double lo = -bound, hi = bound;
      double glo = g(lo), ghi = g(hi);
      if (std::abs(glo) < 1e-14 && std::abs(ghi) < 1e-14) {
        momenta[i] = 0.0;  // degenerate slice: any momentum is stationary
        continue;
      }
      if (glo <= 0) {
        momenta[i] = lo;
        continue;
      }
      if (ghi >= 0) {
        momenta[i] = hi;
        continue;
      }
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (g(mid) > 0) lo = mid;
        else hi = mid;
      }
      momenta[i] = 0.5 * (lo + hi);
    }
  }
  const EmpiricalMeasure2D aligned = EmpiricalMeasure2D::uniform(x, momenta);
  double value = model.H(aligned);
  for (std::size_t i = 0; i < n; ++i) value -= theta[i] * momenta[i] / n;
  return value;
}

// ---------------------------------------------------------------------------
// Potential games of controls

MfgcSpec lq_mfgc(const LqParams& prm) {
  MfgcSpec spec;
  spec.name = "lq-mfgc";
  spec.base = builtin_lq(prm);
  const double q = prm.q, qbar = prm.qbar, lam = prm.lambda, u = prm.u,
               ubar = prm.ubar;
  spec.breveH = [=](const EmpiricalMeasure2D& bm, double x, double p) {
    return q * x * x + 2 * qbar * bm.mean_x() * x - p * p / (4 * lam);
  };
  spec.d_breveH_x = [=](const EmpiricalMeasure2D& bm, double x, double) {
    return 2 * q * x + 2 * qbar * bm.mean_x();
  };
  spec.d_breveH_p = [=](const EmpiricalMeasure2D&, double, double p) {
    return -p / (2 * lam);
  };
  spec.G = [=](double x, const EmpiricalMeasure1D& mu) {
    return u * x * x + 2 * ubar * mu.mean() * x;
  };
  spec.dG_x = [=](double x, const EmpiricalMeasure1D& mu) {
    return 2 * u * x + 2 * ubar * mu.mean();
  };
  return spec;
}

EmpiricalMeasure2D breve_from_tilde(const ModelSpec& model,
                                    const EmpiricalMeasure2D& mutilde) {
  std::vector<Atom2D> atoms = mutilde.atoms();
  for (auto& a : atoms) a.p = model.dH_p(mutilde, a.x, a.p);
  return EmpiricalMeasure2D(std::move(atoms));
}

AssumptionReport check_potential_constraint(
    const MfgcSpec& spec, const std::vector<EmpiricalMeasure2D>& probes,
    double tolerance) {
  if (probes.empty()) throw InvalidInput("check_potential_constraint: no probes");
  AssumptionReport rep;
  rep.tolerance = tolerance;
  double v_p = 0, v_x = 0, v_g = 0;
  for (const auto& mu : probes) {
    const EmpiricalMeasure2D bm = breve_from_tilde(spec.base, mu);
    const EmpiricalMeasure1D xlaw = pushforward_x(mu);
    for (const auto& a : mu.atoms()) {
      v_p = std::max(v_p, std::abs(spec.d_breveH_p(bm, a.x, a.p) -
                                   spec.base.dH_p(mu, a.x, a.p)));
      v_x = std::max(v_x, std::abs(spec.d_breveH_x(bm, a.x, a.p) -
                                   spec.base.dH_x(mu, a.x, a.p)));
      v_g = std::max(v_g, std::abs(spec.dG_x(a.x, xlaw) - spec.base.dU(xlaw, a.x)));
    }
  }
  rep.conditions.push_back({"coincidence-dp", v_p, v_p <= tolerance});
  rep.conditions.push_back({"coincidence-dx", v_x, v_x <= tolerance});
  rep.conditions.push_back({"coincidence-terminal", v_g, v_g <= tolerance});
  return rep;
}

double mfgc_lagrangian(const MfgcSpec& spec, double x, double theta,
                       const EmpiricalMeasure2D& breve_mu, double bound) {
  auto g = [&](double p) { return spec.breveH(breve_mu, x, p) - theta * p; };
  return maximize_scalar(g, -bound, bound, 65).value;
}

}  // namespace mfclab
