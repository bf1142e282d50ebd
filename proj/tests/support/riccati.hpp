#pragma once

// Test-only closed-form machinery for the linear-quadratic model, kept
// independent of the solver code paths it checks. The backward system
//   a' = a^2/lambda - q,              a(T) = u
//   b' = (2ab + b^2)/lambda - qbar,   b(T) = ubar
//   c' = -sigma^2 a,                  c(T) = 0
// gives the mean-field value V(t, mu) = a Int x^2 dmu + b mean^2 + c and the
// decoupling field dV/dmu = 2a x + 2b mean. The N-particle value shares a, b:
//   V_N(t, x) = a (1/N) sum x_i^2 + b xbar^2 + gamma_N,
//   gamma_N(t) = int_t^T [sigma^2 (a + b/N) + sigma0^2 (a + b)] ds.
// The game master field adds gamma' = (b^2 + 2(a+b) gamma)/lambda, gamma(T)=0,
//   Vmaster(t, x, m) = a x^2 + 2 b m x + gamma m^2 + c.

#include <cmath>
#include <vector>

#include "mfclab/measures.hpp"

namespace oracle {

struct RiccatiCurves {
  double t0 = 0, T = 1, dt = 0;
  std::vector<double> a, b, c, master_gamma;

  double a0() const { return a.front(); }
  double b0() const { return b.front(); }
  double c0() const { return c.front(); }

  double at(const std::vector<double>& v, double t) const {
    const double s = (t - t0) / dt;
    const int k = std::max(0, std::min(static_cast<int>(s), int(v.size()) - 2));
    const double w = s - k;
    return (1 - w) * v[k] + w * v[k + 1];
  }
};

inline RiccatiCurves solve_riccati(double q, double qbar, double lambda, double u,
                                   double ubar, double sigma, double t0, double T,
                                   int steps = 40000) {
  RiccatiCurves r;
  r.t0 = t0;
  r.T = T;
  r.dt = (T - t0) / steps;
  r.a.assign(steps + 1, 0.0);
  r.b.assign(steps + 1, 0.0);
  r.c.assign(steps + 1, 0.0);
  r.master_gamma.assign(steps + 1, 0.0);
  double a = u, b = ubar, c = 0, g = 0;
  r.a[steps] = a;
  r.b[steps] = b;
  auto fa = [&](double a_) { return a_ * a_ / lambda - q; };
  auto fb = [&](double a_, double b_) {
    return (2 * a_ * b_ + b_ * b_) / lambda - qbar;
  };
  auto fg = [&](double a_, double b_, double g_) {
    return (b_ * b_ + 2 * (a_ + b_) * g_) / lambda;
  };
  const double h = r.dt;
  (void)c;
  for (int k = steps; k > 0; --k) {
    const double k1a = fa(a), k1b = fb(a, b), k1g = fg(a, b, g);
    const double a2 = a - 0.5 * h * k1a, b2 = b - 0.5 * h * k1b,
                 g2 = g - 0.5 * h * k1g;
    const double k2a = fa(a2), k2b = fb(a2, b2), k2g = fg(a2, b2, g2);
    const double a3 = a - 0.5 * h * k2a, b3 = b - 0.5 * h * k2b,
                 g3 = g - 0.5 * h * k2g;
    const double k3a = fa(a3), k3b = fb(a3, b3), k3g = fg(a3, b3, g3);
    const double a4 = a - h * k3a, b4 = b - h * k3b, g4 = g - h * k3g;
    const double k4a = fa(a4), k4b = fb(a4, b4), k4g = fg(a4, b4, g4);
    a -= h * (k1a + 2 * k2a + 2 * k3a + k4a) / 6;
    b -= h * (k1b + 2 * k2b + 2 * k3b + k4b) / 6;
    g -= h * (k1g + 2 * k2g + 2 * k3g + k4g) / 6;
    r.a[k - 1] = a;
    r.b[k - 1] = b;
    r.master_gamma[k - 1] = g;
  }
  // c(t) = int_t^T sigma^2 a ds by trapezoid on the stored curve
  for (int k = steps - 1; k >= 0; --k)
    r.c[k] = r.c[k + 1] + 0.5 * h * sigma * sigma * (r.a[k] + r.a[k + 1]);
  return r;
}

inline double mean_of(const mfclab::EmpiricalMeasure1D& mu) { return mu.mean(); }

inline double value_meanfield(const RiccatiCurves& r,
                              const mfclab::EmpiricalMeasure1D& mu, double t) {
  const double m = mu.mean();
  return r.at(r.a, t) * mu.second_moment() + r.at(r.b, t) * m * m + r.at(r.c, t);
}

inline double decoupling_field(const RiccatiCurves& r,
                               const mfclab::EmpiricalMeasure1D& mu, double t,
                               double x) {
  return 2 * r.at(r.a, t) * x + 2 * r.at(r.b, t) * mu.mean();
}

inline double value_nparticle(const RiccatiCurves& r, const std::vector<double>& x,
                              double t, double sigma, double sigma0) {
  const int N = static_cast<int>(x.size());
  double s2 = 0, m = 0;
  for (double v : x) {
    s2 += v * v;
    m += v;
  }
  s2 /= N;
  m /= N;
  // gamma_N by quadrature of the stored curves
  const int k0 = static_cast<int>((t - r.t0) / r.dt);
  double gamma = 0;
  for (std::size_t k = r.a.size() - 1; k > static_cast<std::size_t>(k0); --k) {
    const double fa = sigma * sigma * (r.a[k] + r.b[k] / N) +
                      sigma0 * sigma0 * (r.a[k] + r.b[k]);
    const double fb = sigma * sigma * (r.a[k - 1] + r.b[k - 1] / N) +
                      sigma0 * sigma0 * (r.a[k - 1] + r.b[k - 1]);
    gamma += 0.5 * r.dt * (fa + fb);
  }
  return r.at(r.a, t) * s2 + r.at(r.b, t) * m * m + gamma;
}

inline double value_master(const RiccatiCurves& r, double t, double x, double m) {
  return r.at(r.a, t) * x * x + 2 * r.at(r.b, t) * m * x +
         r.at(r.master_gamma, t) * m * m + r.at(r.c, t);
}

}  // namespace oracle
