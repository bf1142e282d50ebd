#include "mfclab/measures.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace mfclab {

namespace {

std::atomic<std::uint64_t> g_revision{1};

void check_weights(double total, std::size_t n) {
  if (n == 0) throw InvalidInput("empirical measure must have atoms");
  if (std::abs(total - 1.0) > 1e-12)
    throw InvalidInput("atom weights must sum to 1 within 1e-12");
}

std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Inverse CDF of the standard normal (Acklam's rational approximation,
// refined by one Halley step). Plenty for quantile stratification.
double normal_quantile(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double q, r, x;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= phigh) {
    q = p - 0.5;
    r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

}  // namespace

EmpiricalMeasure1D::EmpiricalMeasure1D(std::vector<Atom1D> atoms)
    : atoms_(std::move(atoms)) {
  double total = 0;
  for (const auto& a : atoms_) {
    if (!std::isfinite(a.x) || !std::isfinite(a.w) || a.w < 0)
      throw InvalidInput("atoms must have finite locations and weights >= 0");
    total += a.w;
  }
  check_weights(total, atoms_.size());
}

EmpiricalMeasure1D EmpiricalMeasure1D::uniform(const std::vector<double>& xs) {
  if (xs.empty()) throw InvalidInput("empirical measure must have atoms");
  std::vector<Atom1D> atoms(xs.size());
  const double w = 1.0 / xs.size();
  for (std::size_t i = 0; i < xs.size(); ++i) atoms[i] = {xs[i], w};
  return EmpiricalMeasure1D(std::move(atoms));
}

double EmpiricalMeasure1D::mean() const {
  double m = 0;
  for (const auto& a : atoms_) m += a.w * a.x;
  return m;
}

double EmpiricalMeasure1D::second_moment() const {
  double m = 0;
  for (const auto& a : atoms_) m += a.w * a.x * a.x;
  return m;
}

void EmpiricalMeasure1D::assign_uniform(const double* xs, std::size_t n) {
  if (n == 0) throw InvalidInput("empirical measure must have atoms");
  atoms_.resize(n);
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(xs[i])) throw InvalidInput("non-finite atom location");
    atoms_[i] = {xs[i], w};
  }
}

EmpiricalMeasure2D::EmpiricalMeasure2D(std::vector<Atom2D> atoms)
    : atoms_(std::move(atoms)),
      revision_(g_revision.fetch_add(1, std::memory_order_relaxed)) {
  double total = 0;
  for (const auto& a : atoms_) {
    if (!std::isfinite(a.x) || !std::isfinite(a.p) || !std::isfinite(a.w) ||
        a.w < 0)
      throw InvalidInput("atoms must be finite with weights >= 0");
    total += a.w;
  }
  check_weights(total, atoms_.size());
}

EmpiricalMeasure2D EmpiricalMeasure2D::uniform(const std::vector<double>& xs,
                                               const std::vector<double>& ps) {
  if (xs.size() != ps.size() || xs.empty())
    throw InvalidInput("uniform 2-D measure needs matching nonempty x, p");
  std::vector<Atom2D> atoms(xs.size());
  const double w = 1.0 / xs.size();
  for (std::size_t i = 0; i < xs.size(); ++i) atoms[i] = {xs[i], ps[i], w};
  return EmpiricalMeasure2D(std::move(atoms));
}

void EmpiricalMeasure2D::assign_uniform(const double* xs, const double* ps,
                                        std::size_t n) {
  if (n == 0) throw InvalidInput("empirical measure must have atoms");
  atoms_.resize(n);
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ps[i]))
      throw InvalidInput("non-finite atom");
    atoms_[i] = {xs[i], ps[i], w};
  }
  revision_ = g_revision.fetch_add(1, std::memory_order_relaxed);
  stats_ready_ = false;
}

void EmpiricalMeasure2D::ensure_stats() const {
  if (stats_ready_) return;
  double mx = 0, mp = 0, sx = 0, sp = 0, cxp = 0;
  for (const auto& a : atoms_) {
    mx += a.w * a.x;
    mp += a.w * a.p;
    sx += a.w * a.x * a.x;
    sp += a.w * a.p * a.p;
    cxp += a.w * a.x * a.p;
  }
  mean_x_ = mx;
  mean_p_ = mp;
  second_x_ = sx;
  second_p_ = sp;
  cross_xp_ = cxp;
  stats_ready_ = true;
}

double wasserstein_1d(const EmpiricalMeasure1D& mu, const EmpiricalMeasure1D& nu,
                      int order) {
  if (mu.empty() || nu.empty())
    throw InvalidInput("wasserstein_1d: empty measure");
  if (order != 1 && order != 2)
    throw InvalidInput("wasserstein_1d: order must be 1 or 2");

  auto sorted = [](const EmpiricalMeasure1D& m) {
    std::vector<Atom1D> a = m.atoms();
    std::sort(a.begin(), a.end(),
              [](const Atom1D& l, const Atom1D& r) { return l.x < r.x; });
    return a;
  };
  const std::vector<Atom1D> a = sorted(mu), b = sorted(nu);

  // Walk the merged CDF breakpoints of the two quantile functions.
  std::size_t i = 0, j = 0;
  double cum = 0.0, cost = 0.0;
  double wa = a[0].w, wb = b[0].w;
  while (i < a.size() && j < b.size()) {
    const double seg = std::min(wa, wb);
    if (seg > 0) {
      const double d = std::abs(a[i].x - b[j].x);
      cost += seg * (order == 1 ? d : d * d);
    }
    wa -= seg;
    wb -= seg;
    cum += seg;
    if (wa <= 1e-300 && i + 1 < a.size()) wa = a[++i].w;
    else if (wa <= 1e-300) ++i;
    if (wb <= 1e-300 && j + 1 < b.size()) wb = b[++j].w;
    else if (wb <= 1e-300) ++j;
    if (cum >= 1.0 - 1e-15 && (wa <= 1e-300 || wb <= 1e-300)) break;
  }
  return order == 1 ? cost : std::sqrt(cost);
}

EmpiricalMeasure1D pushforward_x(const EmpiricalMeasure2D& mutilde) {
  if (mutilde.empty()) throw InvalidInput("pushforward_x: empty measure");
  std::vector<Atom1D> atoms(mutilde.size());
  for (std::size_t i = 0; i < mutilde.size(); ++i)
    atoms[i] = {mutilde.atoms()[i].x, mutilde.atoms()[i].w};
  return EmpiricalMeasure1D(std::move(atoms));
}

EmpiricalMeasure2D graph_lift(const EmpiricalMeasure1D& mu,
                              const std::function<double(double)>& f) {
  if (mu.empty()) throw InvalidInput("graph_lift: empty measure");
  std::vector<Atom2D> atoms(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double p = f(mu.atoms()[i].x);
    if (!std::isfinite(p))
      throw InvalidInput("graph_lift: f is not finite at an atom");
    atoms[i] = {mu.atoms()[i].x, p, mu.atoms()[i].w};
  }
  return EmpiricalMeasure2D(std::move(atoms));
}

Moments moments(const EmpiricalMeasure1D& mu) {
  return Moments{mu.mean(), mu.second_moment()};
}

EmpiricalMeasure1D gaussian_quantile_family(int n, double scale, double box) {
  if (n <= 0) throw InvalidInput("quantile family needs n > 0");
  std::vector<double> xs(n);
  for (int i = 0; i < n; ++i) {
    double x = scale * normal_quantile((i + 0.5) / n);
    xs[i] = std::clamp(x, -box, box);
  }
  return EmpiricalMeasure1D::uniform(xs);
}

std::string to_csv(const EmpiricalMeasure1D& mu) {
  std::string out = "location,weight\n";
  for (const auto& a : mu.atoms())
    out += format17(a.x) + "," + format17(a.w) + "\n";
  return out;
}

std::string to_csv(const EmpiricalMeasure2D& mu) {
  std::string out = "location,p,weight\n";
  for (const auto& a : mu.atoms())
    out += format17(a.x) + "," + format17(a.p) + "," + format17(a.w) + "\n";
  return out;
}

std::string to_json(const EmpiricalMeasure1D& mu) {
  std::string out = "[";
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (i) out += ",";
    out += "[" + format17(mu.atoms()[i].x) + "," + format17(mu.atoms()[i].w) + "]";
  }
  return out + "]";
}

std::string to_json(const EmpiricalMeasure2D& mu) {
  std::string out = "[";
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (i) out += ",";
    out += "[" + format17(mu.atoms()[i].x) + "," + format17(mu.atoms()[i].p) +
           "," + format17(mu.atoms()[i].w) + "]";
  }
  return out + "]";
}

}  // namespace mfclab
