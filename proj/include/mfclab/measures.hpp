#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mfclab/types.hpp"

namespace mfclab {

struct Atom1D {
  double x = 0.0;
  double w = 0.0;
};

struct Atom2D {
  double x = 0.0;
  double p = 0.0;
  double w = 0.0;
};

/// Weighted particle cloud on the real line. Weights must sum to one within
/// 1e-12 and every location must be finite.
class EmpiricalMeasure1D {
 public:
  EmpiricalMeasure1D() = default;
  explicit EmpiricalMeasure1D(std::vector<Atom1D> atoms);

  static EmpiricalMeasure1D dirac(double x) { return uniform({x}); }
  static EmpiricalMeasure1D uniform(const std::vector<double>& locations);

  const std::vector<Atom1D>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }

  double mean() const;
  double second_moment() const;

  /// In-place refill with equal weights, reusing capacity (solver hot path).
  void assign_uniform(const double* xs, std::size_t n);

 private:
  std::vector<Atom1D> atoms_;
};

/// Weighted particle cloud on the (x, p) plane, carrying joint position and
/// momentum. Moments are cached lazily; the revision id identifies a cloud
/// instance for model-side memoization.
class EmpiricalMeasure2D {
 public:
  EmpiricalMeasure2D() = default;
  explicit EmpiricalMeasure2D(std::vector<Atom2D> atoms);

  static EmpiricalMeasure2D dirac(double x, double p) {
    return EmpiricalMeasure2D({Atom2D{x, p, 1.0}});
  }
  /// Equal weights over (x_i, p_i).
  static EmpiricalMeasure2D uniform(const std::vector<double>& xs,
                                    const std::vector<double>& ps);

  const std::vector<Atom2D>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }
  std::uint64_t revision() const { return revision_; }

  double mean_x() const { ensure_stats(); return mean_x_; }
  double mean_p() const { ensure_stats(); return mean_p_; }
  double second_x() const { ensure_stats(); return second_x_; }
  double second_p() const { ensure_stats(); return second_p_; }
  double cross_xp() const { ensure_stats(); return cross_xp_; }

  /// In-place refill with equal weights, reusing capacity (solver hot path).
  void assign_uniform(const double* xs, const double* ps, std::size_t n);

 private:
  void ensure_stats() const;

  std::vector<Atom2D> atoms_;
  std::uint64_t revision_ = 0;
  mutable bool stats_ready_ = false;
  mutable double mean_x_ = 0, mean_p_ = 0, second_x_ = 0, second_p_ = 0,
                 cross_xp_ = 0;
};

/// Exact W_p (p = 1 or 2) between one-dimensional clouds via the monotone
/// quantile coupling on merged CDF breakpoints.
double wasserstein_1d(const EmpiricalMeasure1D& mu, const EmpiricalMeasure1D& nu,
                      int order);

/// Marginal in x; weights of coinciding locations are preserved as-is
/// (atoms are not deduplicated).
EmpiricalMeasure1D pushforward_x(const EmpiricalMeasure2D& mutilde);

/// (Id, f) pushforward: lifts mu to atoms (x, f(x)) with unchanged weights.
EmpiricalMeasure2D graph_lift(const EmpiricalMeasure1D& mu,
                              const std::function<double(double)>& f);

struct Moments {
  double mean = 0.0;
  double second_moment = 0.0;
};
Moments moments(const EmpiricalMeasure1D& mu);

/// Deterministic n-atom stratified-quantile discretization of a standard
/// Gaussian truncated to [-box, box], scaled by `scale`. Used for chaos and
/// nash initial families: W2(mu_n, base) = O(1/n) without sampling noise.
EmpiricalMeasure1D gaussian_quantile_family(int n, double scale, double box);

// CSV rows "x,w" / "x,p,w"; JSON arrays [[x,w],...] / [[x,p,w],...].
std::string to_csv(const EmpiricalMeasure1D& mu);
std::string to_csv(const EmpiricalMeasure2D& mu);
std::string to_json(const EmpiricalMeasure1D& mu);
std::string to_json(const EmpiricalMeasure2D& mu);

}  // namespace mfclab
