#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace urscheck {

/// A probability in [0, 1].
class PValue {
 public:
  constexpr PValue() = default;
  /// Clamps into [0, 1]; NaN is rejected.
  explicit PValue(double value);
  /// Like the constructor, but values below the smallest positive normal
  /// double are raised to it.
  static PValue floored(double value);

  constexpr double value() const { return value_; }
  constexpr operator double() const { return value_; }

 private:
  double value_ = 1.0;
};

struct WeightedPValue {
  double p;
  double weight;
};

/// Upper tail of the chi-square distribution with `dof` degrees of freedom,
/// i.e. the regularized upper incomplete gamma Q(dof/2, x/2).
PValue chi_square_sf(double x, double dof);

/// Regularized incomplete gamma functions. `a` > 0, `x` >= 0.
double gamma_p(double a, double x);
double gamma_q(double a, double x);

/// P(X <= r) for X ~ Poisson(lambda).
PValue poisson_cdf(std::int64_t r, double lambda);
/// P(X >= r) for X ~ Poisson(lambda); equal to 1 for r <= 0.
PValue poisson_upper_tail(std::int64_t r, double lambda);

/// Weighted harmonic mean p-value sum(w) / sum(w / p). Any exact zero
/// p-value with positive weight yields 0. Throws std::invalid_argument on an
/// empty input, weights summing above 1 + 1e-12, or p outside [0, 1].
PValue hmp_combine(std::span<const WeightedPValue> pvalues);
/// Equal weights 1/m.
PValue hmp_combine(std::span<const double> pvalues);

struct FamilyAlpha {
  double family;      // 1 - (1 - alpha)^n
  double bonferroni;  // alpha / n
};

FamilyAlpha fwer_alpha(double alpha, std::uint64_t n_tests);

}  // namespace urscheck
