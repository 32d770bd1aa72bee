#include "urscheck/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace urscheck {

PValue::PValue(double value) {
  if (std::isnan(value)) throw std::invalid_argument("p-value is NaN");
  value_ = std::clamp(value, 0.0, 1.0);
}

PValue PValue::floored(double value) {
  PValue p(value);
  p.value_ = std::max(p.value_, std::numeric_limits<double>::min());
  return p;
}

namespace {

constexpr double kLn2Pi = 1.8378770664093454835606594728112;  // log(2*pi)

// Neumaier's compensated summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// log(x!) - log(sqrt(2*pi*x) * (x/e)^x), the error of Stirling's formula.
double stirling_error(double x) {
  if (x <= 15.0) return std::lgamma(x + 1.0) - (x + 0.5) * std::log(x) + x - 0.5 * kLn2Pi;
  constexpr double s0 = 1.0 / 12, s1 = 1.0 / 360, s2 = 1.0 / 1260, s3 = 1.0 / 1680, s4 = 1.0 / 1188;
  const double xx = x * x;
  return (s0 - (s1 - (s2 - (s3 - s4 / xx) / xx) / xx) / xx) / x;
}

// x*log(x/m) + m - x without cancellation when x is close to m.
double deviance_term(double x, double m) {
  if (std::fabs(x - m) < 0.1 * (x + m)) {
    double v = (x - m) / (x + m);
    double s = (x - m) * v;
    double ej = 2 * x * v;
    v *= v;
    for (int j = 1; j < 1000; ++j) {
      ej *= v;
      const double next = s + ej / (2 * j + 1);
      if (next == s) return next;
      s = next;
    }
    return s;
  }
  return x * std::log(x / m) + m - x;
}

// log(m^x e^-m / Gamma(x + 1)) for real x >= 0, m > 0.
double log_poisson_density(double x, double m) {
  if (x == 0) return -m;
  if (x < 10) return x * std::log(m) - m - std::lgamma(x + 1.0);
  return -stirling_error(x) - deviance_term(x, m) - 0.5 * (kLn2Pi + std::log(x));
}

// log(x^a e^-x / Gamma(a)), the common prefactor of P(a, x) and Q(a, x).
double log_gamma_prefactor(double a, double x) { return std::log(a) + log_poisson_density(a, x); }

// Series for P(a, x); converges quickly for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  CompensatedSum sum;
  sum.add(term);
  const int max_iter = 100000 + static_cast<int>(50 * std::sqrt(a));
  for (int n = 1; n < max_iter; ++n) {
    term *= x / (a + n);
    sum.add(term);
    if (term < sum.value() * 1e-17) break;
  }
  return std::exp(log_gamma_prefactor(a, x)) * sum.value();
}

// Continued fraction for Q(a, x) by the modified Lentz method; x >= a + 1.
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  const int max_iter = 100000 + static_cast<int>(50 * std::sqrt(a));
  for (int i = 1; i < max_iter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(log_gamma_prefactor(a, x)) * h;
}

void check_gamma_args(double a, double x) {
  if (!(a > 0) || !std::isfinite(a)) throw std::invalid_argument("incomplete gamma: a must be positive and finite");
  if (!(x >= 0) || !std::isfinite(x)) throw std::invalid_argument("incomplete gamma: x must be non-negative and finite");
}

// Sum of Poisson(lambda) probabilities over integers in [lo, hi]; hi < 0
// stands for +infinity. Terms are unimodal around floor(lambda), so we walk
// outward from the peak of the range and stop once terms are negligible.
double poisson_range(std::int64_t lo, std::int64_t hi, double lambda) {
  constexpr double negligible = 1e-22;
  const bool unbounded = hi < 0;
  const auto mode = static_cast<std::int64_t>(std::floor(lambda));
  auto term = [&](std::int64_t j) { return std::exp(log_poisson_density(static_cast<double>(j), lambda)); };

  std::int64_t start = std::clamp(mode, lo, unbounded ? std::max(mode, lo) : hi);
  CompensatedSum sum;
  sum.add(term(start));
  for (std::int64_t j = start - 1; j >= lo; --j) {
    const double t = term(j);
    sum.add(t);
    if (t <= negligible * sum.value()) break;
  }
  for (std::int64_t j = start + 1; unbounded || j <= hi; ++j) {
    const double t = term(j);
    sum.add(t);
    if (t <= negligible * sum.value() && j > mode) break;
  }
  return sum.value();
}

}  // namespace

double gamma_p(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0) return 0.0;
  if (x < a + 1.0) return std::clamp(gamma_p_series(a, x), 0.0, 1.0);
  return std::clamp(1.0 - gamma_q_fraction(a, x), 0.0, 1.0);
}

double gamma_q(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0) return 1.0;
  if (x < a + 1.0) return std::clamp(1.0 - gamma_p_series(a, x), 0.0, 1.0);
  return std::clamp(gamma_q_fraction(a, x), 0.0, 1.0);
}

PValue chi_square_sf(double x, double dof) {
  if (!std::isfinite(x)) throw std::invalid_argument("chi-square statistic is not finite");
  if (x < 0) throw std::invalid_argument("chi-square statistic is negative");
  if (!(dof >= 1)) throw std::invalid_argument("chi-square needs at least one degree of freedom");
  if (x == 0) return PValue(1.0);
  return PValue::floored(gamma_q(dof / 2.0, x / 2.0));
}

PValue poisson_cdf(std::int64_t r, double lambda) {
  if (!std::isfinite(lambda) || lambda < 0) throw std::invalid_argument("Poisson rate must be finite and >= 0");
  if (r < 0) return PValue(0.0);
  if (lambda == 0) return PValue(1.0);
  return PValue::floored(poisson_range(0, r, lambda));
}

PValue poisson_upper_tail(std::int64_t r, double lambda) {
  if (!std::isfinite(lambda) || lambda < 0) throw std::invalid_argument("Poisson rate must be finite and >= 0");
  if (r <= 0) return PValue(1.0);
  if (lambda == 0) return PValue::floored(0.0);
  return PValue::floored(poisson_range(r, -1, lambda));
}

PValue hmp_combine(std::span<const WeightedPValue> pvalues) {
  if (pvalues.empty()) throw std::invalid_argument("harmonic mean p-value of an empty set");
  CompensatedSum weights;
  CompensatedSum inverse;
  bool zero = false;
  for (const auto& [p, w] : pvalues) {
    if (!(p >= 0 && p <= 1)) throw std::invalid_argument("p-value outside [0, 1]: " + std::to_string(p));
    if (!(w >= 0) || !std::isfinite(w)) throw std::invalid_argument("negative or non-finite weight");
    if (w == 0) continue;
    weights.add(w);
    if (p == 0)
      zero = true;
    else
      inverse.add(w / p);
  }
  if (weights.value() > 1.0 + 1e-12) throw std::invalid_argument("weights sum above 1");
  if (weights.value() == 0) throw std::invalid_argument("all weights are zero");
  if (zero) return PValue(0.0);
  return PValue(weights.value() / inverse.value());
}

PValue hmp_combine(std::span<const double> pvalues) {
  std::vector<WeightedPValue> weighted;
  weighted.reserve(pvalues.size());
  const double w = pvalues.empty() ? 0.0 : 1.0 / static_cast<double>(pvalues.size());
  for (double p : pvalues) weighted.push_back({p, w});
  return hmp_combine(std::span<const WeightedPValue>(weighted));
}

FamilyAlpha fwer_alpha(double alpha, std::uint64_t n_tests) {
  if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (n_tests == 0) throw std::invalid_argument("at least one test is required");
  const double n = static_cast<double>(n_tests);
  return {-std::expm1(n * std::log1p(-alpha)), alpha / n};
}

}  // namespace urscheck
