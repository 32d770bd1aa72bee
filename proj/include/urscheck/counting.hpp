#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <gmpxx.h>

#include "urscheck/cnf.hpp"

namespace urscheck {

/// Exact model counts routinely exceed 2^64 on real feature models.
using BigCount = mpz_class;

class CountingBudgetExhausted : public std::runtime_error {
 public:
  CountingBudgetExhausted() : std::runtime_error("counting budget exhausted") {}
};

class EnumerationCapExceeded : public std::runtime_error {
 public:
  EnumerationCapExceeded() : std::runtime_error("enumeration cap exceeded") {}
};

struct CountingLimits {
  /// 0 means unlimited. Counted per top-level call.
  std::uint64_t max_decisions = 0;
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

/// Models of F grouped by how many variables they set to true.
struct SolutionSpectrum {
  std::vector<BigCount> counts;  // counts[k] = n_k, size num_vars + 1
  BigCount total;
  BigCount c_even;
  BigCount c_uneven;

  static SolutionSpectrum from_counts(std::vector<BigCount> counts);
  std::uint32_t num_vars() const { return static_cast<std::uint32_t>(counts.size()) - 1; }
  bool operator==(const SolutionSpectrum&) const = default;
};

/// Per-variable number of models with that variable true.
struct MarginalTable {
  std::vector<BigCount> true_counts;  // index v - 1
  BigCount total;
  std::vector<std::uint32_t> constant_vars;

  static MarginalTable from_counts(std::vector<BigCount> true_counts, BigCount total);
  std::uint32_t num_vars() const { return static_cast<std::uint32_t>(true_counts.size()); }
  const BigCount& true_count(std::uint32_t var) const { return true_counts[var - 1]; }
  BigCount false_count(std::uint32_t var) const { return total - true_counts[var - 1]; }
  bool is_constant(std::uint32_t var) const;
  bool operator==(const MarginalTable&) const = default;
};

struct SpectrumAndMarginals {
  SolutionSpectrum spectrum;
  MarginalTable marginals;
};

/// DPLL-style exact counter with unit propagation and no pure-literal rule.
///
/// On a node where every clause is satisfied the remaining f free variables
/// contribute 2^f models; the spectrum variant adds the binomial row
/// C(f, 0..f) shifted by the number of variables already true. The instance
/// keeps its clause database between calls, so repeated counts under
/// different assumptions are cheap. Not thread-safe; use one per thread.
class ModelCounter {
 public:
  explicit ModelCounter(const CnfFormula& f, CountingLimits limits = {});
  ~ModelCounter();
  ModelCounter(ModelCounter&&) noexcept;
  ModelCounter& operator=(ModelCounter&&) noexcept;

  /// |R_F| restricted to models agreeing with every assumption literal.
  BigCount count(std::span<const Literal> assumptions = {});
  SolutionSpectrum spectrum();
  MarginalTable marginals();
  SpectrumAndMarginals spectrum_and_marginals();

  /// All models in lexicographic order (variable 1 most significant, false
  /// before true). Throws EnumerationCapExceeded when |R_F| > cap.
  std::vector<Model> enumerate(const BigCount& cap);

  /// First model found by a depth-first search that decides variables in
  /// index order and tries `phase[v-1]` before its negation.
  std::optional<Model> first_model(const std::vector<bool>& phase);

  std::uint64_t last_decisions() const;

 private:
  struct Engine;
  std::unique_ptr<Engine> engine_;
};

SolutionSpectrum count_spectrum(const CnfFormula& f, CountingLimits limits = {});
MarginalTable marginals(const CnfFormula& f, CountingLimits limits = {});
BigCount count_models(const CnfFormula& f, CountingLimits limits = {});

inline constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t{1} << 20;
std::vector<Model> enumerate_models(const CnfFormula& f, const BigCount& cap = BigCount(kDefaultEnumerationCap),
                                    CountingLimits limits = {});

/// Binomial coefficient C(n, k) as an exact integer.
BigCount binomial(std::uint64_t n, std::uint64_t k);

/// Nearest double to a / b for big non-negative counts.
double ratio(const BigCount& a, const BigCount& b);

}  // namespace urscheck
