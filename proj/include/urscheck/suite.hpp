#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "urscheck/cnf.hpp"
#include "urscheck/counting.hpp"
#include "urscheck/stats.hpp"

namespace urscheck {

enum class TestId { Monobit, Vf, Birthday, Sfpc, Gof };

inline constexpr TestId kAllTests[] = {TestId::Monobit, TestId::Vf, TestId::Birthday, TestId::Sfpc, TestId::Gof};

std::string_view to_string(TestId id);
/// Accepts "monobit", "vf", "birthday", "sfpc", "gof".
TestId parse_test_id(std::string_view name);
/// Column heading used in tables ("Monobit", "VF", ...).
std::string_view display_name(TestId id);

enum class Verdict { Consistent, Rejected, Skipped };
std::string_view to_string(Verdict v);
Verdict parse_verdict(std::string_view name);

struct TestResult {
  TestId test = TestId::Monobit;
  std::string formula_id;
  std::uint64_t n_samples = 0;
  double statistic = 0.0;       // chi-square value, or observed repeats for birthday
  double dof_or_lambda = 0.0;   // degrees of freedom, or Poisson rate for birthday
  std::optional<double> p_value;
  Verdict verdict = Verdict::Skipped;
  std::string reason;           // why the unit was skipped
  nlohmann::json extras = nlohmann::json::object();

  bool skipped() const { return verdict == Verdict::Skipped; }
  static TestResult skip(TestId test, std::string reason, std::uint64_t n_samples = 0);
};

nlohmann::json to_json(const TestResult& r);
TestResult test_result_from_json(const nlohmann::json& j);

enum class BinPolicy { Strict, MergeTails };
std::string_view to_string(BinPolicy p);
BinPolicy parse_bin_policy(std::string_view name);

inline constexpr double kMinExpected = 5.0;

/// Number of unordered pairs of equal models: sum over distinct models of C(mult, 2).
std::uint64_t count_repeats(const Sample& s);

/// Two-sided Poisson test on the number of repeated pairs, with
/// lambda = C(N, 2) / |R_F|.
TestResult birthday_test(const BigCount& total, const Sample& s, double alpha);

/// Chi-square (1 dof) on the number of sampled models with an even number of
/// true variables.
TestResult monobit_test(const SolutionSpectrum& spectrum, const Sample& s, double alpha,
                        double min_expected = kMinExpected);

/// Per-variable chi-square (1 dof) against the exact marginals, combined by
/// an equal-weight harmonic mean over the variables that are not constant
/// and whose expected cells both reach `min_expected`.
TestResult vf_test(const MarginalTable& marginals, const Sample& s, double alpha,
                   double min_expected = kMinExpected);

/// Chi-square over the cardinality spectrum (models by number of true
/// variables), |Gamma| - 1 degrees of freedom.
TestResult sfpc_test(const SolutionSpectrum& spectrum, const Sample& s, double alpha,
                     BinPolicy policy = BinPolicy::Strict, double min_expected = kMinExpected);

/// Chi-square over every model of the formula; `models` is the lexicographic
/// enumeration, whose positions define the cell ids. Skipped unless
/// N >= 5 |R_F|. Throws std::invalid_argument if the sample holds a non-model.
TestResult gof_test(const std::vector<Model>& models, const Sample& s, double alpha);

}  // namespace urscheck
