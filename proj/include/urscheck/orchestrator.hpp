#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "urscheck/cnf.hpp"
#include "urscheck/counting.hpp"
#include "urscheck/samplers.hpp"
#include "urscheck/suite.hpp"

namespace urscheck {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

struct CampaignConfig {
  double alpha = 0.01;
  /// Execution order; the recommended pipeline runs the cheap tests first.
  std::vector<TestId> tests{TestId::Monobit, TestId::Vf, TestId::Birthday, TestId::Sfpc, TestId::Gof};
  /// Stop the pipeline after the first test whose dataset verdict is Rejected.
  bool early_stop = false;
  /// Fixed N per test, bypassing required_sample_size.
  std::map<TestId, std::size_t> sample_size_override;
  /// Units whose required N exceeds this are skipped.
  std::optional<std::size_t> max_sample_size;
  std::chrono::milliseconds unit_budget{std::chrono::hours(1)};
  std::size_t parallelism = 1;

  double min_expected = kMinExpected;
  std::size_t sample_floor = 1000;
  /// Variables needing more than this many samples for E >= min_expected
  /// are left out of the VF test instead of inflating N.
  double vf_requirement_cap = 1e5;
  BinPolicy sfpc_policy = BinPolicy::Strict;
  BigCount enumeration_cap{kDefaultEnumerationCap};
  std::uint64_t max_count_decisions = 0;

  std::uint64_t seed = 0;
  std::string dataset_id = "dataset";
  /// Empty: results are kept in memory only.
  std::string result_dir;

  void validate() const;
};

nlohmann::json to_json(const CampaignConfig& cfg);

enum class CombinedVerdict { Consistent, Rejected, Indeterminate, NotRun };
std::string_view to_string(CombinedVerdict v);
CombinedVerdict parse_combined_verdict(std::string_view name);

struct CombinedResult {
  TestId test = TestId::Monobit;
  std::string dataset_id;
  std::string sampler_id;
  std::vector<double> pvalues;  // non-skipped formulae, dataset order
  std::size_t attempted = 0;
  std::size_t completed = 0;    // #F
  double hmp = 1.0;
  CombinedVerdict verdict = CombinedVerdict::Indeterminate;
  double total_wall_time = 0.0;
  nlohmann::json extras = nlohmann::json::object();
};

nlohmann::json to_json(const CombinedResult& r);
CombinedResult combined_result_from_json(const nlohmann::json& j);

/// Equal-weight harmonic mean over the non-skipped results; Rejected iff the
/// HMP is <= alpha, Indeterminate when every result was skipped.
CombinedResult combine_results(const std::vector<TestResult>& results, double alpha);

struct SampleSizePolicy {
  double min_expected = kMinExpected;
  std::size_t floor = 1000;
  double vf_requirement_cap = 1e5;
};

/// N needed so every cell a test uses has expected count >= min_expected
/// (never below the floor, except GOF which needs exactly 5 |R_F|). Saturates
/// at UINT64_MAX.
std::uint64_t required_sample_size(TestId test, const SolutionSpectrum& spectrum, const MarginalTable& marginals,
                                   const SampleSizePolicy& policy = {});

/// Exact ground truth of one formula, computed once and shared by every unit.
class GroundTruth {
 public:
  GroundTruth(const CnfFormula& f, std::uint64_t max_decisions);

  const CnfFormula& formula() const { return formula_; }
  /// Empty when counting failed (see failure()).
  const std::optional<SpectrumAndMarginals>& counts() const { return counts_; }
  const std::string& failure() const { return failure_; }
  PrefixCounter& prefix_counter() { return prefix_counter_; }
  /// Lexicographic model list; throws EnumerationCapExceeded above `cap`.
  const std::vector<Model>& models(const BigCount& cap);

 private:
  CnfFormula formula_;
  std::optional<SpectrumAndMarginals> counts_;
  std::string failure_;
  PrefixCounter prefix_counter_;
  std::mutex models_mutex_;
  std::optional<std::vector<Model>> models_;
};

/// Ground truth keyed by formula name; compute-once with concurrent readers.
class GroundTruthCache {
 public:
  explicit GroundTruthCache(std::uint64_t max_decisions = 0) : max_decisions_(max_decisions) {}
  std::shared_ptr<GroundTruth> get(const CnfFormula& f);
  std::size_t size() const;

 private:
  struct Slot {
    std::once_flag once;
    std::shared_ptr<GroundTruth> truth;
  };
  std::uint64_t max_decisions_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
};

struct UnitRecord {
  std::string dataset_id;
  std::string sampler_id;
  TestResult result;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::size_t invocations = 0;
  std::size_t dropped = 0;
};

nlohmann::json to_json(const UnitRecord& u);
UnitRecord unit_record_from_json(const nlohmann::json& j);

/// Runs (test x sampler x formula) units and aggregates them per dataset.
/// With a result directory each unit is written atomically as it finishes,
/// and units already on disk are loaded instead of recomputed.
class Campaign {
 public:
  explicit Campaign(CampaignConfig cfg);

  const CampaignConfig& config() const { return cfg_; }
  GroundTruthCache& ground_truth() { return cache_; }

  /// Never throws for sampler, counting or budget failures: those become
  /// Skipped results with a reason.
  UnitRecord run_test_unit(const SamplerSpec& sampler, const CnfFormula& f, TestId test);

  std::vector<CombinedResult> run_pipeline(const SamplerSpec& sampler, const std::vector<CnfFormula>& dataset);

  std::size_t units_computed() const { return computed_; }
  std::size_t units_reused() const { return reused_; }

  /// Path of a unit file inside the result directory.
  std::string unit_path(const std::string& sampler_id, TestId test, const std::string& formula) const;
  std::uint64_t unit_seed(const SamplerSpec& sampler, TestId test, const std::string& formula) const;

 private:
  TestResult execute(const SamplerSpec& sampler, GroundTruth& truth, TestId test, std::uint64_t seed,
                     ExternalRunStats& stats);
  void write_manifest(const SamplerSpec& sampler, const std::vector<CnfFormula>& dataset) const;

  CampaignConfig cfg_;
  GroundTruthCache cache_;
  std::atomic<std::size_t> computed_{0};
  std::atomic<std::size_t> reused_{0};
};

/// Writes `bytes` to `path` via a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace urscheck
