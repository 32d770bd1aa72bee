#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "urscheck/cnf.hpp"
#include "urscheck/counting.hpp"
#include "urscheck/random.hpp"

namespace urscheck {

using Clock = std::chrono::steady_clock;
using Deadline = std::optional<Clock::time_point>;

class BudgetExhausted : public std::runtime_error {
 public:
  BudgetExhausted() : std::runtime_error("budget exhausted") {}
};

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SamplerTimeout : public SamplerError {
 public:
  SamplerTimeout() : SamplerError("sampler timeout") {}
};

class InvalidSampleError : public SamplerError {
 public:
  InvalidSampleError(std::size_t invalid, std::size_t total)
      : SamplerError(std::to_string(invalid) + " invalid sample" + (invalid == 1 ? "" : "s") + " out of " +
                     std::to_string(total)),
        invalid_(invalid),
        total_(total) {}
  std::size_t invalid() const { return invalid_; }
  std::size_t total() const { return total_; }

 private:
  std::size_t invalid_;
  std::size_t total_;
};

enum class SamplerKind { BuiltinUniform, BuiltinBiased, External };
enum class BiasVariant { Skew, Duplicator, Firstfall };
enum class OutputFormat { Literals, Bitstring };
enum class InvalidPolicy { Fail, Filter };

std::string_view to_string(BiasVariant v);
BiasVariant parse_bias_variant(std::string_view name);
std::string_view to_string(OutputFormat f);
OutputFormat parse_output_format(std::string_view name);
std::string_view to_string(InvalidPolicy p);
InvalidPolicy parse_invalid_policy(std::string_view name);

struct SamplerSpec {
  SamplerKind kind = SamplerKind::BuiltinUniform;
  BiasVariant variant = BiasVariant::Skew;
  double strength = 0.0;
  /// Shell command with `{cnf}` and `{n}` placeholders.
  std::string command_template;
  OutputFormat format = OutputFormat::Literals;
  std::size_t batch_size = 1000;
  std::chrono::milliseconds timeout{60'000};  // per batch
  InvalidPolicy invalid_policy = InvalidPolicy::Fail;
  std::uint64_t rng_seed = 0;
  /// Optional display name; id() derives one otherwise.
  std::string label;

  static SamplerSpec builtin_uniform();
  static SamplerSpec builtin_biased(BiasVariant variant, double strength);
  static SamplerSpec external(std::string command_template, OutputFormat format);

  /// Filesystem-safe identifier, e.g. "uniform", "skew-0.5", "external".
  std::string id() const;
  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

nlohmann::json to_json(const SamplerSpec& s);
SamplerSpec sampler_spec_from_json(const nlohmann::json& j);

/// Exact model counts of F under assumption prefixes "variables 1..d fixed",
/// memoised per prefix. Shared by every built-in sampler drawing from the same
/// formula; calls are serialised internally.
class PrefixCounter {
 public:
  explicit PrefixCounter(const CnfFormula& f, std::size_t max_entries = std::size_t{1} << 22);

  const CnfFormula& formula() const { return formula_; }
  BigCount total();
  /// Count of models whose variables 1..values.size() equal `values`.
  BigCount count(const std::vector<bool>& values);
  /// Phase-guided first model (see ModelCounter::first_model).
  std::optional<Model> first_model(const std::vector<bool>& phase);

  std::size_t cache_size() const;
  std::uint64_t counter_calls() const { return counter_calls_; }

 private:
  CnfFormula formula_;
  ModelCounter counter_;
  std::size_t max_entries_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, BigCount> cache_;
  std::optional<BigCount> total_;
  std::uint64_t counter_calls_ = 0;
};

/// Exactly uniform draws by recursive partitioning: for each variable in index
/// order, with c0 models below the "false" branch out of c, draw u uniform in
/// [0, c) and take "false" iff u < c0. Throws SamplerError when F is
/// unsatisfiable, BudgetExhausted past the deadline.
Sample uniform_partition_sample(PrefixCounter& counts, std::size_t n, UniformSource& rng, Deadline deadline = {});
Sample uniform_partition_sample(const CnfFormula& f, std::size_t n, UniformSource& rng);

/// Deliberately non-uniform samplers used to check test power.
///  - skew: partitioning with the "true" branch weighted by (1 + strength);
///  - duplicator: ceil(n / (1 + strength)) uniform draws, padded with repeats of the first;
///  - firstfall: depth-first first solution under a random phase per draw.
Sample biased_sample(PrefixCounter& counts, std::size_t n, BiasVariant variant, double strength, UniformSource& rng,
                     Deadline deadline = {});

/// Positions of models in `s` that do not satisfy `f`.
std::vector<std::size_t> validate_sample(const CnfFormula& f, const Sample& s);

/// Parses sampler stdout: `literals` is one solution per line as signed
/// integers with optional trailing 0; `bitstring` is one 0/1 string of length
/// num_vars per line. Blank lines and lines starting with 'c' are ignored.
/// Throws ParseError naming the line.
Sample parse_sampler_output(std::string_view text, OutputFormat format, std::uint32_t num_vars);

struct ExternalRunStats {
  std::size_t invocations = 0;
  std::size_t dropped = 0;
};

/// Calls the external sampler with batches of at most batch_size until n
/// valid models are collected. `formula_path` is substituted for {cnf}; when
/// empty the formula is written to a temporary DIMACS file.
Sample run_external(const SamplerSpec& spec, const CnfFormula& f, std::size_t n, ExternalRunStats* stats = nullptr,
                    Deadline deadline = {}, const std::string& formula_path = {});

/// Dispatches on spec.kind. Built-in samplers draw from `counts`.
Sample draw_sample(const SamplerSpec& spec, PrefixCounter& counts, std::size_t n, std::uint64_t seed,
                   Deadline deadline = {}, ExternalRunStats* stats = nullptr, const std::string& formula_path = {});

}  // namespace urscheck
