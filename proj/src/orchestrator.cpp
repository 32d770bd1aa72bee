#include "urscheck/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "urscheck/random.hpp"

namespace urscheck {

namespace fs = std::filesystem;

void CampaignConfig::validate() const {
  if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (tests.empty()) throw std::invalid_argument("at least one test must be selected");
  if (unit_budget.count() <= 0) throw std::invalid_argument("unit budget must be positive");
  if (parallelism < 1) throw std::invalid_argument("parallelism must be at least 1");
  if (max_sample_size && *max_sample_size < 1) throw std::invalid_argument("sample size cap must be positive");
  if (!(min_expected > 0)) throw std::invalid_argument("minimum expected count must be positive");
  if (sample_floor < 1) throw std::invalid_argument("sample floor must be positive");
}

nlohmann::json to_json(const CampaignConfig& cfg) {
  nlohmann::json tests = nlohmann::json::array();
  for (auto t : cfg.tests) tests.push_back(to_string(t));
  nlohmann::json overrides = nlohmann::json::object();
  for (const auto& [t, n] : cfg.sample_size_override) overrides[std::string(to_string(t))] = n;
  nlohmann::json j = {{"alpha", cfg.alpha},
                      {"tests", tests},
                      {"early_stop", cfg.early_stop},
                      {"sample_size_override", overrides},
                      {"unit_budget_ms", cfg.unit_budget.count()},
                      {"parallelism", cfg.parallelism},
                      {"min_expected", cfg.min_expected},
                      {"sample_floor", cfg.sample_floor},
                      {"vf_requirement_cap", cfg.vf_requirement_cap},
                      {"sfpc_policy", to_string(cfg.sfpc_policy)},
                      {"enumeration_cap", cfg.enumeration_cap.get_str()},
                      {"max_count_decisions", cfg.max_count_decisions},
                      {"seed", cfg.seed},
                      {"dataset", cfg.dataset_id}};
  if (cfg.max_sample_size) j["max_sample_size"] = *cfg.max_sample_size;
  return j;
}

std::string_view to_string(CombinedVerdict v) {
  switch (v) {
    case CombinedVerdict::Consistent: return "consistent";
    case CombinedVerdict::Rejected: return "rejected";
    case CombinedVerdict::Indeterminate: return "indeterminate";
    case CombinedVerdict::NotRun: return "not_run";
  }
  return "?";
}

CombinedVerdict parse_combined_verdict(std::string_view name) {
  for (auto v : {CombinedVerdict::Consistent, CombinedVerdict::Rejected, CombinedVerdict::Indeterminate,
                 CombinedVerdict::NotRun})
    if (to_string(v) == name) return v;
  throw std::invalid_argument("unknown combined verdict '" + std::string(name) + "'");
}

nlohmann::json to_json(const CombinedResult& r) {
  return {{"test", to_string(r.test)},
          {"dataset", r.dataset_id},
          {"sampler", r.sampler_id},
          {"p_values", r.pvalues},
          {"attempted", r.attempted},
          {"completed", r.completed},
          {"hmp", r.hmp},
          {"verdict", to_string(r.verdict)},
          {"total_wall_time", r.total_wall_time},
          {"extras", r.extras}};
}

CombinedResult combined_result_from_json(const nlohmann::json& j) {
  CombinedResult r;
  r.test = parse_test_id(j.at("test").get<std::string>());
  r.dataset_id = j.at("dataset").get<std::string>();
  r.sampler_id = j.at("sampler").get<std::string>();
  r.pvalues = j.at("p_values").get<std::vector<double>>();
  r.attempted = j.at("attempted").get<std::size_t>();
  r.completed = j.at("completed").get<std::size_t>();
  r.hmp = j.at("hmp").get<double>();
  r.verdict = parse_combined_verdict(j.at("verdict").get<std::string>());
  r.total_wall_time = j.value("total_wall_time", 0.0);
  r.extras = j.value("extras", nlohmann::json::object());
  return r;
}

CombinedResult combine_results(const std::vector<TestResult>& results, double alpha) {
  CombinedResult out;
  if (!results.empty()) out.test = results.front().test;
  out.attempted = results.size();
  std::vector<double> repeats;
  std::vector<double> lambdas;
  for (const auto& r : results) {
    if (r.skipped()) continue;
    out.pvalues.push_back(*r.p_value);
    if (r.test == TestId::Birthday) {
      repeats.push_back(r.statistic);
      lambdas.push_back(r.dof_or_lambda);
    }
  }
  out.completed = out.pvalues.size();
  if (out.pvalues.empty()) {
    out.verdict = CombinedVerdict::Indeterminate;
    return out;
  }
  out.hmp = hmp_combine(std::span<const double>(out.pvalues)).value();
  out.verdict = out.hmp <= alpha ? CombinedVerdict::Rejected : CombinedVerdict::Consistent;
  if (!repeats.empty()) {
    auto mean = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    out.extras["mean_repeats"] = mean(repeats);
    out.extras["mean_lambda"] = mean(lambdas);
    out.extras["min_repeats"] = *std::min_element(repeats.begin(), repeats.end());
    out.extras["max_repeats"] = *std::max_element(repeats.begin(), repeats.end());
  }
  return out;
}

namespace {

constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

// ceil(min_expected * total / part), saturating.
BigCount cells_requirement(double min_expected, const BigCount& total, const BigCount& part) {
  mpq_class need(mpq_class(min_expected) * mpq_class(total) / mpq_class(part));
  need.canonicalize();
  BigCount ceil_need;
  mpz_cdiv_q(ceil_need.get_mpz_t(), need.get_num_mpz_t(), need.get_den_mpz_t());
  return ceil_need;
}

std::uint64_t saturate(const BigCount& n) {
  if (n < 0) return 0;
  if (mpz_sizeinbase(n.get_mpz_t(), 2) > 64) return kSaturated;
  std::uint64_t out = 0;
  mpz_export(&out, nullptr, -1, sizeof out, 0, 0, n.get_mpz_t());
  return out;
}

}  // namespace

std::uint64_t required_sample_size(TestId test, const SolutionSpectrum& spectrum, const MarginalTable& marginals,
                                   const SampleSizePolicy& policy) {
  const BigCount floor(static_cast<unsigned long>(policy.floor));
  switch (test) {
    case TestId::Gof: return saturate(BigCount(spectrum.total * 5));
    case TestId::Monobit: {
      if (spectrum.c_even == 0 || spectrum.c_uneven == 0) return policy.floor;
      const auto& smaller = spectrum.c_even < spectrum.c_uneven ? spectrum.c_even : spectrum.c_uneven;
      const BigCount need = cells_requirement(policy.min_expected, spectrum.total, smaller);
      return saturate(need > floor ? need : floor);
    }
    case TestId::Vf: {
      BigCount n = floor;
      const BigCount cap(std::floor(policy.vf_requirement_cap));
      for (std::uint32_t v = 1; v <= marginals.num_vars(); ++v) {
        if (marginals.is_constant(v)) continue;
        const BigCount f = marginals.false_count(v);
        const auto& smaller = marginals.true_count(v) < f ? marginals.true_count(v) : f;
        const BigCount need = cells_requirement(policy.min_expected, marginals.total, smaller);
        if (need > cap) continue;  // excluded from the test
        if (need > n) n = need;
      }
      return saturate(n);
    }
    case TestId::Sfpc:
    case TestId::Birthday: return policy.floor;
  }
  return policy.floor;
}

GroundTruth::GroundTruth(const CnfFormula& f, std::uint64_t max_decisions) : formula_(f), prefix_counter_(f) {
  try {
    CountingLimits limits;
    limits.max_decisions = max_decisions;
    counts_ = ModelCounter(formula_, limits).spectrum_and_marginals();
  } catch (const CountingBudgetExhausted& e) {
    failure_ = e.what();
  }
}

const std::vector<Model>& GroundTruth::models(const BigCount& cap) {
  std::lock_guard lock(models_mutex_);
  if (!counts_) throw CountingBudgetExhausted();
  if (counts_->spectrum.total > cap) throw EnumerationCapExceeded();
  if (!models_) models_ = enumerate_models(formula_, cap);
  return *models_;
}

std::shared_ptr<GroundTruth> GroundTruthCache::get(const CnfFormula& f) {
  const std::string key = f.name() + "#" + std::to_string(hash_name(write_dimacs(f)));
  std::shared_ptr<Slot> slot;
  {
    std::shared_lock read(mutex_);
    if (auto it = slots_.find(key); it != slots_.end()) slot = it->second;
  }
  if (!slot) {
    std::unique_lock write(mutex_);
    auto& entry = slots_[key];
    if (!entry) entry = std::make_shared<Slot>();
    slot = entry;
  }
  std::call_once(slot->once, [&] { slot->truth = std::make_shared<GroundTruth>(f, max_decisions_); });
  return slot->truth;
}

std::size_t GroundTruthCache::size() const {
  std::shared_lock read(mutex_);
  return slots_.size();
}

nlohmann::json to_json(const UnitRecord& u) {
  nlohmann::json j = to_json(u.result);
  j["schema_version"] = kSchemaVersion;
  j["dataset"] = u.dataset_id;
  j["sampler"] = u.sampler_id;
  j["wall_seconds"] = u.wall_seconds;
  j["seed"] = u.seed;
  j["invocations"] = u.invocations;
  j["dropped"] = u.dropped;
  return j;
}

UnitRecord unit_record_from_json(const nlohmann::json& j) {
  UnitRecord u;
  u.result = test_result_from_json(j);
  u.dataset_id = j.at("dataset").get<std::string>();
  u.sampler_id = j.at("sampler").get<std::string>();
  u.wall_seconds = j.value("wall_seconds", 0.0);
  u.seed = j.value("seed", std::uint64_t{0});
  u.invocations = j.value("invocations", std::size_t{0});
  u.dropped = j.value("dropped", std::size_t{0});
  return u;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path temp = target.string() + ".tmp." + std::to_string(::getpid()) + "." +
                        std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + temp.string());
    out << bytes;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + temp.string());
  }
  fs::rename(temp, target);
}

Campaign::Campaign(CampaignConfig cfg) : cfg_(std::move(cfg)), cache_(cfg_.max_count_decisions) { cfg_.validate(); }

std::string Campaign::unit_path(const std::string& sampler_id, TestId test, const std::string& formula) const {
  return (fs::path(cfg_.result_dir) / "units" / cfg_.dataset_id / sampler_id / std::string(to_string(test)) /
          (formula + ".json"))
      .string();
}

std::uint64_t Campaign::unit_seed(const SamplerSpec& sampler, TestId test, const std::string& formula) const {
  const std::string stream = sampler.id() + "/" + std::string(to_string(test)) + "/" + formula;
  return derive_seed(derive_seed(cfg_.seed, sampler.rng_seed), hash_name(stream));
}

namespace {

std::string formula_path_in(const std::string& result_dir, const std::string& dataset, const std::string& name) {
  return (fs::path(result_dir) / "formulas" / dataset / (name + ".cnf")).string();
}

}  // namespace

TestResult Campaign::execute(const SamplerSpec& sampler, GroundTruth& truth, TestId test, std::uint64_t seed,
                             ExternalRunStats& stats) {
  const auto start = Clock::now();
  const Deadline deadline = start + cfg_.unit_budget;
  if (!truth.counts()) return TestResult::skip(test, truth.failure());
  const auto& gt = *truth.counts();
  if (gt.spectrum.total == 0) return TestResult::skip(test, "unsatisfiable formula");

  std::uint64_t n;
  if (auto it = cfg_.sample_size_override.find(test); it != cfg_.sample_size_override.end()) {
    n = it->second;
  } else {
    n = required_sample_size(test, gt.spectrum, gt.marginals,
                             {cfg_.min_expected, cfg_.sample_floor, cfg_.vf_requirement_cap});
  }
  const std::vector<Model>* models = nullptr;
  if (test == TestId::Gof) {
    if (gt.spectrum.total > cfg_.enumeration_cap) return TestResult::skip(test, "enumeration cap exceeded");
  }
  if (cfg_.max_sample_size && n > *cfg_.max_sample_size) return TestResult::skip(test, "sample size cap exceeded", n);
  if (test == TestId::Gof) models = &truth.models(cfg_.enumeration_cap);

  const std::string path =
      cfg_.result_dir.empty() ? std::string() : formula_path_in(cfg_.result_dir, cfg_.dataset_id, truth.formula().name());
  Sample sample;
  try {
    sample = draw_sample(sampler, truth.prefix_counter(), static_cast<std::size_t>(n), seed, deadline, &stats,
                         fs::exists(path) ? path : std::string());
  } catch (const BudgetExhausted&) {
    return TestResult::skip(test, "budget exhausted", n);
  } catch (const SamplerTimeout&) {
    return TestResult::skip(test, "sampler timeout", n);
  } catch (const InvalidSampleError& e) {
    auto r = TestResult::skip(test, std::string("invalid samples: ") + e.what(), n);
    r.extras["invalid"] = e.invalid();
    return r;
  } catch (const ParseError& e) {
    return TestResult::skip(test, std::string("sampler output: ") + e.what(), n);
  } catch (const SamplerError& e) {
    return TestResult::skip(test, std::string("sampler error: ") + e.what(), n);
  }
  if (auto bad = validate_sample(truth.formula(), sample); !bad.empty()) {
    auto r = TestResult::skip(test, "invalid samples: " + std::to_string(bad.size()), n);
    r.extras["invalid"] = bad.size();
    return r;
  }
  if (sample.size() != n) return TestResult::skip(test, "sampler returned too few samples", sample.size());

  switch (test) {
    case TestId::Monobit: return monobit_test(gt.spectrum, sample, cfg_.alpha, cfg_.min_expected);
    case TestId::Vf: return vf_test(gt.marginals, sample, cfg_.alpha, cfg_.min_expected);
    case TestId::Birthday: return birthday_test(gt.spectrum.total, sample, cfg_.alpha);
    case TestId::Sfpc: return sfpc_test(gt.spectrum, sample, cfg_.alpha, cfg_.sfpc_policy, cfg_.min_expected);
    case TestId::Gof: return gof_test(*models, sample, cfg_.alpha);
  }
  return TestResult::skip(test, "unknown test", n);
}

UnitRecord Campaign::run_test_unit(const SamplerSpec& sampler, const CnfFormula& f, TestId test) {
  const std::string sampler_id = sampler.id();
  const std::string path = cfg_.result_dir.empty() ? std::string() : unit_path(sampler_id, test, f.name());
  if (!path.empty() && fs::exists(path)) {
    try {
      std::ifstream in(path);
      auto record = unit_record_from_json(nlohmann::json::parse(in));
      ++reused_;
      return record;
    } catch (const std::exception&) {
      // Corrupt or partial file: recompute.
    }
  }

  UnitRecord record;
  record.dataset_id = cfg_.dataset_id;
  record.sampler_id = sampler_id;
  record.seed = unit_seed(sampler, test, f.name());
  const auto start = Clock::now();
  ExternalRunStats stats;
  try {
    auto truth = cache_.get(f);
    record.result = execute(sampler, *truth, test, record.seed, stats);
  } catch (const std::exception& e) {
    record.result = TestResult::skip(test, std::string("error: ") + e.what());
  }
  record.result.test = test;
  record.result.formula_id = f.name();
  record.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  record.invocations = stats.invocations;
  record.dropped = stats.dropped;
  ++computed_;
  if (!path.empty()) write_file_atomic(path, to_json(record).dump(2) + "\n");
  return record;
}

void Campaign::write_manifest(const SamplerSpec& sampler, const std::vector<CnfFormula>& dataset) const {
  const fs::path dir(cfg_.result_dir);
  fs::create_directories(dir);
  nlohmann::json formulas = nlohmann::json::array();
  for (const auto& f : dataset) {
    const auto path = formula_path_in(cfg_.result_dir, cfg_.dataset_id, f.name());
    if (!fs::exists(path)) write_file_atomic(path, write_dimacs(f));
    formulas.push_back(fs::relative(path, dir).generic_string());
  }
  const fs::path manifest_path = dir / "manifest.json";
  nlohmann::json manifest = {{"schema_version", kSchemaVersion}, {"tool_version", kToolVersion},
                             {"campaigns", nlohmann::json::object()}};
  if (fs::exists(manifest_path)) {
    try {
      std::ifstream in(manifest_path);
      auto existing = nlohmann::json::parse(in);
      if (existing.contains("campaigns")) manifest["campaigns"] = existing["campaigns"];
    } catch (const std::exception&) {
    }
  }
  manifest["campaigns"][cfg_.dataset_id + "/" + sampler.id()] = {
      {"dataset", cfg_.dataset_id}, {"sampler", to_json(sampler)}, {"config", to_json(cfg_)}, {"formulas", formulas}};
  write_file_atomic(manifest_path.string(), manifest.dump(2) + "\n");
}

std::vector<CombinedResult> Campaign::run_pipeline(const SamplerSpec& sampler, const std::vector<CnfFormula>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("dataset is empty");
  sampler.validate();
  std::vector<CnfFormula> formulas = dataset;
  for (std::size_t i = 0; i < formulas.size(); ++i)
    if (formulas[i].name().empty()) formulas[i].set_name("formula_" + std::to_string(i));
  if (!cfg_.result_dir.empty()) write_manifest(sampler, formulas);

  std::vector<CombinedResult> out;
  bool stopped = false;
  for (TestId test : cfg_.tests) {
    if (stopped) {
      CombinedResult skipped;
      skipped.test = test;
      skipped.dataset_id = cfg_.dataset_id;
      skipped.sampler_id = sampler.id();
      skipped.attempted = 0;
      skipped.verdict = CombinedVerdict::NotRun;
      out.push_back(std::move(skipped));
      continue;
    }
    std::vector<UnitRecord> records(formulas.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < formulas.size(); i = next++) records[i] = run_test_unit(sampler, formulas[i], test);
    };
    const std::size_t threads = std::min(cfg_.parallelism, formulas.size());
    if (threads <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    std::vector<TestResult> results;
    double wall = 0.0;
    for (auto& r : records) {
      results.push_back(r.result);
      wall += r.wall_seconds;
    }
    CombinedResult combined = combine_results(results, cfg_.alpha);
    combined.test = test;
    combined.dataset_id = cfg_.dataset_id;
    combined.sampler_id = sampler.id();
    combined.total_wall_time = wall;
    if (cfg_.early_stop && combined.verdict == CombinedVerdict::Rejected) stopped = true;
    out.push_back(std::move(combined));
  }
  return out;
}

}  // namespace urscheck
