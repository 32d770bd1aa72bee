#include "urscheck/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "urscheck/cnf.hpp"
#include "urscheck/counting.hpp"
#include "urscheck/generator.hpp"
#include "urscheck/orchestrator.hpp"
#include "urscheck/report.hpp"
#include "urscheck/samplers.hpp"

namespace urscheck {

namespace fs = std::filesystem;

namespace {

// Counts that fit in 64 bits are JSON numbers, larger ones decimal strings.
nlohmann::json count_json(const BigCount& c) {
  if (c.fits_ulong_p()) return c.get_ui();
  if (mpz_sizeinbase(c.get_mpz_t(), 2) <= 64) {
    std::uint64_t v = 0;
    mpz_export(&v, nullptr, -1, sizeof v, 0, 0, c.get_mpz_t());
    return v;
  }
  return c.get_str();
}

std::vector<TestId> parse_test_list(const std::string& text) {
  std::vector<TestId> tests;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const TestId t = parse_test_id(item);
    if (std::find(tests.begin(), tests.end(), t) != tests.end())
      throw std::invalid_argument("test '" + item + "' listed twice");
    tests.push_back(t);
  }
  if (tests.empty()) throw std::invalid_argument("empty test list");
  return tests;
}

std::string default_results_dir() {
  if (const char* env = std::getenv("URSCHECK_RESULTS"); env && *env) return env;
  return "results";
}

struct GenerateArgs {
  std::uint32_t vars = 30;
  std::uint32_t clauses = 90;
  std::uint32_t width = 3;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  std::size_t planted = 0;
  bool satisfiable = false;
  std::string out;
  std::string name;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  GeneratorConfig cfg;
  cfg.num_vars = a.vars;
  cfg.num_clauses = a.clauses;
  cfg.clause_width = a.width;
  cfg.count = a.count;
  cfg.seed = a.seed;
  cfg.require_satisfiable = a.satisfiable;
  cfg.dataset = a.name.empty() ? fs::path(a.out).filename().string() : a.name;
  if (cfg.dataset.empty()) cfg.dataset = "dataset";
  cfg.validate();
  std::vector<CnfFormula> formulas;
  if (a.planted > 0) {
    cfg.planted = random_assignments(a.vars, a.planted, derive_seed(a.seed, ~std::uint64_t{0}));
    formulas = gen_planted_kcnf(cfg);
  } else {
    formulas = gen_random_kcnf(cfg);
  }
  const auto paths = write_dataset(formulas, cfg, a.out);
  out << "wrote " << paths.size() << " formulae to " << a.out << '\n';
  return 0;
}

int cmd_count(const std::string& file, std::ostream& out, std::ostream& err) {
  std::vector<std::string> warnings;
  const CnfFormula f = read_dimacs_file(file, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  const auto sm = ModelCounter(f).spectrum_and_marginals();
  nlohmann::json spectrum = nlohmann::json::array();
  for (const auto& c : sm.spectrum.counts) spectrum.push_back(count_json(c));
  nlohmann::json marginals = nlohmann::json::array();
  for (std::uint32_t v = 1; v <= sm.marginals.num_vars(); ++v) marginals.push_back(count_json(sm.marginals.true_count(v)));
  const nlohmann::json j = {{"num_vars", f.num_vars()},
                            {"num_clauses", f.num_clauses()},
                            {"total", count_json(sm.spectrum.total)},
                            {"spectrum", spectrum},
                            {"c_even", count_json(sm.spectrum.c_even)},
                            {"c_uneven", count_json(sm.spectrum.c_uneven)},
                            {"marginals", marginals},
                            {"constant_vars", sm.marginals.constant_vars}};
  out << j.dump(2) << '\n';
  return 0;
}

struct SampleArgs {
  std::string file;
  std::size_t n = 1;
  std::string builtin = "uniform";
  double strength = -1;
  std::uint64_t seed = 0;
  std::string format = "literals";
};

SamplerSpec builtin_spec(const std::string& name, double strength) {
  if (name == "uniform") return SamplerSpec::builtin_uniform();
  const BiasVariant v = parse_bias_variant(name);
  if (strength < 0) strength = v == BiasVariant::Skew ? 0.5 : v == BiasVariant::Duplicator ? 9.0 : 0.0;
  return SamplerSpec::builtin_biased(v, strength);
}

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  const CnfFormula f = read_dimacs_file(a.file);
  const OutputFormat format = parse_output_format(a.format);
  const SamplerSpec spec = builtin_spec(a.builtin, a.strength);
  spec.validate();
  PrefixCounter counts(f);
  const Sample s = draw_sample(spec, counts, a.n, a.seed);
  for (const auto& m : s.models()) out << (format == OutputFormat::Literals ? m.to_literals() : m.to_bitstring()) << '\n';
  return 0;
}

struct TestArgs {
  std::string builtin;
  double strength = -1;
  std::string cmd;
  std::string format = "literals";
  std::string dataset;
  double alpha = 0.01;
  std::string tests = "monobit,vf,birthday,sfpc,gof";
  bool early_stop = false;
  std::string results;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;
  double unit_budget = 3600;
  std::size_t batch_size = 1000;
  double timeout = 60;
  std::string invalid_policy = "fail";
  std::string sfpc_bins = "strict";
  std::size_t samples = 0;
  std::size_t max_samples = 0;
  std::string enum_cap;
  std::string label;
};

int cmd_test(const TestArgs& a, std::ostream& out, std::ostream& err) {
  SamplerSpec spec;
  if (!a.builtin.empty() == !a.cmd.empty()) throw std::invalid_argument("give exactly one of --builtin and --cmd");
  if (!a.builtin.empty()) {
    spec = builtin_spec(a.builtin, a.strength);
  } else {
    spec = SamplerSpec::external(a.cmd, parse_output_format(a.format));
    spec.batch_size = a.batch_size;
    spec.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(a.timeout * 1000));
    spec.invalid_policy = parse_invalid_policy(a.invalid_policy);
  }
  spec.label = a.label;
  spec.validate();

  CampaignConfig cfg;
  cfg.alpha = a.alpha;
  cfg.tests = parse_test_list(a.tests);
  cfg.early_stop = a.early_stop;
  cfg.seed = a.seed;
  cfg.parallelism = a.jobs > 0 ? a.jobs : std::max(1u, std::thread::hardware_concurrency());
  cfg.unit_budget = std::chrono::milliseconds(static_cast<std::int64_t>(a.unit_budget * 1000));
  cfg.sfpc_policy = parse_bin_policy(a.sfpc_bins);
  if (a.samples > 0)
    for (TestId t : cfg.tests)
      if (t != TestId::Gof) cfg.sample_size_override[t] = a.samples;
  if (a.max_samples > 0) cfg.max_sample_size = a.max_samples;
  if (!a.enum_cap.empty()) {
    try {
      cfg.enumeration_cap = BigCount(a.enum_cap);
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("invalid --enum-cap '" + a.enum_cap + "'");
    }
  }
  cfg.dataset_id = fs::path(a.dataset).lexically_normal().filename().string();
  if (cfg.dataset_id.empty()) cfg.dataset_id = fs::path(a.dataset).lexically_normal().parent_path().filename().string();
  cfg.result_dir = a.results.empty() ? default_results_dir() : a.results;
  cfg.validate();

  const auto dataset = load_dataset(a.dataset);
  if (dataset.empty()) throw std::invalid_argument("no .cnf files in " + a.dataset);

  Campaign campaign(cfg);
  const auto combined = campaign.run_pipeline(spec, dataset);
  const ReportDocument doc = load_report(cfg.result_dir);
  write_summary(cfg.result_dir, doc);
  out << render_table(doc);
  err << campaign.units_computed() << " units computed, " << campaign.units_reused() << " reused\n";

  bool rejected = false;
  bool indeterminate = false;
  for (const auto& c : combined) {
    rejected |= c.verdict == CombinedVerdict::Rejected;
    indeterminate |= c.verdict == CombinedVerdict::Indeterminate;
  }
  if (rejected) return kExitRejected;
  if (indeterminate) return kExitIndeterminate;
  return kExitConsistent;
}

int cmd_report(const std::string& results, std::ostream& out) {
  const std::string dir = results.empty() ? default_results_dir() : results;
  const ReportDocument doc = load_report(dir);
  write_summary(dir, doc);
  out << render_table(doc);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Statistical uniformity checks for SAT samplers", "urscheck"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate a dataset of random k-CNF formulae");
  generate->add_option("--vars", gen.vars, "Number of variables")->check(CLI::PositiveNumber);
  generate->add_option("--clauses", gen.clauses, "Number of clauses");
  generate->add_option("--width", gen.width, "Literals per clause")->check(CLI::PositiveNumber);
  generate->add_option("--count", gen.count, "Number of formulae")->check(CLI::PositiveNumber);
  generate->add_option("--seed", gen.seed, "Random seed");
  generate->add_option("--planted", gen.planted, "Plant this many random assignments");
  generate->add_flag("--satisfiable", gen.satisfiable, "Redraw unsatisfiable formulae");
  generate->add_option("--out", gen.out, "Output directory")->required();
  generate->add_option("--name", gen.name, "Dataset name (default: output directory name)");

  std::string count_file;
  auto* count = app.add_subcommand("count", "Print exact model count, spectrum and marginals as JSON");
  count->add_option("file", count_file, "DIMACS file")->required();

  SampleArgs smp;
  auto* sample = app.add_subcommand("sample", "Draw models with a built-in sampler");
  sample->add_option("file", smp.file, "DIMACS file")->required();
  sample->add_option("-n", smp.n, "Number of models")->check(CLI::PositiveNumber);
  sample->add_option("--builtin", smp.builtin, "uniform, skew, duplicator or firstfall");
  sample->add_option("--strength", smp.strength, "Bias strength");
  sample->add_option("--seed", smp.seed, "Random seed");
  sample->add_option("--format", smp.format, "literals or bitstring");

  TestArgs ta;
  auto* test = app.add_subcommand("test", "Run the test pipeline on a sampler and a dataset");
  auto* builtin_opt = test->add_option("--builtin", ta.builtin, "uniform, skew, duplicator or firstfall");
  auto* cmd_opt = test->add_option("--cmd", ta.cmd, "External sampler command with {cnf} and {n} placeholders");
  builtin_opt->excludes(cmd_opt);
  test->add_option("--strength", ta.strength, "Bias strength for built-in biased samplers");
  test->add_option("--format", ta.format, "External output format: literals or bitstring");
  test->add_option("--dataset", ta.dataset, "Directory of .cnf files")->required();
  test->add_option("--alpha", ta.alpha, "Significance level");
  test->add_option("--tests", ta.tests, "Comma-separated tests in execution order");
  test->add_flag("--early-stop", ta.early_stop, "Skip later tests once one rejects");
  test->add_option("--results", ta.results, "Result directory (default: $URSCHECK_RESULTS or ./results)");
  test->add_option("--seed", ta.seed, "Campaign seed");
  test->add_option("--jobs", ta.jobs, "Parallel units (default: available processors)");
  test->add_option("--unit-budget", ta.unit_budget, "Wall-clock budget per unit, seconds");
  test->add_option("--batch-size", ta.batch_size, "Models requested per external call");
  test->add_option("--timeout", ta.timeout, "Timeout per external call, seconds");
  test->add_option("--invalid-policy", ta.invalid_policy, "fail or filter");
  test->add_option("--sfpc-bins", ta.sfpc_bins, "strict or merge_tails");
  test->add_option("--samples", ta.samples, "Fixed sample size for every test except gof");
  test->add_option("--max-samples", ta.max_samples, "Skip units needing more samples than this");
  test->add_option("--enum-cap", ta.enum_cap, "Largest model count gof enumerates");
  test->add_option("--label", ta.label, "Sampler name used in results");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Recompute and print results from a result directory");
  report->add_option("--results", report_dir, "Result directory (default: $URSCHECK_RESULTS or ./results)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen, out);
    if (count->parsed()) return cmd_count(count_file, out, err);
    if (sample->parsed()) return cmd_sample(smp, out);
    if (test->parsed()) return cmd_test(ta, out, err);
    if (report->parsed()) return cmd_report(report_dir, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace urscheck
