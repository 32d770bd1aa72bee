// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "oracle.hpp"
#include "urscheck/cli.hpp"
#include "urscheck/counting.hpp"
#include "urscheck/generator.hpp"
#include "urscheck/orchestrator.hpp"
#include "urscheck/random.hpp"
#include "urscheck/stats.hpp"
#include "urscheck/suite.hpp"

using namespace urscheck;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::string failures;

  void check(bool ok, const std::string& what) {
    if (ok) return;
    failures += (pass ? "" : "; ") + what;
    pass = false;
  }
  std::string text() const { return pass ? detail.str() : detail.str() + " | failed: " + failures; }
};

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

fs::path scratch(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("urscheck_accept_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "urscheck");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

Sample repeat(std::initializer_list<std::pair<Model, int>> parts) {
  Sample s;
  for (const auto& [m, k] : parts)
    for (int i = 0; i < k; ++i) s.push_back(m);
  return s;
}

Model bits(std::initializer_list<bool> values) {
  Model m(static_cast<std::uint32_t>(values.size()));
  std::uint32_t v = 1;
  for (bool b : values) m.set(v++, b);
  return m;
}

std::vector<CnfFormula> recipe(std::uint32_t clauses, std::size_t count, std::uint64_t seed) {
  GeneratorConfig g;
  g.num_vars = 30;
  g.num_clauses = clauses;
  g.clause_width = 3;
  g.count = count;
  g.seed = seed;
  g.require_satisfiable = true;
  g.dataset = "r30c" + std::to_string(clauses);
  return gen_random_kcnf(g);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Smallest k with P(X <= k) >= q for X ~ Binomial(n, p).
std::size_t binomial_quantile(std::size_t n, double p, double q) {
  double cdf = 0;
  for (std::size_t k = 0; k <= n; ++k) {
    const double log_pmf = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                           k * std::log(p) + (n - k) * std::log1p(-p);
    cdf += std::exp(log_pmf);
    if (cdf >= q) return k;
  }
  return n;
}

// 1. Counting against a 2^n brute force.
void counting_correctness(Outcome& o) {
  std::mt19937_64 rng(20240601);
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto n = static_cast<std::uint32_t>(3 + rng() % 16);
    const auto f = oracle::random_3cnf(rng, n, static_cast<std::uint32_t>(rng() % (5 * n + 1)));
    const auto b = oracle::brute_force(f);
    const auto spec = count_spectrum(f);
    const auto marg = marginals(f);
    bool ok = spec.total == b.total && marg.total == b.total;
    for (std::uint32_t k = 0; k <= n && ok; ++k) ok = spec.counts[k] == b.spectrum[k];
    for (std::uint32_t v = 1; v <= n && ok; ++v) ok = marg.true_count(v) == b.true_counts[v - 1];
    const auto models = enumerate_models(f, BigCount(1) << 20);
    ok = ok && models.size() == b.models.size();
    for (std::size_t j = 0; j < models.size() && ok; ++j) ok = models[j] == oracle::to_model(b.models[j], n);
    mismatches += !ok;
  }
  o.check(mismatches == 0, std::to_string(mismatches) + " formulae disagree");
  o.detail << "1000 formulae, 3..18 variables";
}

// 2. Chi-square and Poisson tails.
void special_functions(Outcome& o) {
  double worst_chi = 0;
  for (int i = 0; i <= 8000; ++i) {
    const double x = i * 0.01;
    worst_chi = std::max(worst_chi, std::abs(chi_square_sf(x, 2).value() - std::exp(-x / 2)));
  }
  double worst_poisson = 0;
  for (int l = 1; l <= 100; ++l) {
    const double lambda = l * 0.5;
    for (int r = 0; r <= 100; ++r)
      worst_poisson =
          std::max(worst_poisson, std::abs(poisson_cdf(r, lambda).value() - chi_square_sf(2 * lambda, 2.0 * r + 2).value()));
  }
  o.check(worst_chi <= 1e-10, "chi-square dof 2 error " + std::to_string(worst_chi));
  o.check(worst_poisson <= 1e-10, "gamma identity error " + std::to_string(worst_poisson));
  o.detail << "max |err| dof-2 " << worst_chi << ", Poisson/gamma " << worst_poisson;
}

// 3. HMP identities and the family-wise alpha.
void hmp_identities(Outcome& o) {
  double worst_equal = 0;
  for (double p : {1e-300, 1e-12, 1e-3, 0.01, 0.2, 0.5, 0.999, 1.0})
    for (std::size_t n : {1, 2, 7, 100, 10000}) {
      const std::vector<double> ps(n, p);
      worst_equal = std::max(worst_equal, rel_err(hmp_combine(ps).value(), p));
    }
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> log_p(std::log(1e-8), 0.0);
  double worst_nested = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 2 + rng() % 100;
    std::vector<WeightedPValue> flat;
    for (std::size_t i = 0; i < n; ++i) flat.push_back({std::exp(log_p(rng)), 1.0 / static_cast<double>(n)});
    const std::size_t groups = 1 + rng() % n;
    std::vector<std::vector<WeightedPValue>> parts(groups);
    for (std::size_t i = 0; i < n; ++i) parts[i < groups ? i : rng() % groups].push_back(flat[i]);
    std::vector<WeightedPValue> outer;
    for (const auto& g : parts) {
      double w = 0;
      for (const auto& x : g) w += x.weight;
      outer.push_back({hmp_combine(g).value(), w});
    }
    worst_nested = std::max(worst_nested, rel_err(hmp_combine(outer).value(), hmp_combine(flat).value()));
  }
  const double family = fwer_alpha(0.01, 20).family;
  o.check(worst_equal <= 1e-14, "HMP of equal values off by " + std::to_string(worst_equal));
  o.check(worst_nested <= 1e-12, "nested HMP relative error " + std::to_string(worst_nested));
  o.check(std::abs(family - 0.18) <= 0.005, "FWER(0.01, 20) = " + std::to_string(family));
  o.detail << "equal-value rel err " << worst_equal << ", nested rel err " << worst_nested << ", FWER(0.01, 20) = " << family;
}

// 4. Type-I error of the exact-uniform sampler.
void type_one_calibration(Outcome& o) {
  constexpr int kCampaigns = 20;
  constexpr double kAlpha = 0.01;
  std::map<TestId, int> consistent;
  std::map<TestId, std::size_t> units, rejections;
  int strict_consistent = 0;
  std::size_t strict_units = 0, strict_rejections = 0;
  for (int c = 0; c < kCampaigns; ++c) {
    const auto dataset = recipe(90, 100, derive_seed(4000, static_cast<std::uint64_t>(c)));
    CampaignConfig cfg;
    cfg.alpha = kAlpha;
    cfg.seed = 1000 + static_cast<std::uint64_t>(c);
    cfg.parallelism = workers();
    cfg.dataset_id = "r30c90";
    cfg.sfpc_policy = BinPolicy::MergeTails;
    Campaign campaign(cfg);
    for (const auto& r : campaign.run_pipeline(SamplerSpec::builtin_uniform(), dataset)) {
      consistent[r.test] += r.verdict == CombinedVerdict::Consistent;
      units[r.test] += r.pvalues.size();
      for (double p : r.pvalues) rejections[r.test] += p <= kAlpha;
    }
    // Strict SFpC bins are reported but do not decide the criterion.
    cfg.sfpc_policy = BinPolicy::Strict;
    cfg.tests = {TestId::Sfpc};
    Campaign strict(cfg);
    const auto s = strict.run_pipeline(SamplerSpec::builtin_uniform(), dataset).front();
    strict_consistent += s.verdict == CombinedVerdict::Consistent;
    strict_units += s.pvalues.size();
    for (double p : s.pvalues) strict_rejections += p <= kAlpha;
  }
  for (TestId t : kAllTests) {
    const std::size_t n = units[t];
    const std::size_t lo = binomial_quantile(n, kAlpha, 0.005);
    const std::size_t hi = binomial_quantile(n, kAlpha, 0.995);
    const std::string name(to_string(t));
    o.check(consistent[t] * 100 >= 95 * kCampaigns,
            name + " consistent in " + std::to_string(consistent[t]) + "/" + std::to_string(kCampaigns));
    o.check(n >= 2000, name + " has only " + std::to_string(n) + " units");
    o.check(rejections[t] >= lo && rejections[t] <= hi, name + " unit rejections " + std::to_string(rejections[t]) +
                                                            " outside [" + std::to_string(lo) + ", " +
                                                            std::to_string(hi) + "]");
    o.detail << name << ": consistent " << consistent[t] << "/" << kCampaigns << ", unit rejections " << rejections[t]
             << "/" << n << " (band " << lo << ".." << hi << "); ";
  }
  o.detail << "strict sfpc, informational: consistent " << strict_consistent << "/" << kCampaigns << ", unit rejections " << strict_rejections
           << "/" << strict_units;
}

// 5. Power against the biased samplers.
void power(Outcome& o) {
  constexpr int kCampaigns = 20;
  int skew = 0, dup = 0, firstfall = 0, reference_ok = 0, separated = 0;
  double min_ratio = INFINITY;
  std::size_t gof_formulae = 0;
  for (int c = 0; c < kCampaigns; ++c) {
    const auto seed = static_cast<std::uint64_t>(c);
    const auto dataset = recipe(90, 20, derive_seed(5000, seed));
    CampaignConfig cfg;
    cfg.seed = 2000 + seed;
    cfg.parallelism = workers();
    cfg.dataset_id = "r30c90";

    cfg.tests = {TestId::Vf};
    Campaign skew_run(cfg);
    skew += skew_run.run_pipeline(SamplerSpec::builtin_biased(BiasVariant::Skew, 0.5), dataset).front().verdict ==
            CombinedVerdict::Rejected;

    cfg.tests = {TestId::Birthday};
    Campaign dup_run(cfg);
    const auto d = dup_run.run_pipeline(SamplerSpec::builtin_biased(BiasVariant::Duplicator, 9), dataset).front();
    dup += d.verdict == CombinedVerdict::Rejected;
    Campaign reference_run(cfg);
    const auto u = reference_run.run_pipeline(SamplerSpec::builtin_uniform(), dataset).front();
    const double u_mean = u.extras.at("mean_repeats").get<double>();
    const double u_lambda = u.extras.at("mean_lambda").get<double>();
    reference_ok += std::abs(u_mean - u_lambda) <= 0.2 * u_lambda;
    const double ratio = d.extras.at("mean_repeats").get<double>() / std::max(u_mean, 1.0);
    min_ratio = std::min(min_ratio, ratio);
    separated += ratio >= 10;

    // Formulae with at most 200 models keep GOF's 5 |R_F| samples small.
    std::vector<CnfFormula> small;
    for (const auto& f : recipe(114, 80, derive_seed(5100, seed))) {
      const auto total = count_models(f);
      if (total >= 2 && total <= 200) small.push_back(f);
      if (small.size() == 10) break;
    }
    gof_formulae += small.size();
    cfg.tests = {TestId::Gof};
    cfg.dataset_id = "r30c114";
    Campaign ff_run(cfg);
    firstfall += !small.empty() &&
                 ff_run.run_pipeline(SamplerSpec::builtin_biased(BiasVariant::Firstfall, 0), small).front().verdict ==
                     CombinedVerdict::Rejected;
  }
  // At least 99% of 20 campaigns means all of them.
  const auto need = [&](int k) { return k * 100 >= 99 * kCampaigns; };
  const auto of = [&](int k) { return std::to_string(k) + "/" + std::to_string(kCampaigns); };
  o.check(need(skew), "skew/VF rejected " + of(skew));
  o.check(need(dup), "duplicator/birthday rejected " + of(dup));
  o.check(need(reference_ok), "uniform mean repeats within 20% of lambda " + of(reference_ok));
  o.check(need(separated), "duplicator repeats >= 10x uniform " + of(separated));
  o.check(need(firstfall), "firstfall/GOF rejected " + of(firstfall));
  o.detail << "skew " << of(skew) << ", duplicator " << of(dup) << " (min repeat ratio " << min_ratio
           << ", reference ok " << of(reference_ok) << "), firstfall " << of(firstfall) << " on " << gof_formulae
           << " formulae";
}

// 6. Worked statistics from fixture samples.
void worked_statistics(Outcome& o) {
  const CnfFormula f(2, {{1, 2}});
  const auto spec = count_spectrum(f);
  const double expected_p = chi_square_sf(13.5, 1).value();
  const auto mono = monobit_test(spec, repeat({{bits({true, true}), 130}, {bits({false, true}), 170}}), 0.01);
  const auto vf = vf_test(marginals(f),
                          repeat({{bits({true, false}), 100}, {bits({true, true}), 130}, {bits({false, true}), 70}}), 0.01);
  const auto sfpc = sfpc_test(spec, repeat({{bits({true, false}), 230}, {bits({true, true}), 70}}), 0.01);
  o.check(mono.statistic == 13.5 && *mono.p_value == expected_p, "monobit");
  o.check(vf.statistic == 13.5 && vf.extras.at("variable_p_values")[0].get<double>() == expected_p, "vf");
  o.check(sfpc.statistic == 13.5 && *sfpc.p_value == expected_p, "sfpc");
  o.check(std::abs(expected_p - 2.39e-4) < 5e-7, "p(13.5, 1) = " + std::to_string(expected_p));

  const auto models = enumerate_models(f);
  const auto gof = gof_test(models, repeat({{models[0], 10}, {models[1], 5}}), 0.01);
  o.check(gof.statistic == 10 && gof.dof_or_lambda == 2, "gof statistic");
  o.check(rel_err(*gof.p_value, std::exp(-5.0)) < 1e-12, "gof p-value");
  o.detail << "chi2 13.5 -> p " << expected_p << "; chi2 10, dof 2 -> p " << *gof.p_value;
}

// 7. Birthday arithmetic.
void birthday_arithmetic(Outcome& o) {
  Sample s;
  for (std::uint32_t i = 0; i < 990; ++i) {
    Model m(16);
    for (std::uint32_t v = 1; v <= 16; ++v) m.set(v, i >> (v - 1) & 1u);
    s.push_back(m);
    if (i < 10) s.push_back(m);
  }
  const auto r = birthday_test(BigCount(49950), s, 0.01);
  o.check(binomial(1000, 2) == 499500, "C(1000, 2)");
  o.check(r.dof_or_lambda == 10.0, "lambda " + std::to_string(r.dof_or_lambda));
  o.check(r.statistic == 10 && *r.p_value == 1.0, "r = 10 not clamped to p = 1");
  const auto a = bits({true, false}), b = bits({false, true});
  o.check(count_repeats(repeat({{a, 3}})) == 3, "[a,a,a]");
  o.check(count_repeats(repeat({{a, 2}, {b, 3}})) == 4, "[a,a,b,b,b]");
  o.detail << "lambda " << r.dof_or_lambda << ", p(r = 10) " << *r.p_value;
}

// 8. Batching, timeouts and resume with stub samplers.
void protocol_fidelity(Outcome& o) {
  const CnfFormula tiny(3, {{1, 3}});
  auto batch = SamplerSpec::external("cat {cnf} >/dev/null; yes '1 -2 3 0' | head -n {n}", OutputFormat::Literals);
  batch.batch_size = 1000;
  ExternalRunStats stats;
  const auto s = run_external(batch, tiny, 2500, &stats);
  o.check(s.size() == 2500 && stats.invocations == 3, std::to_string(stats.invocations) + " invocations");

  GeneratorConfig g;
  g.num_vars = 12;
  g.num_clauses = 30;
  g.clause_width = 3;
  g.count = 4;
  g.seed = 13;
  g.require_satisfiable = true;
  g.dataset = "small";
  const auto dataset = gen_random_kcnf(g);

  const auto dir = scratch("protocol");
  CampaignConfig cfg;
  cfg.dataset_id = "small";
  cfg.seed = 17;
  cfg.sample_floor = 300;
  cfg.result_dir = (dir / "timeout").string();
  cfg.tests = {TestId::Birthday};
  cfg.unit_budget = std::chrono::milliseconds(1500);
  const std::string cmd = "case {cnf} in *_1.cnf) sleep 10;; esac; " + std::string(URSCHECK_BIN) +
                          " sample {cnf} -n {n} --seed 5";
  const auto hanging = SamplerSpec::external(cmd, OutputFormat::Literals);
  Campaign timed(cfg);
  const auto t = timed.run_pipeline(hanging, dataset).front();
  const auto unit = unit_record_from_json(
      nlohmann::json::parse(slurp(timed.unit_path(hanging.id(), TestId::Birthday, dataset[1].name()))));
  o.check(t.attempted == 4 && t.completed == 3 && t.pvalues.size() == 3, "timed-out unit counted in #F");
  o.check(unit.result.skipped(), "timed-out unit not skipped");

  cfg.result_dir = (dir / "resume").string();
  cfg.tests = {TestId::Monobit, TestId::Vf, TestId::Birthday, TestId::Sfpc, TestId::Gof};
  cfg.unit_budget = std::chrono::hours(1);
  const auto uniform = SamplerSpec::builtin_uniform();
  Campaign first(cfg);
  const auto full = first.run_pipeline(uniform, dataset);
  fs::remove(first.unit_path(uniform.id(), TestId::Vf, dataset[1].name()));
  fs::remove(first.unit_path(uniform.id(), TestId::Gof, dataset[3].name()));
  std::ofstream(first.unit_path(uniform.id(), TestId::Sfpc, dataset[2].name())) << "{ truncated";
  Campaign second(cfg);
  const auto resumed = second.run_pipeline(uniform, dataset);
  bool same = full.size() == resumed.size();
  for (std::size_t i = 0; same && i < full.size(); ++i)
    same = full[i].pvalues == resumed[i].pvalues && full[i].hmp == resumed[i].hmp &&
           full[i].verdict == resumed[i].verdict && full[i].completed == resumed[i].completed;
  o.check(same, "resumed results differ");
  o.check(second.units_computed() == 3, "resume recomputed " + std::to_string(second.units_computed()) + " units");
  fs::remove_all(dir);
  o.detail << stats.invocations << " invocations for 2500 samples, #F " << t.completed << "/" << t.attempted
           << " with one timeout, " << second.units_reused() << " units reused on resume";
}

// 9. Dataset recipes through the command line.
void dataset_recipes(Outcome& o) {
  const auto dir = scratch("recipes");
  for (int clauses : {90, 114}) {
    const std::string name = "r30c" + std::to_string(clauses);
    for (const char* copy : {"a", "b"})
      o.check(cli({"generate", "--vars", "30", "--clauses", std::to_string(clauses), "--width", "3", "--count", "300",
                   "--satisfiable", "--seed", "42", "--name", name, "--out", (dir / (name + copy)).string()}) == 0,
              name + " generate failed");
    const auto formulas = load_dataset((dir / (name + "a")).string());
    std::size_t bad = 0, differ = 0;
    for (const auto& f : formulas) {
      bad += f.num_vars() != 30 || f.num_clauses() != static_cast<std::size_t>(clauses) || count_models(f) == 0;
      const auto file = f.name() + ".cnf";
      differ += slurp(dir / (name + "a") / file) != slurp(dir / (name + "b") / file);
    }
    o.check(formulas.size() == 300, name + " produced " + std::to_string(formulas.size()) + " formulae");
    o.check(bad == 0, name + " has " + std::to_string(bad) + " malformed or unsatisfiable formulae");
    o.check(differ == 0, name + " not deterministic in " + std::to_string(differ) + " files");
  }

  const auto planted_dir = dir / "planted";
  o.check(cli({"generate", "--vars", "30", "--clauses", "150", "--count", "50", "--planted", "20", "--seed", "8",
               "--out", planted_dir.string()}) == 0,
          "planted generate failed");
  const auto manifest = nlohmann::json::parse(slurp(planted_dir / "manifest.json"));
  std::vector<Model> planted;
  for (const auto& b : manifest.at("generator").at("planted")) {
    const auto text = b.get<std::string>();
    Model m(static_cast<std::uint32_t>(text.size()));
    for (std::uint32_t v = 1; v <= text.size(); ++v) m.set(v, text[v - 1] == '1');
    planted.push_back(m);
  }
  std::size_t violations = 0;
  const auto formulas = load_dataset(planted_dir.string());
  for (const auto& f : formulas)
    for (const auto& m : planted) violations += !satisfies(f, m);
  o.check(planted.size() == 20 && formulas.size() == 50, "planted dataset shape");
  o.check(violations == 0, std::to_string(violations) + " planted assignments violated");
  fs::remove_all(dir);
  o.detail << "2 x 300 formulae reproduced; 20 planted assignments satisfy all 50 formulae";
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"counting correctness", counting_correctness},
      {"special-function accuracy", special_functions},
      {"HMP identities", hmp_identities},
      {"type-I calibration", type_one_calibration},
      {"power", power},
      {"worked test statistics", worked_statistics},
      {"birthday arithmetic", birthday_arithmetic},
      {"protocol fidelity", protocol_fidelity},
      {"dataset recipes", dataset_recipes},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    all &= o.pass;
    std::printf("criterion %d %s: %s (%.1f s) %s\n", number, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL", secs,
                o.text().c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
