#include "urscheck/suite.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace urscheck {

std::string_view to_string(TestId id) {
  switch (id) {
    case TestId::Monobit: return "monobit";
    case TestId::Vf: return "vf";
    case TestId::Birthday: return "birthday";
    case TestId::Sfpc: return "sfpc";
    case TestId::Gof: return "gof";
  }
  return "?";
}

std::string_view display_name(TestId id) {
  switch (id) {
    case TestId::Monobit: return "Monobit";
    case TestId::Vf: return "VF";
    case TestId::Birthday: return "Birthday";
    case TestId::Sfpc: return "SFpC";
    case TestId::Gof: return "GOF";
  }
  return "?";
}

TestId parse_test_id(std::string_view name) {
  for (auto id : kAllTests)
    if (to_string(id) == name) return id;
  throw std::invalid_argument("unknown test '" + std::string(name) + "'");
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Consistent: return "consistent";
    case Verdict::Rejected: return "rejected";
    case Verdict::Skipped: return "skipped";
  }
  return "?";
}

Verdict parse_verdict(std::string_view name) {
  for (auto v : {Verdict::Consistent, Verdict::Rejected, Verdict::Skipped})
    if (to_string(v) == name) return v;
  throw std::invalid_argument("unknown verdict '" + std::string(name) + "'");
}

std::string_view to_string(BinPolicy p) { return p == BinPolicy::Strict ? "strict" : "merge_tails"; }

BinPolicy parse_bin_policy(std::string_view name) {
  if (name == "strict") return BinPolicy::Strict;
  if (name == "merge_tails") return BinPolicy::MergeTails;
  throw std::invalid_argument("unknown bin policy '" + std::string(name) + "'");
}

TestResult TestResult::skip(TestId test, std::string reason, std::uint64_t n_samples) {
  TestResult r;
  r.test = test;
  r.n_samples = n_samples;
  r.verdict = Verdict::Skipped;
  r.reason = std::move(reason);
  return r;
}

nlohmann::json to_json(const TestResult& r) {
  nlohmann::json j;
  j["test"] = to_string(r.test);
  j["formula"] = r.formula_id;
  j["n_samples"] = r.n_samples;
  j["verdict"] = to_string(r.verdict);
  if (r.skipped()) {
    j["reason"] = r.reason;
  } else {
    j["statistic"] = r.statistic;
    j["dof_or_lambda"] = r.dof_or_lambda;
    j["p_value"] = *r.p_value;
  }
  j["extras"] = r.extras;
  return j;
}

TestResult test_result_from_json(const nlohmann::json& j) {
  TestResult r;
  r.test = parse_test_id(j.at("test").get<std::string>());
  r.formula_id = j.at("formula").get<std::string>();
  r.n_samples = j.at("n_samples").get<std::uint64_t>();
  r.verdict = parse_verdict(j.at("verdict").get<std::string>());
  if (r.skipped()) {
    r.reason = j.value("reason", "");
  } else {
    r.statistic = j.at("statistic").get<double>();
    r.dof_or_lambda = j.at("dof_or_lambda").get<double>();
    r.p_value = j.at("p_value").get<double>();
  }
  r.extras = j.value("extras", nlohmann::json::object());
  return r;
}

namespace {

TestResult decide(TestId test, std::uint64_t n, double statistic, double dof, PValue p, double alpha) {
  TestResult r;
  r.test = test;
  r.n_samples = n;
  r.statistic = statistic;
  r.dof_or_lambda = dof;
  r.p_value = p.value();
  r.verdict = p.value() <= alpha ? Verdict::Rejected : Verdict::Consistent;
  return r;
}

double expected(std::uint64_t n, const BigCount& part, const BigCount& total) {
  return static_cast<double>(n) * ratio(part, total);
}

double pearson_term(double observed, double expected) {
  const double d = observed - expected;
  return d * d / expected;
}

}  // namespace

std::uint64_t count_repeats(const Sample& s) {
  std::uint64_t r = 0;
  for (const auto& [model, mult] : s.multiplicities()) r += mult * (mult - 1) / 2;
  return r;
}

TestResult birthday_test(const BigCount& total, const Sample& s, double alpha) {
  if (total <= 0) throw std::invalid_argument("birthday test needs a satisfiable formula");
  const std::uint64_t n = s.size();
  if (n < 2) return TestResult::skip(TestId::Birthday, "fewer than two samples", n);
  // lambda = C(N, 2) / |R_F| as an exact rational, then rounded once.
  mpq_class lambda_q(BigCount(n) * (n - 1) / 2, total);
  lambda_q.canonicalize();
  const double lambda = lambda_q.get_d();
  const std::uint64_t r = count_repeats(s);
  const auto ri = static_cast<std::int64_t>(r);
  const double upper = poisson_upper_tail(ri, lambda);  // P(R >= r) = 1 - F(r - 1)
  const double lower = poisson_cdf(ri, lambda);         // P(R <= r) = F(r)
  const double p = std::min(1.0, 2.0 * std::min(upper, lower));
  auto result = decide(TestId::Birthday, n, static_cast<double>(r), lambda, PValue::floored(p), alpha);
  result.extras["repeats"] = r;
  result.extras["lambda"] = lambda;
  result.extras["distinct"] = s.multiplicities().size();
  return result;
}

TestResult monobit_test(const SolutionSpectrum& spectrum, const Sample& s, double alpha, double min_expected) {
  const std::uint64_t n = s.size();
  if (n == 0) return TestResult::skip(TestId::Monobit, "empty sample");
  if (spectrum.total == 0) return TestResult::skip(TestId::Monobit, "unsatisfiable formula", n);
  if (spectrum.c_even == 0 || spectrum.c_uneven == 0)
    return TestResult::skip(TestId::Monobit, "degenerate parity", n);
  const double e_even = expected(n, spectrum.c_even, spectrum.total);
  const double e_uneven = static_cast<double>(n) - e_even;
  if (std::min(e_even, e_uneven) < min_expected)
    return TestResult::skip(TestId::Monobit, "expected count below minimum", n);

  std::uint64_t even = 0;
  for (const auto& m : s.models())
    if (m.even_weight()) ++even;
  const double o_even = static_cast<double>(even);
  const double o_uneven = static_cast<double>(n - even);
  const double chi2 = pearson_term(o_even, e_even) + pearson_term(o_uneven, e_uneven);
  auto result = decide(TestId::Monobit, n, chi2, 1.0, chi_square_sf(chi2, 1.0), alpha);
  result.extras["observed_even"] = even;
  result.extras["expected_even"] = e_even;
  return result;
}

TestResult vf_test(const MarginalTable& marginals, const Sample& s, double alpha, double min_expected) {
  const std::uint64_t n = s.size();
  if (n == 0) return TestResult::skip(TestId::Vf, "empty sample");
  if (marginals.total == 0) return TestResult::skip(TestId::Vf, "unsatisfiable formula", n);

  const auto num_vars = marginals.num_vars();
  std::vector<std::uint64_t> observed_true(num_vars + 1, 0);
  for (const auto& m : s.models())
    for (std::uint32_t v = 1; v <= num_vars; ++v)
      if (m.value(v)) ++observed_true[v];

  std::vector<std::uint32_t> included;
  std::vector<std::uint32_t> low_expected;
  std::vector<double> pvalues;
  std::vector<double> statistics;
  for (std::uint32_t v = 1; v <= num_vars; ++v) {
    if (marginals.is_constant(v)) continue;
    const double e_true = expected(n, marginals.true_count(v), marginals.total);
    const double e_false = static_cast<double>(n) - e_true;
    if (std::min(e_true, e_false) < min_expected) {
      low_expected.push_back(v);
      continue;
    }
    const double o_true = static_cast<double>(observed_true[v]);
    const double chi2 = pearson_term(o_true, e_true) + pearson_term(static_cast<double>(n) - o_true, e_false);
    included.push_back(v);
    statistics.push_back(chi2);
    pvalues.push_back(chi_square_sf(chi2, 1.0));
  }
  if (included.empty()) {
    auto r = TestResult::skip(TestId::Vf, "no variable qualifies", n);
    r.extras["excluded_constant"] = marginals.constant_vars;
    r.extras["excluded_low_expected"] = low_expected;
    return r;
  }
  const PValue p = hmp_combine(std::span<const double>(pvalues));
  const double max_chi2 = *std::max_element(statistics.begin(), statistics.end());
  auto result = decide(TestId::Vf, n, max_chi2, 1.0, p, alpha);
  result.extras["included"] = included;
  result.extras["variable_p_values"] = pvalues;
  result.extras["excluded_constant"] = marginals.constant_vars;
  result.extras["excluded_low_expected"] = low_expected;
  return result;
}

namespace {

struct Bin {
  std::uint32_t first_k;
  std::uint32_t last_k;
  double expected;
  double observed;
};

// Pools adjacent bins from both tails toward the largest bin until every
// pooled bin reaches `min_expected`.
std::vector<Bin> merge_tails(const std::vector<Bin>& bins, double min_expected) {
  if (bins.empty()) return {};
  const auto peak = static_cast<std::size_t>(
      std::max_element(bins.begin(), bins.end(), [](const Bin& a, const Bin& b) { return a.expected < b.expected; }) -
      bins.begin());
  auto absorb = [](Bin& into, const Bin& from) {
    into.first_k = std::min(into.first_k, from.first_k);
    into.last_k = std::max(into.last_k, from.last_k);
    into.expected += from.expected;
    into.observed += from.observed;
  };

  std::vector<Bin> left;
  std::optional<Bin> open;
  for (std::size_t i = 0; i < peak; ++i) {
    if (open)
      absorb(*open, bins[i]);
    else
      open = bins[i];
    if (open->expected >= min_expected) {
      left.push_back(*open);
      open.reset();
    }
  }
  Bin middle = bins[peak];
  if (open) absorb(middle, *open);
  open.reset();

  std::vector<Bin> right;
  for (std::size_t i = bins.size(); i-- > peak + 1;) {
    if (open)
      absorb(*open, bins[i]);
    else
      open = bins[i];
    if (open->expected >= min_expected) {
      right.push_back(*open);
      open.reset();
    }
  }
  if (open) absorb(middle, *open);

  // The peak may still be short if the whole spectrum is; fold it outward.
  std::vector<Bin> out = left;
  out.push_back(middle);
  out.insert(out.end(), right.rbegin(), right.rend());
  while (out.size() > 1) {
    auto low = std::find_if(out.begin(), out.end(), [&](const Bin& b) { return b.expected < min_expected; });
    if (low == out.end()) break;
    auto neighbour = low == out.begin() ? low + 1 : low - 1;
    if (low + 1 != out.end() && low != out.begin() && (low + 1)->expected < neighbour->expected) neighbour = low + 1;
    absorb(*neighbour, *low);
    out.erase(low);
  }
  return out;
}

}  // namespace

TestResult sfpc_test(const SolutionSpectrum& spectrum, const Sample& s, double alpha, BinPolicy policy,
                     double min_expected) {
  const std::uint64_t n = s.size();
  if (n == 0) return TestResult::skip(TestId::Sfpc, "empty sample");
  if (spectrum.total == 0) return TestResult::skip(TestId::Sfpc, "unsatisfiable formula", n);

  std::vector<std::uint64_t> observed(spectrum.counts.size(), 0);
  for (const auto& m : s.models()) {
    const auto k = m.weight();
    if (k >= observed.size()) throw std::invalid_argument("sample model longer than the spectrum");
    ++observed[k];
  }

  std::vector<Bin> bins;
  for (std::uint32_t k = 0; k < spectrum.counts.size(); ++k) {
    if (spectrum.counts[k] == 0) {
      if (observed[k] != 0) throw std::invalid_argument("sample contains a model outside the spectrum");
      continue;
    }
    bins.push_back({k, k, expected(n, spectrum.counts[k], spectrum.total), static_cast<double>(observed[k])});
  }
  if (bins.size() < 2) return TestResult::skip(TestId::Sfpc, "degenerate spectrum", n);

  std::size_t low_bins = 0;
  if (policy == BinPolicy::MergeTails) {
    bins = merge_tails(bins, min_expected);
    if (bins.size() < 2) return TestResult::skip(TestId::Sfpc, "degenerate spectrum after merging", n);
  } else {
    low_bins = static_cast<std::size_t>(
        std::count_if(bins.begin(), bins.end(), [&](const Bin& b) { return b.expected < min_expected; }));
  }

  double chi2 = 0.0;
  for (const auto& b : bins) chi2 += pearson_term(b.observed, b.expected);
  const double dof = static_cast<double>(bins.size() - 1);
  auto result = decide(TestId::Sfpc, n, chi2, dof, chi_square_sf(chi2, dof), alpha);
  result.extras["bin_policy"] = to_string(policy);
  result.extras["bins"] = bins.size();
  if (low_bins > 0) result.extras["warning"] = std::to_string(low_bins) + " bin(s) with expected count below 5";
  return result;
}

TestResult gof_test(const std::vector<Model>& models, const Sample& s, double alpha) {
  const std::uint64_t n = s.size();
  const std::uint64_t cells = models.size();
  if (cells == 0) return TestResult::skip(TestId::Gof, "unsatisfiable formula", n);
  if (cells < 2) return TestResult::skip(TestId::Gof, "single model", n);
  if (n < 5 * cells) return TestResult::skip(TestId::Gof, "sample smaller than five times the model count", n);

  std::unordered_map<Model, std::uint64_t, ModelHash> id;
  id.reserve(cells);
  for (std::uint64_t i = 0; i < cells; ++i) id.emplace(models[i], i);
  std::vector<std::uint64_t> observed(cells, 0);
  for (const auto& m : s.models()) {
    auto it = id.find(m);
    if (it == id.end()) throw std::invalid_argument("sample contains a non-model");
    ++observed[it->second];
  }
  const double e = static_cast<double>(n) / static_cast<double>(cells);
  double chi2 = 0.0;
  for (auto o : observed) chi2 += pearson_term(static_cast<double>(o), e);
  const double dof = static_cast<double>(cells - 1);
  auto result = decide(TestId::Gof, n, chi2, dof, chi_square_sf(chi2, dof), alpha);
  result.extras["cells"] = cells;
  result.extras["unseen_cells"] = std::count(observed.begin(), observed.end(), 0);
  return result;
}

}  // namespace urscheck
