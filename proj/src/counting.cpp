#include "urscheck/counting.hpp"

#include <algorithm>
#include <unordered_map>

namespace urscheck {

SolutionSpectrum SolutionSpectrum::from_counts(std::vector<BigCount> counts) {
  SolutionSpectrum s;
  s.counts = std::move(counts);
  s.total = 0;
  s.c_even = 0;
  for (std::size_t k = 0; k < s.counts.size(); ++k) {
    s.total += s.counts[k];
    if (k % 2 == 0) s.c_even += s.counts[k];
  }
  s.c_uneven = s.total - s.c_even;
  return s;
}

MarginalTable MarginalTable::from_counts(std::vector<BigCount> true_counts, BigCount total) {
  MarginalTable m;
  m.true_counts = std::move(true_counts);
  m.total = std::move(total);
  for (std::uint32_t v = 1; v <= m.num_vars(); ++v)
    if (m.is_constant(v)) m.constant_vars.push_back(v);
  return m;
}

bool MarginalTable::is_constant(std::uint32_t var) const {
  const auto& t = true_counts[var - 1];
  return t == 0 || t == total;
}

BigCount binomial(std::uint64_t n, std::uint64_t k) {
  BigCount out;
  mpz_bin_uiui(out.get_mpz_t(), n, k);
  return out;
}

double ratio(const BigCount& a, const BigCount& b) {
  if (b == 0) return 0.0;
  mpq_class q(a, b);
  q.canonicalize();
  return q.get_d();
}

struct ModelCounter::Engine {
  // Literal index: 2*(v-1) for +v, 2*(v-1)+1 for -v.
  static std::size_t index(Literal lit) { return 2 * (var_of(lit) - 1) + (lit < 0 ? 1 : 0); }

  const std::uint32_t num_vars;
  std::vector<Clause> clauses;
  std::vector<std::vector<std::uint32_t>> occurrences;
  CountingLimits limits;

  std::vector<std::int8_t> value;  // -1 unassigned, 0 false, 1 true
  std::vector<std::uint32_t> n_true;
  std::vector<std::uint32_t> n_false;
  std::vector<Literal> trail;
  std::vector<std::uint32_t> pending_units;
  std::size_t satisfied = 0;
  std::uint32_t ones = 0;
  bool conflict = false;

  std::uint64_t decisions = 0;
  std::vector<std::uint32_t> scores;
  std::unordered_map<std::uint32_t, std::vector<BigCount>> binomial_rows;

  Engine(const CnfFormula& f, CountingLimits lim)
      : num_vars(f.num_vars()),
        clauses(f.clauses()),
        occurrences(2 * static_cast<std::size_t>(f.num_vars())),
        limits(lim),
        value(f.num_vars() + 1, -1),
        n_true(f.clauses().size(), 0),
        n_false(f.clauses().size(), 0),
        scores(f.num_vars() + 1, 0) {
    for (std::uint32_t c = 0; c < clauses.size(); ++c)
      for (Literal lit : clauses[c]) occurrences[index(lit)].push_back(c);
  }

  bool all_satisfied() const { return satisfied == clauses.size(); }
  std::uint32_t free_vars() const { return num_vars - static_cast<std::uint32_t>(trail.size()); }

  void assign(Literal lit) {
    const auto v = var_of(lit);
    value[v] = lit > 0 ? 1 : 0;
    if (lit > 0) ++ones;
    trail.push_back(lit);
    for (auto c : occurrences[index(lit)])
      if (n_true[c]++ == 0) ++satisfied;
    for (auto c : occurrences[index(-lit)]) {
      ++n_false[c];
      if (n_true[c] != 0) continue;
      const auto size = clauses[c].size();
      if (n_false[c] == size)
        conflict = true;
      else if (n_false[c] + 1 == size)
        pending_units.push_back(c);
    }
  }

  void backtrack(std::size_t mark) {
    while (trail.size() > mark) {
      const Literal lit = trail.back();
      trail.pop_back();
      value[var_of(lit)] = -1;
      if (lit > 0) --ones;
      for (auto c : occurrences[index(lit)])
        if (--n_true[c] == 0) --satisfied;
      for (auto c : occurrences[index(-lit)]) --n_false[c];
    }
    pending_units.clear();
    conflict = false;
  }

  bool literal_true(Literal lit) const { return value[var_of(lit)] == (lit > 0 ? 1 : 0); }

  // Returns false on conflict; the caller backtracks.
  bool propagate() {
    while (!conflict && !pending_units.empty()) {
      const auto c = pending_units.back();
      pending_units.pop_back();
      if (n_true[c] != 0) continue;
      for (Literal lit : clauses[c])
        if (value[var_of(lit)] < 0) {
          assign(lit);
          break;
        }
    }
    pending_units.clear();
    return !conflict;
  }

  bool assume(Literal lit) {
    const auto v = var_of(lit);
    if (v == 0 || v > num_vars) throw std::invalid_argument("literal " + std::to_string(lit) + " out of range");
    if (value[v] >= 0) return literal_true(lit);
    assign(lit);
    return propagate();
  }

  // Starts a top-level call: queues the formula's unit clauses.
  bool start(std::span<const Literal> assumptions) {
    backtrack(0);
    decisions = 0;
    for (std::uint32_t c = 0; c < clauses.size(); ++c)
      if (clauses[c].size() == 1) pending_units.push_back(c);
    if (!propagate()) return false;
    for (Literal lit : assumptions)
      if (!assume(lit)) return false;
    return true;
  }

  void tick() {
    ++decisions;
    if (limits.max_decisions != 0 && decisions > limits.max_decisions) throw CountingBudgetExhausted();
    if (limits.deadline && (decisions & 1023) == 0 && std::chrono::steady_clock::now() > *limits.deadline)
      throw CountingBudgetExhausted();
  }

  // Most occurrences among the shortest unsatisfied clauses.
  std::uint32_t pick_branch_var() {
    std::size_t shortest = SIZE_MAX;
    for (std::uint32_t c = 0; c < clauses.size(); ++c)
      if (n_true[c] == 0) shortest = std::min<std::size_t>(shortest, clauses[c].size() - n_false[c]);
    std::fill(scores.begin(), scores.end(), 0);
    std::uint32_t best = 0;
    for (std::uint32_t c = 0; c < clauses.size(); ++c) {
      if (n_true[c] != 0 || clauses[c].size() - n_false[c] != shortest) continue;
      for (Literal lit : clauses[c]) {
        const auto v = var_of(lit);
        if (value[v] >= 0) continue;
        ++scores[v];
        if (best == 0 || scores[v] > scores[best] || (scores[v] == scores[best] && v < best)) best = v;
      }
    }
    return best;
  }

  std::uint32_t first_unassigned() const {
    for (std::uint32_t v = 1; v <= num_vars; ++v)
      if (value[v] < 0) return v;
    return 0;
  }

  // Visits every node whose clauses are all satisfied. `Leaf` sees the
  // engine state; `index_order` forces lexicographic decisions (false first).
  template <class Leaf>
  void search(Leaf& leaf, bool index_order) {
    tick();
    if (all_satisfied()) {
      leaf();
      return;
    }
    const std::uint32_t v = index_order ? first_unassigned() : pick_branch_var();
    for (bool positive : {false, true}) {
      const auto mark = trail.size();
      assign(positive ? static_cast<Literal>(v) : -static_cast<Literal>(v));
      if (propagate()) search(leaf, index_order);
      backtrack(mark);
    }
  }

  const std::vector<BigCount>& binomial_row(std::uint32_t f) {
    auto it = binomial_rows.find(f);
    if (it != binomial_rows.end()) return it->second;
    std::vector<BigCount> row(f + 1);
    row[0] = 1;
    for (std::uint32_t j = 1; j <= f; ++j) row[j] = row[j - 1] * (f - j + 1) / j;
    return binomial_rows.emplace(f, std::move(row)).first->second;
  }
};

ModelCounter::ModelCounter(const CnfFormula& f, CountingLimits limits)
    : engine_(std::make_unique<Engine>(f, limits)) {}
ModelCounter::~ModelCounter() = default;
ModelCounter::ModelCounter(ModelCounter&&) noexcept = default;
ModelCounter& ModelCounter::operator=(ModelCounter&&) noexcept = default;

std::uint64_t ModelCounter::last_decisions() const { return engine_->decisions; }

BigCount ModelCounter::count(std::span<const Literal> assumptions) {
  auto& e = *engine_;
  BigCount total = 0;
  if (e.start(assumptions)) {
    BigCount block;
    auto leaf = [&] {
      mpz_setbit(block.get_mpz_t(), e.free_vars());
      total += block;
      block = 0;
    };
    e.search(leaf, false);
  }
  e.backtrack(0);
  return total;
}

SpectrumAndMarginals ModelCounter::spectrum_and_marginals() {
  auto& e = *engine_;
  const auto n = e.num_vars;
  std::vector<BigCount> counts(n + 1, 0);
  std::vector<BigCount> true_counts(n, 0);
  BigCount total = 0;
  if (e.start({})) {
    BigCount block;
    BigCount half;
    auto leaf = [&] {
      const auto f = e.free_vars();
      const auto& row = e.binomial_row(f);
      for (std::uint32_t j = 0; j <= f; ++j) counts[e.ones + j] += row[j];
      block = 0;
      mpz_setbit(block.get_mpz_t(), f);
      total += block;
      half = 0;
      if (f > 0) mpz_setbit(half.get_mpz_t(), f - 1);
      for (std::uint32_t v = 1; v <= n; ++v) {
        if (e.value[v] == 1)
          true_counts[v - 1] += block;
        else if (e.value[v] < 0)
          true_counts[v - 1] += half;
      }
    };
    e.search(leaf, false);
  }
  e.backtrack(0);
  return {SolutionSpectrum::from_counts(std::move(counts)),
          MarginalTable::from_counts(std::move(true_counts), std::move(total))};
}

SolutionSpectrum ModelCounter::spectrum() {
  auto& e = *engine_;
  std::vector<BigCount> counts(e.num_vars + 1, 0);
  if (e.start({})) {
    auto leaf = [&] {
      const auto f = e.free_vars();
      const auto& row = e.binomial_row(f);
      for (std::uint32_t j = 0; j <= f; ++j) counts[e.ones + j] += row[j];
    };
    e.search(leaf, false);
  }
  e.backtrack(0);
  return SolutionSpectrum::from_counts(std::move(counts));
}

MarginalTable ModelCounter::marginals() { return spectrum_and_marginals().marginals; }

std::vector<Model> ModelCounter::enumerate(const BigCount& cap) {
  if (count() > cap) throw EnumerationCapExceeded();
  auto& e = *engine_;
  std::vector<Model> models;
  if (e.start({})) {
    std::vector<std::uint32_t> free;
    auto leaf = [&] {
      Model base(e.num_vars);
      free.clear();
      for (std::uint32_t v = 1; v <= e.num_vars; ++v) {
        if (e.value[v] < 0)
          free.push_back(v);
        else
          base.set(v, e.value[v] == 1);
      }
      // The first free variable is the most significant bit.
      const std::uint64_t combos = std::uint64_t{1} << free.size();
      for (std::uint64_t bits = 0; bits < combos; ++bits) {
        Model m = base;
        for (std::size_t i = 0; i < free.size(); ++i) m.set(free[i], (bits >> (free.size() - 1 - i)) & 1u);
        models.push_back(std::move(m));
      }
    };
    e.search(leaf, true);
  }
  e.backtrack(0);
  return models;
}

std::optional<Model> ModelCounter::first_model(const std::vector<bool>& phase) {
  auto& e = *engine_;
  if (phase.size() != e.num_vars) throw std::invalid_argument("phase vector length differs from num_vars");
  std::optional<Model> found;
  if (e.start({})) {
    // Index-order DFS that tries the preferred phase first and stops at the
    // first node with every clause satisfied.
    auto dfs = [&](auto& self) -> bool {
      e.tick();
      if (e.all_satisfied()) {
        Model m(e.num_vars);
        for (std::uint32_t v = 1; v <= e.num_vars; ++v)
          m.set(v, e.value[v] < 0 ? static_cast<bool>(phase[v - 1]) : e.value[v] == 1);
        found = std::move(m);
        return true;
      }
      const auto v = e.first_unassigned();
      const bool preferred = phase[v - 1];
      for (bool positive : {preferred, !preferred}) {
        const auto mark = e.trail.size();
        e.assign(positive ? static_cast<Literal>(v) : -static_cast<Literal>(v));
        const bool done = e.propagate() && self(self);
        e.backtrack(mark);
        if (done) return true;
      }
      return false;
    };
    dfs(dfs);
  }
  e.backtrack(0);
  return found;
}

SolutionSpectrum count_spectrum(const CnfFormula& f, CountingLimits limits) {
  return ModelCounter(f, limits).spectrum();
}

MarginalTable marginals(const CnfFormula& f, CountingLimits limits) { return ModelCounter(f, limits).marginals(); }

BigCount count_models(const CnfFormula& f, CountingLimits limits) { return ModelCounter(f, limits).count(); }

std::vector<Model> enumerate_models(const CnfFormula& f, const BigCount& cap, CountingLimits limits) {
  return ModelCounter(f, limits).enumerate(cap);
}

}  // namespace urscheck
