#include "urscheck/generator.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>

#include "urscheck/counting.hpp"
#include "urscheck/random.hpp"

namespace urscheck {

namespace fs = std::filesystem;

void GeneratorConfig::validate() const {
  if (num_vars < 1) throw std::invalid_argument("at least one variable is required");
  if (clause_width < 1) throw std::invalid_argument("clause width must be at least 1");
  if (clause_width > num_vars)
    throw std::invalid_argument("clause width " + std::to_string(clause_width) + " exceeds variable count " +
                                std::to_string(num_vars));
  if (clause_width > 31) throw std::invalid_argument("clause width above 31 is not supported");
  if (count < 1) throw std::invalid_argument("dataset size must be at least 1");
  for (const auto& m : planted)
    if (m.num_vars() != num_vars) throw std::invalid_argument("planted assignment length differs from num_vars");
}

nlohmann::json to_json(const GeneratorConfig& cfg) {
  nlohmann::json planted = nlohmann::json::array();
  for (const auto& m : cfg.planted) planted.push_back(m.to_bitstring());
  return {{"dataset", cfg.dataset},     {"num_vars", cfg.num_vars},
          {"num_clauses", cfg.num_clauses}, {"clause_width", cfg.clause_width},
          {"require_satisfiable", cfg.require_satisfiable}, {"count", cfg.count},
          {"seed", cfg.seed},           {"planted", planted}};
}

namespace {

std::vector<std::uint32_t> draw_distinct_vars(Rng& rng, std::uint32_t num_vars, std::uint32_t k) {
  std::vector<std::uint32_t> vars;
  vars.reserve(k);
  while (vars.size() < k) {
    const auto v = static_cast<std::uint32_t>(rng.index_below(num_vars)) + 1;
    if (std::find(vars.begin(), vars.end(), v) == vars.end()) vars.push_back(v);
  }
  return vars;
}

Clause make_clause(const std::vector<std::uint32_t>& vars, std::uint32_t pattern) {
  Clause c;
  c.reserve(vars.size());
  for (std::size_t j = 0; j < vars.size(); ++j) {
    const auto v = static_cast<Literal>(vars[j]);
    c.push_back((pattern >> j) & 1u ? v : -v);
  }
  return c;
}

std::string formula_name(const GeneratorConfig& cfg, std::size_t index) {
  return cfg.dataset + "_" + std::to_string(index);
}

CnfFormula random_formula(const GeneratorConfig& cfg, Rng& rng) {
  std::vector<Clause> clauses;
  clauses.reserve(cfg.num_clauses);
  for (std::uint32_t c = 0; c < cfg.num_clauses; ++c) {
    const auto vars = draw_distinct_vars(rng, cfg.num_vars, cfg.clause_width);
    std::uint32_t pattern = 0;
    for (std::uint32_t j = 0; j < cfg.clause_width; ++j)
      if (rng.index_below(2) == 1) pattern |= 1u << j;
    clauses.push_back(make_clause(vars, pattern));
  }
  return CnfFormula(cfg.num_vars, std::move(clauses));
}

}  // namespace

std::vector<std::uint32_t> admissible_patterns(const std::vector<std::uint32_t>& vars, const std::vector<Model>& planted) {
  const std::uint32_t k = static_cast<std::uint32_t>(vars.size());
  const std::uint32_t all = k >= 32 ? ~0u : (1u << k) - 1;
  std::vector<bool> forbidden(std::size_t{all} + 1, false);
  // A clause is falsified by m exactly when every literal is false, i.e. its
  // sign pattern is the complement of m restricted to `vars`.
  for (const auto& m : planted) {
    std::uint32_t projection = 0;
    for (std::uint32_t j = 0; j < k; ++j)
      if (m.value(vars[j])) projection |= 1u << j;
    forbidden[~projection & all] = true;
  }
  std::vector<std::uint32_t> out;
  for (std::uint32_t p = 0; p <= all; ++p) {
    if (!forbidden[p]) out.push_back(p);
    if (p == all) break;
  }
  return out;
}

std::vector<CnfFormula> gen_random_kcnf(const GeneratorConfig& cfg) {
  cfg.validate();
  if (!cfg.planted.empty()) throw std::invalid_argument("random k-CNF generation takes no planted assignments");
  std::vector<CnfFormula> out;
  out.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    Rng rng(derive_seed(cfg.seed, i));
    std::size_t attempts = 0;
    for (;;) {
      CnfFormula f = random_formula(cfg, rng);
      if (!cfg.require_satisfiable || ModelCounter(f).first_model(std::vector<bool>(cfg.num_vars, false))) {
        f.set_name(formula_name(cfg, i));
        out.push_back(std::move(f));
        break;
      }
      if (++attempts >= cfg.max_retries)
        throw GeneratorError("no satisfiable formula for index " + std::to_string(i) + " after " +
                             std::to_string(attempts) + " attempts");
    }
  }
  return out;
}

std::vector<CnfFormula> gen_planted_kcnf(const GeneratorConfig& cfg) {
  cfg.validate();
  if (cfg.planted.empty()) throw std::invalid_argument("planted generation needs at least one assignment");
  std::vector<CnfFormula> out;
  out.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    Rng rng(derive_seed(cfg.seed, i));
    std::vector<Clause> clauses;
    clauses.reserve(cfg.num_clauses);
    for (std::uint32_t c = 0; c < cfg.num_clauses; ++c) {
      for (std::size_t attempt = 0;; ++attempt) {
        if (attempt >= cfg.max_retries)
          throw GeneratorError("planted assignments leave no admissible clause after " + std::to_string(attempt) +
                               " variable draws");
        const auto vars = draw_distinct_vars(rng, cfg.num_vars, cfg.clause_width);
        const auto patterns = admissible_patterns(vars, cfg.planted);
        if (patterns.empty()) continue;
        clauses.push_back(make_clause(vars, patterns[rng.index_below(patterns.size())]));
        break;
      }
    }
    out.emplace_back(cfg.num_vars, std::move(clauses), formula_name(cfg, i));
  }
  return out;
}

std::vector<Model> random_assignments(std::uint32_t num_vars, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Model> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Model m(num_vars);
    for (std::uint32_t v = 1; v <= num_vars; ++v) m.set(v, rng.index_below(2) == 1);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<std::string> write_dataset(const std::vector<CnfFormula>& formulas, const GeneratorConfig& cfg,
                                       const std::string& directory) {
  fs::create_directories(directory);
  std::vector<std::string> paths;
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t i = 0; i < formulas.size(); ++i) {
    const std::string file = formula_name(cfg, i) + ".cnf";
    const auto path = (fs::path(directory) / file).string();
    write_dimacs_file(formulas[i], path);
    paths.push_back(path);
    files.push_back(file);
  }
  nlohmann::json manifest = {{"schema_version", 1}, {"generator", to_json(cfg)}, {"files", files}};
  std::ofstream out(fs::path(directory) / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write dataset manifest in " + directory);
  return paths;
}

namespace {

std::pair<long long, std::string> dataset_order(const fs::path& p) {
  const std::string stem = p.stem().string();
  const auto us = stem.find_last_of('_');
  long long index = -1;
  if (us != std::string::npos && us + 1 < stem.size() &&
      std::all_of(stem.begin() + static_cast<long>(us) + 1, stem.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    index = std::stoll(stem.substr(us + 1));
  return {index, stem};
}

}  // namespace

std::vector<CnfFormula> load_dataset(const std::string& directory) {
  if (!fs::is_directory(directory)) throw std::runtime_error("dataset directory not found: " + directory);
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(directory))
    if (entry.is_regular_file() && entry.path().extension() == ".cnf") paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end(),
            [](const fs::path& a, const fs::path& b) { return dataset_order(a) < dataset_order(b); });
  std::vector<CnfFormula> out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    CnfFormula f = read_dimacs_file(p.string());
    f.set_name(p.stem().string());
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace urscheck
