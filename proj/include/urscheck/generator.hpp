#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "urscheck/cnf.hpp"

namespace urscheck {

class GeneratorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GeneratorConfig {
  std::uint32_t num_vars = 30;
  std::uint32_t num_clauses = 90;
  std::uint32_t clause_width = 3;
  /// Assignments every generated formula must satisfy (planted mode).
  std::vector<Model> planted;
  bool require_satisfiable = false;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  /// Dataset name used for formula names and file names.
  std::string dataset = "dataset";
  /// Redraws allowed per formula (random mode) or per clause (planted mode).
  std::size_t max_retries = 10'000;

  void validate() const;
};

nlohmann::json to_json(const GeneratorConfig& cfg);

/// Uniform random k-CNF: each clause picks k distinct variables uniformly and
/// negates each with probability 1/2. With require_satisfiable, formulae with
/// no model are redrawn. Formula i depends only on (seed, i).
std::vector<CnfFormula> gen_random_kcnf(const GeneratorConfig& cfg);

/// k-CNF whose clauses avoid every sign pattern falsified by a planted
/// assignment: per clause, k distinct variables are drawn and a sign pattern
/// is chosen uniformly among the admissible ones; variables are redrawn when
/// none is admissible.
std::vector<CnfFormula> gen_planted_kcnf(const GeneratorConfig& cfg);

/// Sign patterns (bit j set = literal j positive) over `vars` that no planted
/// assignment falsifies.
std::vector<std::uint32_t> admissible_patterns(const std::vector<std::uint32_t>& vars, const std::vector<Model>& planted);

/// `count` assignments drawn uniformly from {0,1}^num_vars.
std::vector<Model> random_assignments(std::uint32_t num_vars, std::size_t count, std::uint64_t seed);

/// Writes `<dataset>_<index>.cnf` files plus manifest.json; returns the paths.
std::vector<std::string> write_dataset(const std::vector<CnfFormula>& formulas, const GeneratorConfig& cfg,
                                       const std::string& directory);

/// Loads every *.cnf file in `directory`, ordered by trailing index then name.
/// Formula names are the file stems.
std::vector<CnfFormula> load_dataset(const std::string& directory);

}  // namespace urscheck
