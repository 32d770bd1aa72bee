#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace urscheck {

/// A signed variable index: +v means "v is true", -v means "v is false".
using Literal = std::int32_t;
using Clause = std::vector<Literal>;

inline std::uint32_t var_of(Literal lit) { return static_cast<std::uint32_t>(lit < 0 ? -lit : lit); }

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// CNF formula over variables 1..num_vars. Clauses are never empty, never
/// tautological, and contain each literal at most once. Variables are never
/// renumbered so that external sampler output lines up positionally.
class CnfFormula {
 public:
  CnfFormula() = default;
  /// Builds a formula, normalising clauses (duplicate literals dropped,
  /// tautologies removed). Throws std::invalid_argument on empty clauses or
  /// out-of-range literals.
  CnfFormula(std::uint32_t num_vars, std::vector<Clause> clauses, std::string name = {});

  std::uint32_t num_vars() const { return num_vars_; }
  const std::vector<Clause>& clauses() const { return clauses_; }
  std::size_t num_clauses() const { return clauses_.size(); }
  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

  /// Same formula with a unit clause fixing var_of(lit) to the sign of lit.
  CnfFormula condition(Literal lit) const;

  /// Equality up to clause order and literal order within clauses.
  bool same_clauses(const CnfFormula& other) const;

 private:
  std::uint32_t num_vars_ = 0;
  std::vector<Clause> clauses_;
  std::string name_;
};

/// Total assignment of num_vars variables, packed into 64-bit words.
/// Variable v (1-based) lives at bit (v-1).
class Model {
 public:
  Model() = default;
  explicit Model(std::uint32_t num_vars) : num_vars_(num_vars), words_((num_vars + 63) / 64, 0) {}
  static Model from_bools(const std::vector<bool>& values);

  std::uint32_t num_vars() const { return num_vars_; }
  bool value(std::uint32_t var) const {
    const std::uint32_t i = var - 1;
    return (words_[i / 64] >> (i % 64)) & 1u;
  }
  void set(std::uint32_t var, bool value) {
    const std::uint32_t i = var - 1;
    const std::uint64_t bit = std::uint64_t{1} << (i % 64);
    if (value)
      words_[i / 64] |= bit;
    else
      words_[i / 64] &= ~bit;
  }
  bool literal_true(Literal lit) const { return value(var_of(lit)) == (lit > 0); }

  /// Number of variables set to true.
  std::uint32_t weight() const;
  bool even_weight() const { return weight() % 2 == 0; }

  const std::vector<std::uint64_t>& words() const { return words_; }

  /// "1 -2 3 0" style rendering.
  std::string to_literals() const;
  /// "101" style rendering, variable 1 first.
  std::string to_bitstring() const;

  bool operator==(const Model&) const = default;
  /// Lexicographic order over (value(1), value(2), ...), false < true.
  std::strong_ordering operator<=>(const Model& other) const;

 private:
  std::uint32_t num_vars_ = 0;
  std::vector<std::uint64_t> words_;
};

struct ModelHash {
  std::size_t operator()(const Model& m) const noexcept;
};

/// Multiset of sampled models, in draw order.
class Sample {
 public:
  Sample() = default;
  explicit Sample(std::vector<Model> models) : models_(std::move(models)) {}

  const std::vector<Model>& models() const { return models_; }
  std::size_t size() const { return models_.size(); }
  bool empty() const { return models_.empty(); }
  void push_back(Model m) { models_.push_back(std::move(m)); }
  void append(const Sample& other);
  void truncate(std::size_t n) {
    if (models_.size() > n) models_.resize(n);
  }

  /// Occurrence count per distinct model.
  std::unordered_map<Model, std::uint64_t, ModelHash> multiplicities() const;

 private:
  std::vector<Model> models_;
};

/// Parses DIMACS CNF text. Warnings (tautologies dropped, duplicate literals,
/// header/body clause count mismatch) are appended to `warnings` if given.
CnfFormula parse_dimacs(std::istream& in, std::vector<std::string>* warnings = nullptr);
CnfFormula parse_dimacs(std::string_view text, std::vector<std::string>* warnings = nullptr);
CnfFormula read_dimacs_file(const std::string& path, std::vector<std::string>* warnings = nullptr);

std::string write_dimacs(const CnfFormula& f);
void write_dimacs_file(const CnfFormula& f, const std::string& path);

/// True iff every clause has a true literal under m. Throws
/// std::invalid_argument when the model length differs from num_vars.
bool satisfies(const CnfFormula& f, const Model& m);

}  // namespace urscheck
