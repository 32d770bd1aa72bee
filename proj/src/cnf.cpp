#include "urscheck/cnf.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace urscheck {

namespace {

enum class ClauseFix { Kept, Deduplicated, Tautology };

// Sorts by variable, drops duplicate literals and detects x / -x pairs.
ClauseFix normalise_clause(Clause& clause) {
  std::sort(clause.begin(), clause.end(), [](Literal a, Literal b) {
    return var_of(a) != var_of(b) ? var_of(a) < var_of(b) : a < b;
  });
  const auto before = clause.size();
  clause.erase(std::unique(clause.begin(), clause.end()), clause.end());
  for (std::size_t i = 1; i < clause.size(); ++i)
    if (clause[i] == -clause[i - 1]) return ClauseFix::Tautology;
  return clause.size() != before ? ClauseFix::Deduplicated : ClauseFix::Kept;
}

}  // namespace

CnfFormula::CnfFormula(std::uint32_t num_vars, std::vector<Clause> clauses, std::string name)
    : num_vars_(num_vars), name_(std::move(name)) {
  clauses_.reserve(clauses.size());
  for (auto& clause : clauses) {
    if (clause.empty()) throw std::invalid_argument("empty clause");
    for (Literal lit : clause)
      if (lit == 0 || var_of(lit) > num_vars)
        throw std::invalid_argument("literal " + std::to_string(lit) + " out of range");
    if (normalise_clause(clause) == ClauseFix::Tautology) continue;
    clauses_.push_back(std::move(clause));
  }
}

CnfFormula CnfFormula::condition(Literal lit) const {
  if (lit == 0 || var_of(lit) > num_vars_)
    throw std::invalid_argument("literal " + std::to_string(lit) + " out of range");
  CnfFormula out = *this;
  out.clauses_.push_back(Clause{lit});
  return out;
}

bool CnfFormula::same_clauses(const CnfFormula& other) const {
  if (num_vars_ != other.num_vars_ || clauses_.size() != other.clauses_.size()) return false;
  auto canonical = [](std::vector<Clause> cs) {
    for (auto& c : cs) std::sort(c.begin(), c.end());
    std::sort(cs.begin(), cs.end());
    return cs;
  };
  return canonical(clauses_) == canonical(other.clauses_);
}

Model Model::from_bools(const std::vector<bool>& values) {
  Model m(static_cast<std::uint32_t>(values.size()));
  for (std::uint32_t v = 1; v <= m.num_vars(); ++v) m.set(v, values[v - 1]);
  return m;
}

std::uint32_t Model::weight() const {
  std::uint32_t w = 0;
  for (auto word : words_) w += static_cast<std::uint32_t>(std::popcount(word));
  return w;
}

std::string Model::to_literals() const {
  std::string out;
  for (std::uint32_t v = 1; v <= num_vars_; ++v) {
    if (!value(v)) out += '-';
    out += std::to_string(v);
    out += ' ';
  }
  out += '0';
  return out;
}

std::string Model::to_bitstring() const {
  std::string out(num_vars_, '0');
  for (std::uint32_t v = 1; v <= num_vars_; ++v)
    if (value(v)) out[v - 1] = '1';
  return out;
}

std::strong_ordering Model::operator<=>(const Model& other) const {
  if (auto c = num_vars_ <=> other.num_vars_; c != 0) return c;
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const std::uint64_t diff = words_[i] ^ other.words_[i];
    if (diff == 0) continue;
    const std::uint64_t lowest = diff & (~diff + 1);
    return (words_[i] & lowest) ? std::strong_ordering::greater : std::strong_ordering::less;
  }
  return std::strong_ordering::equal;
}

std::size_t ModelHash::operator()(const Model& m) const noexcept {
  std::uint64_t h = 0x9e3779b97f4a7c15ull ^ m.num_vars();
  for (auto w : m.words()) {
    h ^= w + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h *= 0xbf58476d1ce4e5b9ull;
  }
  return static_cast<std::size_t>(h ^ (h >> 31));
}

void Sample::append(const Sample& other) {
  models_.insert(models_.end(), other.models_.begin(), other.models_.end());
}

std::unordered_map<Model, std::uint64_t, ModelHash> Sample::multiplicities() const {
  std::unordered_map<Model, std::uint64_t, ModelHash> counts;
  counts.reserve(models_.size());
  for (const auto& m : models_) ++counts[m];
  return counts;
}

namespace {

bool parse_int(std::string_view token, long long& out) {
  const char* first = token.data();
  if (!token.empty() && token.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), out);
  return ec == std::errc{} && ptr == token.data() + token.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

}  // namespace

CnfFormula parse_dimacs(std::istream& in, std::vector<std::string>* warnings) {
  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };

  bool have_header = false;
  long long declared_vars = 0;
  long long declared_clauses = 0;
  std::vector<Clause> clauses;
  Clause current;
  std::size_t current_start_line = 0;
  std::size_t line_no = 0;
  std::size_t tautologies = 0;
  std::size_t deduplicated = 0;

  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens[0].front() == 'c') continue;
    if (tokens[0] == "%") break;  // SATLIB trailer
    if (tokens[0] == "p") {
      if (have_header) throw ParseError(line_no, "duplicate problem line");
      if (tokens.size() != 4 || tokens[1] != "cnf" || !parse_int(tokens[2], declared_vars) ||
          !parse_int(tokens[3], declared_clauses) || declared_vars < 0 || declared_clauses < 0 ||
          declared_vars > (1LL << 30))
        throw ParseError(line_no, "invalid problem line, expected 'p cnf <vars> <clauses>'");
      have_header = true;
      continue;
    }
    if (!have_header) throw ParseError(line_no, "missing 'p cnf' header before clauses");
    for (auto token : tokens) {
      long long value = 0;
      if (!parse_int(token, value))
        throw ParseError(line_no, "invalid token '" + std::string(token) + "'");
      if (value == 0) {
        if (current.empty()) throw ParseError(line_no, "empty clause");
        const auto fix = normalise_clause(current);
        if (fix == ClauseFix::Tautology)
          ++tautologies;
        else
          clauses.push_back(current);
        if (fix == ClauseFix::Deduplicated) ++deduplicated;
        current.clear();
        continue;
      }
      if (value > declared_vars || -value > declared_vars)
        throw ParseError(line_no, "literal " + std::to_string(value) + " out of range");
      if (current.empty()) current_start_line = line_no;
      current.push_back(static_cast<Literal>(value));
    }
  }
  if (!have_header) throw ParseError(line_no, "missing 'p cnf' header");
  if (!current.empty()) throw ParseError(current_start_line, "unterminated clause");

  if (tautologies > 0) warn(std::to_string(tautologies) + " tautological clause(s) removed");
  if (deduplicated > 0) warn(std::to_string(deduplicated) + " clause(s) had duplicate literals");
  const auto actual = static_cast<long long>(clauses.size() + tautologies);
  if (actual != declared_clauses)
    warn("header declares " + std::to_string(declared_clauses) + " clauses, found " + std::to_string(actual));

  return CnfFormula(static_cast<std::uint32_t>(declared_vars), std::move(clauses));
}

CnfFormula parse_dimacs(std::string_view text, std::vector<std::string>* warnings) {
  std::istringstream in{std::string(text)};
  return parse_dimacs(in, warnings);
}

CnfFormula read_dimacs_file(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_dimacs(in, warnings);
}

std::string write_dimacs(const CnfFormula& f) {
  std::string out = "p cnf " + std::to_string(f.num_vars()) + " " + std::to_string(f.num_clauses()) + "\n";
  for (const auto& clause : f.clauses()) {
    for (Literal lit : clause) {
      out += std::to_string(lit);
      out += ' ';
    }
    out += "0\n";
  }
  return out;
}

void write_dimacs_file(const CnfFormula& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << write_dimacs(f);
  if (!out) throw std::runtime_error("write failed: " + path);
}

bool satisfies(const CnfFormula& f, const Model& m) {
  if (m.num_vars() != f.num_vars())
    throw std::invalid_argument("model has " + std::to_string(m.num_vars()) + " variables, formula has " +
                                std::to_string(f.num_vars()));
  for (const auto& clause : f.clauses()) {
    bool sat = false;
    for (Literal lit : clause)
      if (m.literal_true(lit)) {
        sat = true;
        break;
      }
    if (!sat) return false;
  }
  return true;
}

}  // namespace urscheck
