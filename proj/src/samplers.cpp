#include "urscheck/samplers.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <unistd.h>

#include "urscheck/process.hpp"

namespace urscheck {

std::string_view to_string(BiasVariant v) {
  switch (v) {
    case BiasVariant::Skew: return "skew";
    case BiasVariant::Duplicator: return "duplicator";
    case BiasVariant::Firstfall: return "firstfall";
  }
  return "?";
}

BiasVariant parse_bias_variant(std::string_view name) {
  for (auto v : {BiasVariant::Skew, BiasVariant::Duplicator, BiasVariant::Firstfall})
    if (to_string(v) == name) return v;
  throw std::invalid_argument("unknown bias variant '" + std::string(name) + "'");
}

std::string_view to_string(OutputFormat f) { return f == OutputFormat::Literals ? "literals" : "bitstring"; }

OutputFormat parse_output_format(std::string_view name) {
  if (name == "literals") return OutputFormat::Literals;
  if (name == "bitstring") return OutputFormat::Bitstring;
  throw std::invalid_argument("unknown output format '" + std::string(name) + "'");
}

std::string_view to_string(InvalidPolicy p) { return p == InvalidPolicy::Fail ? "fail" : "filter"; }

InvalidPolicy parse_invalid_policy(std::string_view name) {
  if (name == "fail") return InvalidPolicy::Fail;
  if (name == "filter") return InvalidPolicy::Filter;
  throw std::invalid_argument("unknown invalid-sample policy '" + std::string(name) + "'");
}

SamplerSpec SamplerSpec::builtin_uniform() { return {}; }

SamplerSpec SamplerSpec::builtin_biased(BiasVariant variant, double strength) {
  SamplerSpec s;
  s.kind = SamplerKind::BuiltinBiased;
  s.variant = variant;
  s.strength = strength;
  return s;
}

SamplerSpec SamplerSpec::external(std::string command_template, OutputFormat format) {
  SamplerSpec s;
  s.kind = SamplerKind::External;
  s.command_template = std::move(command_template);
  s.format = format;
  return s;
}

namespace {

std::string format_strength(double s) {
  std::ostringstream out;
  out << s;
  return out.str();
}

std::string sanitise(std::string_view name) {
  std::string out;
  for (char c : name)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return out.empty() ? "sampler" : out;
}

}  // namespace

std::string SamplerSpec::id() const {
  if (!label.empty()) return sanitise(label);
  switch (kind) {
    case SamplerKind::BuiltinUniform: return "uniform";
    case SamplerKind::BuiltinBiased:
      if (variant == BiasVariant::Firstfall) return "firstfall";
      return std::string(to_string(variant)) + "-" + format_strength(strength);
    case SamplerKind::External: return "external";
  }
  return "sampler";
}

void SamplerSpec::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (timeout.count() <= 0) throw std::invalid_argument("timeout must be positive");
  if (kind == SamplerKind::BuiltinBiased && !(strength >= 0 && std::isfinite(strength)))
    throw std::invalid_argument("bias strength must be a non-negative number");
  if (kind == SamplerKind::External) {
    if (command_template.find("{cnf}") == std::string::npos)
      throw std::invalid_argument("command template lacks a {cnf} placeholder");
    if (command_template.find("{n}") == std::string::npos)
      throw std::invalid_argument("command template lacks an {n} placeholder");
  }
}

nlohmann::json to_json(const SamplerSpec& s) {
  nlohmann::json j;
  switch (s.kind) {
    case SamplerKind::BuiltinUniform: j["kind"] = "builtin_uniform"; break;
    case SamplerKind::BuiltinBiased:
      j["kind"] = "builtin_biased";
      j["variant"] = to_string(s.variant);
      j["strength"] = s.strength;
      break;
    case SamplerKind::External:
      j["kind"] = "external";
      j["command"] = s.command_template;
      j["format"] = to_string(s.format);
      break;
  }
  j["batch_size"] = s.batch_size;
  j["timeout_ms"] = s.timeout.count();
  j["invalid_policy"] = to_string(s.invalid_policy);
  j["seed"] = s.rng_seed;
  j["id"] = s.id();
  if (!s.label.empty()) j["label"] = s.label;
  return j;
}

SamplerSpec sampler_spec_from_json(const nlohmann::json& j) {
  SamplerSpec s;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "builtin_uniform") {
    s.kind = SamplerKind::BuiltinUniform;
  } else if (kind == "builtin_biased") {
    s.kind = SamplerKind::BuiltinBiased;
    s.variant = parse_bias_variant(j.at("variant").get<std::string>());
    s.strength = j.at("strength").get<double>();
  } else if (kind == "external") {
    s.kind = SamplerKind::External;
    s.command_template = j.at("command").get<std::string>();
    s.format = parse_output_format(j.at("format").get<std::string>());
  } else {
    throw std::invalid_argument("unknown sampler kind '" + kind + "'");
  }
  s.batch_size = j.value("batch_size", std::size_t{1000});
  s.timeout = std::chrono::milliseconds(j.value("timeout_ms", std::int64_t{60'000}));
  s.invalid_policy = parse_invalid_policy(j.value("invalid_policy", std::string("fail")));
  s.rng_seed = j.value("seed", std::uint64_t{0});
  s.label = j.value("label", std::string());
  return s;
}

PrefixCounter::PrefixCounter(const CnfFormula& f, std::size_t max_entries)
    : formula_(f), counter_(formula_), max_entries_(max_entries) {}

BigCount PrefixCounter::total() {
  std::lock_guard lock(mutex_);
  if (!total_) {
    ++counter_calls_;
    total_ = counter_.count();
  }
  return *total_;
}

BigCount PrefixCounter::count(const std::vector<bool>& values) {
  // Key: prefix bits followed by a sentinel 1 bit, packed into bytes.
  std::string key((values.size() + 8) / 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i]) key[i / 8] = static_cast<char>(key[i / 8] | (1 << (i % 8)));
  key[values.size() / 8] = static_cast<char>(key[values.size() / 8] | (1 << (values.size() % 8)));

  std::lock_guard lock(mutex_);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  std::vector<Literal> assumptions(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto v = static_cast<Literal>(i + 1);
    assumptions[i] = values[i] ? v : -v;
  }
  ++counter_calls_;
  BigCount c = counter_.count(assumptions);
  if (cache_.size() >= max_entries_) cache_.clear();
  cache_.emplace(std::move(key), c);
  return c;
}

std::optional<Model> PrefixCounter::first_model(const std::vector<bool>& phase) {
  std::lock_guard lock(mutex_);
  return counter_.first_model(phase);
}

std::size_t PrefixCounter::cache_size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

namespace {

void check_deadline(const Deadline& deadline) {
  if (deadline && Clock::now() > *deadline) throw BudgetExhausted();
}

// One partitioning walk. `choose_true(c0, c1)` decides a branch whose two
// sides hold c0 (false) and c1 (true) models, both non-zero.
template <class Choose>
Model partition_draw(PrefixCounter& counts, BigCount c, Choose&& choose_true) {
  const auto n = counts.formula().num_vars();
  std::vector<bool> prefix;
  prefix.reserve(n);
  Model m(n);
  for (std::uint32_t v = 1; v <= n; ++v) {
    prefix.push_back(false);
    BigCount c0 = counts.count(prefix);
    bool value;
    if (c0 == 0)
      value = true;
    else if (c0 == c)
      value = false;
    else
      value = choose_true(c0, c);
    prefix.back() = value;
    m.set(v, value);
    if (value)
      c -= c0;
    else
      c = std::move(c0);
  }
  return m;
}

BigCount satisfiable_total(PrefixCounter& counts) {
  BigCount total = counts.total();
  if (total == 0) throw SamplerError("formula is unsatisfiable");
  return total;
}

}  // namespace

Sample uniform_partition_sample(PrefixCounter& counts, std::size_t n, UniformSource& rng, Deadline deadline) {
  const BigCount total = satisfiable_total(counts);
  Sample s;
  for (std::size_t i = 0; i < n; ++i) {
    check_deadline(deadline);
    s.push_back(partition_draw(counts, total, [&](const BigCount& c0, const BigCount& c) { return rng.below(c) >= c0; }));
  }
  return s;
}

Sample uniform_partition_sample(const CnfFormula& f, std::size_t n, UniformSource& rng) {
  PrefixCounter counts(f);
  return uniform_partition_sample(counts, n, rng);
}

Sample biased_sample(PrefixCounter& counts, std::size_t n, BiasVariant variant, double strength, UniformSource& rng,
                     Deadline deadline) {
  if (!(strength >= 0)) throw std::invalid_argument("bias strength must be non-negative");
  const BigCount total = satisfiable_total(counts);
  Sample s;
  switch (variant) {
    case BiasVariant::Skew: {
      const double boost = 1.0 + strength;
      for (std::size_t i = 0; i < n; ++i) {
        check_deadline(deadline);
        s.push_back(partition_draw(counts, total, [&](const BigCount& c0, const BigCount& c) {
          const double f0 = ratio(c0, c);
          const double w1 = (1.0 - f0) * boost;
          return rng.unit() * (f0 + w1) >= f0;
        }));
      }
      break;
    }
    case BiasVariant::Duplicator: {
      const auto fresh = static_cast<std::size_t>(std::ceil(static_cast<double>(n) / (1.0 + strength)));
      s = uniform_partition_sample(counts, std::min(fresh, n), rng, deadline);
      if (s.empty()) break;
      const Model first = s.models().front();
      while (s.size() < n) s.push_back(first);
      break;
    }
    case BiasVariant::Firstfall: {
      const auto num_vars = counts.formula().num_vars();
      std::vector<bool> phase(num_vars);
      for (std::size_t i = 0; i < n; ++i) {
        check_deadline(deadline);
        for (std::uint32_t v = 0; v < num_vars; ++v) phase[v] = rng.index_below(2) == 1;
        auto m = counts.first_model(phase);
        if (!m) throw SamplerError("formula is unsatisfiable");
        s.push_back(std::move(*m));
      }
      break;
    }
  }
  return s;
}

std::vector<std::size_t> validate_sample(const CnfFormula& f, const Sample& s) {
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& m = s.models()[i];
    if (m.num_vars() != f.num_vars() || !satisfies(f, m)) bad.push_back(i);
  }
  return bad;
}

Sample parse_sampler_output(std::string_view text, OutputFormat format, std::uint32_t num_vars) {
  Sample s;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
    if (line.empty() || line.front() == 'c') continue;

    Model m(num_vars);
    if (format == OutputFormat::Bitstring) {
      if (line.size() != num_vars)
        throw ParseError(line_no, "expected " + std::to_string(num_vars) + " bits, got " + std::to_string(line.size()));
      for (std::uint32_t v = 1; v <= num_vars; ++v) {
        const char c = line[v - 1];
        if (c != '0' && c != '1') throw ParseError(line_no, std::string("invalid character '") + c + "'");
        m.set(v, c == '1');
      }
    } else {
      std::vector<bool> seen(num_vars + 1, false);
      std::uint32_t assigned = 0;
      bool terminated = false;
      std::istringstream tokens{std::string(line)};
      std::string token;
      while (tokens >> token) {
        if (terminated) throw ParseError(line_no, "tokens after terminating 0");
        long long lit = 0;
        try {
          std::size_t used = 0;
          lit = std::stoll(token, &used);
          if (used != token.size()) throw std::invalid_argument(token);
        } catch (const std::exception&) {
          throw ParseError(line_no, "invalid literal '" + token + "'");
        }
        if (lit == 0) {
          terminated = true;
          continue;
        }
        const auto v = static_cast<std::uint64_t>(lit < 0 ? -lit : lit);
        if (v > num_vars) throw ParseError(line_no, "literal " + std::to_string(lit) + " out of range");
        if (seen[v]) throw ParseError(line_no, "variable " + std::to_string(v) + " assigned twice");
        seen[v] = true;
        ++assigned;
        m.set(static_cast<std::uint32_t>(v), lit > 0);
      }
      if (assigned != num_vars)
        throw ParseError(line_no, "solution assigns " + std::to_string(assigned) + " of " + std::to_string(num_vars) +
                                      " variables");
    }
    s.push_back(std::move(m));
  }
  return s;
}

namespace {

class TempCnfFile {
 public:
  explicit TempCnfFile(const CnfFormula& f) {
    const auto dir = std::filesystem::temp_directory_path();
    std::string pattern = (dir / "urscheck-XXXXXX.cnf").string();
    const int fd = ::mkstemps(pattern.data(), 4);
    if (fd < 0) throw SamplerError("cannot create temporary formula file");
    ::close(fd);
    path_ = pattern;
    write_dimacs_file(f, path_);
  }
  TempCnfFile(const TempCnfFile&) = delete;
  TempCnfFile& operator=(const TempCnfFile&) = delete;
  ~TempCnfFile() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

std::string substitute(std::string text, std::string_view placeholder, const std::string& value) {
  for (auto at = text.find(placeholder); at != std::string::npos; at = text.find(placeholder, at + value.size()))
    text.replace(at, placeholder.size(), value);
  return text;
}

}  // namespace

Sample run_external(const SamplerSpec& spec, const CnfFormula& f, std::size_t n, ExternalRunStats* stats,
                    Deadline deadline, const std::string& formula_path) {
  spec.validate();
  if (spec.kind != SamplerKind::External) throw std::invalid_argument("run_external needs an external sampler spec");
  ExternalRunStats local;
  ExternalRunStats& st = stats ? *stats : local;

  std::optional<TempCnfFile> temp;
  std::string path = formula_path;
  if (path.empty()) {
    temp.emplace(f);
    path = temp->path();
  }

  Sample collected;
  int barren_batches = 0;
  while (collected.size() < n) {
    const std::size_t want = std::min(spec.batch_size, n - collected.size());
    auto timeout = spec.timeout;
    bool budget_limited = false;
    if (deadline) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now());
      if (left.count() <= 0) throw BudgetExhausted();
      if (left < timeout) {
        timeout = left;
        budget_limited = true;
      }
    }
    const std::string command = substitute(substitute(spec.command_template, "{cnf}", path), "{n}", std::to_string(want));
    ProcessResult proc;
    ++st.invocations;
    try {
      proc = run_command(command, timeout);
    } catch (const ProcessTimeout&) {
      if (budget_limited) throw BudgetExhausted();
      throw SamplerTimeout();
    }
    if (proc.exit_status != 0) {
      std::string err = proc.err.substr(0, 200);
      throw SamplerError("sampler exited with status " + std::to_string(proc.exit_status) +
                         (err.empty() ? "" : ": " + err));
    }
    Sample batch = parse_sampler_output(proc.out, spec.format, f.num_vars());
    const auto bad = validate_sample(f, batch);
    if (!bad.empty()) {
      if (spec.invalid_policy == InvalidPolicy::Fail) throw InvalidSampleError(bad.size(), batch.size());
      st.dropped += bad.size();
      std::vector<Model> kept;
      std::size_t next_bad = 0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (next_bad < bad.size() && bad[next_bad] == i) {
          ++next_bad;
          continue;
        }
        kept.push_back(batch.models()[i]);
      }
      batch = Sample(std::move(kept));
    }
    if (batch.empty()) {
      if (++barren_batches >= 3) throw SamplerError("sampler returned no valid samples in 3 consecutive batches");
      continue;
    }
    barren_batches = 0;
    batch.truncate(n - collected.size());
    collected.append(batch);
  }
  return collected;
}

Sample draw_sample(const SamplerSpec& spec, PrefixCounter& counts, std::size_t n, std::uint64_t seed, Deadline deadline,
                   ExternalRunStats* stats, const std::string& formula_path) {
  spec.validate();
  Rng rng(seed);
  switch (spec.kind) {
    case SamplerKind::BuiltinUniform: return uniform_partition_sample(counts, n, rng, deadline);
    case SamplerKind::BuiltinBiased: return biased_sample(counts, n, spec.variant, spec.strength, rng, deadline);
    case SamplerKind::External: return run_external(spec, counts.formula(), n, stats, deadline, formula_path);
  }
  return {};
}

}  // namespace urscheck
