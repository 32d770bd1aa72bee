#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

#include <gmpxx.h>

namespace urscheck {

/// Source of uniform draws used by every sampler and the generator. The
/// virtual interface lets tests substitute an exhaustive enumerator.
class UniformSource {
 public:
  virtual ~UniformSource() = default;
  /// Uniform integer in [0, bound); bound >= 1.
  virtual mpz_class below(const mpz_class& bound) = 0;
  /// Uniform integer in [0, bound); bound >= 1.
  virtual std::uint64_t index_below(std::uint64_t bound) = 0;
  /// Uniform real in [0, 1).
  virtual double unit() = 0;
};

template <class Bits>
std::uint64_t uniform_index(Bits& next64, std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_index: bound must be positive");
  if (bound == 1) return 0;
  const std::uint64_t top = bound - 1;
  const int nbits = 64 - __builtin_clzll(top);
  const std::uint64_t mask = nbits == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << nbits) - 1;
  for (;;) {
    const std::uint64_t candidate = next64() & mask;
    if (candidate < bound) return candidate;
  }
}

/// Exact uniform integer in [0, bound) from a generator of 64-bit words:
/// draw bit_length(bound - 1) bits and reject values >= bound. Never uses a
/// modulo reduction, which would bias the reference sampler.
template <class Bits>
mpz_class uniform_below(Bits& next64, const mpz_class& bound) {
  if (bound <= 0) throw std::invalid_argument("uniform_below: bound must be positive");
  if (bound == 1) return 0;
  if (mpz_fits_ulong_p(bound.get_mpz_t()) && sizeof(unsigned long) == 8)
    return mpz_class(static_cast<unsigned long>(uniform_index(next64, bound.get_ui())));
  const mpz_class top = bound - 1;
  const std::size_t nbits = mpz_sizeinbase(top.get_mpz_t(), 2);
  const std::size_t words = (nbits + 63) / 64;
  const unsigned spare = static_cast<unsigned>(words * 64 - nbits);
  mpz_class candidate;
  for (;;) {
    candidate = 0;
    for (std::size_t w = 0; w < words; ++w) {
      std::uint64_t chunk = next64();
      if (w == 0 && spare > 0) chunk &= ~std::uint64_t{0} >> spare;
      candidate <<= 64;
      mpz_class part;
      mpz_import(part.get_mpz_t(), 1, 1, sizeof chunk, 0, 0, &chunk);
      candidate += part;
    }
    if (candidate < bound) return candidate;
  }
}

/// Deterministic, platform-independent generator (mt19937_64 plus the
/// rejection draws above; no implementation-defined distributions).
class Rng final : public UniformSource {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next64() { return engine_(); }
  std::uint64_t operator()() { return engine_(); }

  mpz_class below(const mpz_class& bound) override { return uniform_below(*this, bound); }
  std::uint64_t index_below(std::uint64_t bound) override { return uniform_index(*this, bound); }
  double unit() override { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finaliser; used to derive independent sub-seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return mix64(mix64(seed) ^ stream); }

/// FNV-1a, for deriving seeds from names.
constexpr std::uint64_t hash_name(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace urscheck
