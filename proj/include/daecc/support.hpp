#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace daecc {

// Word type of the abstract machine. All scalars and array elements are words.
using Word = int64_t;

// Distinguished value carried by poisoned store slots. Never committed to
// memory by the data unit; the simulator asserts it stays unobservable.
inline constexpr Word kUndefWord = static_cast<Word>(0xDEADBEEFCAFEF00DULL);

// Deterministic mixer used by `opaque` instructions so uninterpreted compute
// still carries data flow that differential tests can observe.
inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline uint64_t hash_str(const std::string& s) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Pipeline-level failures that abort a transformation with a reason the
// harness can report (differential tests turn these into skips).
enum class PipelineErrorKind {
  RequestInInnerLoop,
  MultiSourceCoOccurrence,
  UnhoistableOperands,
  UnhoistableDataDep,
  PathLimit,
  DominanceBroken,
  InvalidInput,
  UnreachableRate,
};

inline const char* to_string(PipelineErrorKind k) {
  switch (k) {
    case PipelineErrorKind::RequestInInnerLoop: return "REQUEST-IN-INNER-LOOP";
    case PipelineErrorKind::MultiSourceCoOccurrence: return "MULTI-SOURCE-CO-OCCURRENCE";
    case PipelineErrorKind::UnhoistableOperands: return "UNHOISTABLE-OPERANDS";
    case PipelineErrorKind::UnhoistableDataDep: return "UNHOISTABLE-DATA-DEP";
    case PipelineErrorKind::PathLimit: return "PATH-LIMIT";
    case PipelineErrorKind::DominanceBroken: return "DOMINANCE-BROKEN";
    case PipelineErrorKind::InvalidInput: return "INVALID-INPUT";
    case PipelineErrorKind::UnreachableRate: return "UNREACHABLE-RATE";
  }
  return "UNKNOWN";
}

class PipelineError : public std::runtime_error {
public:
  PipelineError(PipelineErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}
  PipelineErrorKind kind() const { return kind_; }

private:
  PipelineErrorKind kind_;
};

// Small splitmix-based RNG; deterministic across platforms, unlike
// distribution wrappers around std engines.
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9E3779B97F4A7C15ULL) {}

  uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, n).
  uint64_t below(uint64_t n) { return n ? next() % n : 0; }
  int64_t range(int64_t lo, int64_t hi) {  // inclusive
    return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo + 1)));
  }
  bool chance(double p) {
    return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0) < p;
  }

private:
  uint64_t state_;
};

}  // namespace daecc
