#include "raus/common.hpp"

#include <limits>

#include "raus/rng.hpp"

namespace raus {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kSchema: return "SchemaError";
    case ErrorCode::kDegenerateVariable: return "DegenerateVariable";
    case ErrorCode::kStratumTooSmall: return "StratumTooSmall";
    case ErrorCode::kEmptyStratum: return "EmptyStratum";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kNoRankableVariables: return "NoRankableVariables";
    case ErrorCode::kParentSpaceTooLarge: return "ParentSpaceTooLarge";
    case ErrorCode::kInvalidStructure: return "InvalidStructure";
    case ErrorCode::kInconsistentEvidence: return "InconsistentEvidence";
    case ErrorCode::kTreewidthTooLarge: return "TreewidthTooLarge";
    case ErrorCode::kHorizonExceeded: return "HorizonExceeded";
    case ErrorCode::kOracleTooLarge: return "OracleTooLarge";
    case ErrorCode::kUndefinedMetric: return "UndefinedMetric";
    case ErrorCode::kUnstableBootstrap: return "UnstableBootstrap";
    case ErrorCode::kConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::kLayout: return "LayoutError";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Error";
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(base);
  for (std::uint64_t p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

std::size_t Rng::index(std::size_t n) {
  if (n <= 1) return 0;
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

int Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform() * total;
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) return static_cast<int>(k);
  }
  // Rounding can leave u == total; fall back to the last positive weight.
  for (std::size_t k = weights.size(); k > 0; --k)
    if (weights[k - 1] > 0) return static_cast<int>(k - 1);
  return 0;
}

}  // namespace raus
