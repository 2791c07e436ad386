#include "mcgae/common.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace mcgae {

char label_code(Label label) {
  switch (label) {
    case Label::kNormal:
      return 'N';
    case Label::kUnlabeled:
      return 'U';
    case Label::kAnomalous:
      return 'A';
  }
  return '?';
}

Label label_from_code(char code) {
  switch (code) {
    case 'N':
      return Label::kNormal;
    case 'U':
      return Label::kUnlabeled;
    case 'A':
      return Label::kAnomalous;
    default:
      throw FormatError(std::string("unknown label code '") + code + "'");
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw ConfigError("Rng::below requires a positive bound");
  // Rejection sampling removes modulo bias.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = engine_();
  while (draw >= limit) draw = engine_();
  return static_cast<std::size_t>(draw % bound);
}

}  // namespace mcgae
