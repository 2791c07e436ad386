#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mcgae {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or violated precondition. The CLI maps it to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or parameters during training. The CLI maps it to exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Non-fatal diagnostics collected by operations that degrade gracefully.
using Warnings = std::vector<std::string>;

inline void warn(Warnings* sink, std::string message) {
  if (sink != nullptr) sink->push_back(std::move(message));
}

enum class Label : std::uint8_t { kNormal = 0, kUnlabeled = 1, kAnomalous = 2 };

char label_code(Label label);
Label label_from_code(char code);

/// splitmix64 finalizer; used to derive independent stream seeds from one user seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded generator with distributions implemented here rather than through
/// <random> distribution objects, whose output differs between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (one value per call, the pair's sine half is discarded).
  double normal();
  /// Uniform integer in [0, n); n must be positive.
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mcgae
