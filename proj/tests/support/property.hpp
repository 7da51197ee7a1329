#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "avse/random.hpp"
#include "avse/signal.hpp"

namespace avse::testing {

struct LawViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void expect(bool cond, const std::string& what) {
  if (!cond) throw LawViolation(what);
}

// One randomised invariant. check() draws its own inputs from the generator
// and throws LawViolation on a counterexample.
struct Law {
  std::string module;
  std::string name;
  std::function<void(Rng&)> check;
};

struct LawResult {
  std::string module;
  std::string name;
  std::size_t cases = 0;
  bool ok = true;
  std::size_t failing_case = 0;
  std::string failure;
  double seconds = 0.0;
};

// Case i uses the generator seeded with child_seed(seed, i), so a failure is
// reproducible from (seed, i) alone.
LawResult run_law(const Law& law, std::size_t cases, std::uint64_t seed);

std::vector<Law> all_laws();

// Generators.
Waveform random_waveform(Rng& rng, std::size_t n, double amplitude = 1.0);
RealMatrix random_matrix(Rng& rng, int rows, int cols, double lo, double hi);
double gaussian(Rng& rng);

}  // namespace avse::testing
