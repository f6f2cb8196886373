#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "stackest/dataset.hpp"

namespace stackest {

enum class DgmCase { case1 = 1, case2 = 2 };

// Reading of the case-2 outcome linear predictor.
//   main_effect: -2 - 2A + log(2)Z + log(2)AZ + log(4)U2   (default)
//   literal:     -2 - 2*A*log(2)*Z + log(2)AZ + log(4)U2
enum class OutcomeParsing { main_effect, literal };

struct DgmSpec {
  DgmCase which = DgmCase::case1;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  OutcomeParsing parsing = OutcomeParsing::main_effect;
  // Drops every treatment term from the outcome model (psi = 0).
  bool null_effect = false;
};

// Rows are generated in blocks of kRowsPerStream; block b draws from an
// mt19937_64 seeded with rng::derive_seed(seed, b). Within a row the draw
// order is fixed: case 1 A, U, X, S, Y; case 2 U1, U2, Z, A, X, S, Y. Every
// draw is made for every row (the Y draw included when S = 0), so a row's
// values depend only on (seed, row index).
inline constexpr std::size_t kRowsPerStream = 4096;

// Case 1 columns A, U, X, S, Y; case 2 columns U1, U2, Z, A, X, S, Y.
// Y is unobserved exactly where S = 0.
Dataset generate(const DgmSpec& spec);

struct TruthEstimate {
  double psi = 0.0;
  double mc_se = 0.0;  // Monte Carlo standard error of psi
  std::size_t n = 0;
};

// Mean of Y^1 - Y^0 over spec.n units with selection forced to 1. Both
// potential outcomes reuse the unit's draws from `generate`, so a unit's
// factual outcome equals its potential outcome under the observed treatment.
TruthEstimate true_psi(const DgmSpec& spec);

std::string outcome_model_description(const DgmSpec& spec);

// Per-row potential outcomes for the first `n` rows of `spec`. Exposed for
// consistency checks.
struct PotentialOutcomes {
  std::vector<std::uint8_t> y1;
  std::vector<std::uint8_t> y0;
};
PotentialOutcomes potential_outcomes(const DgmSpec& spec);

}  // namespace stackest
