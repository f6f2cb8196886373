#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stackest/dgm.hpp"
#include "stackest/gcomp.hpp"

namespace stackest {

// Difference of complete-case arm means, theta = (mu1, mu0, psi), with the
// sandwich variance of the three-function stack. Throws EmptyArm.
FitResult naive_estimate(const Dataset& data, const ColumnRoles& roles = {},
                         const SolverOptions& options = {});

/// An estimator in a study: the naive complete-case contrast when `spec` is
/// empty, a g-computation estimator otherwise.
struct EstimatorEntry {
  std::string name;
  std::optional<EstimatorSpec> spec;
};

FitResult run_estimator(const EstimatorEntry& entry, const Dataset& data,
                        const EstimateOptions& options = {});

// Case 1: naive, standard, modified. Case 2: naive, standard-z, standard-x,
// standard-xz, iterated.
std::vector<EstimatorEntry> default_estimators(DgmCase which);
// Throws std::invalid_argument for names not in default_estimators(which).
EstimatorEntry estimator_by_name(DgmCase which, const std::string& name);

struct ReplicateEstimate {
  bool ok = false;
  double psi = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double residual = 0.0;
};

struct EstimatorSummary {
  std::string name;
  double bias = 0.0;
  double ese = 0.0;  // sample SD of psi-hat, reps - 1 divisor
  double ser = 0.0;  // mean(SE) / ESE
  double coverage = 0.0;
  std::size_t n_reps = 0;  // successful replications
  std::size_t n_failures = 0;
  double truth = 0.0;
  double max_residual = 0.0;
  bool flagged = false;  // more than 1% of replications failed
};

// Metrics over the successful entries of `reps`.
EstimatorSummary summarize(const std::string& name, std::span<const ReplicateEstimate> reps,
                           double truth);

struct StudyConfig {
  DgmCase which = DgmCase::case1;
  std::size_t n = 1000;
  std::size_t reps = 2000;
  std::uint64_t seed = 0;
  std::vector<EstimatorEntry> estimators;  // empty: default_estimators(which)
  std::optional<double> truth;             // empty: cached_true_psi
  std::size_t truth_n = 10'000'000;
  std::uint64_t truth_seed = 20250101;
  int threads = 0;  // 0: OpenMP default
  EstimateOptions estimate;
};

struct SimulationReport {
  DgmCase which = DgmCase::case1;
  std::size_t n = 0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  double truth = 0.0;
  std::vector<EstimatorSummary> rows;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kSmallReps = 100;

// Seed of replication r under the study seed.
std::uint64_t replication_seed(std::uint64_t seed, std::size_t r);

// true_psi with results memoized per (case, n, seed).
double cached_true_psi(DgmCase which, std::size_t n, std::uint64_t seed);

// Replications run concurrently; metrics are computed afterwards from results
// stored by replication index, so the report does not depend on `threads`.
SimulationReport run_study(const StudyConfig& config);

std::string format_table(const SimulationReport& report);
std::string format_csv(const SimulationReport& report);
std::string format_json_lines(const SimulationReport& report);

}  // namespace stackest
