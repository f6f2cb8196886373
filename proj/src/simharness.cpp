#include "stackest/simharness.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "json.hpp"
#include <omp.h>

#include "stackest/csv.hpp"
#include "stackest/errors.hpp"
#include "stackest/random.hpp"

namespace stackest {
namespace {

EstimatorSpec gcomp_spec(Variant variant, const std::string& design,
                         const char* second_stage = nullptr) {
  EstimatorSpec spec;
  spec.variant = variant;
  spec.outcome_link = Link::logit;
  spec.outcome_design = DesignSpec::parse(design);
  if (second_stage) spec.second_stage_design = DesignSpec::parse(second_stage);
  return spec;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

FitResult naive_estimate(const Dataset& data, const ColumnRoles& roles,
                         const SolverOptions& options) {
  check_roles(roles, data);
  auto binder = [roles](const Dataset& d) -> RowFunction {
    const Column* y = &d.column(roles.outcome);
    const Column* a = &d.column(roles.treatment);
    const Column* s = &d.column(roles.selection);
    return [y, a, s](std::size_t i, std::span<const double> theta, std::span<double> out) {
      out[0] = 0.0;
      out[1] = 0.0;
      if (s->raw()[i] != 0.0) {
        const double yi = y->value(i);
        const double ai = a->raw()[i];
        out[0] = ai * (yi - theta[0]);
        out[1] = (1.0 - ai) * (yi - theta[1]);
      }
      out[2] = (theta[0] - theta[1]) - theta[2];
    };
  };
  const EstimatingFunctionSet efs({"mu1", "mu0", "psi"}, std::move(binder));
  return sandwich_fit(efs, data, ParameterVector({0.0, 0.0, 0.0}, efs.labels()), options);
}

FitResult run_estimator(const EstimatorEntry& entry, const Dataset& data,
                        const EstimateOptions& options) {
  if (!entry.spec) return naive_estimate(data, ColumnRoles{}, options.solver);
  return estimate(*entry.spec, data, options);
}

std::vector<EstimatorEntry> default_estimators(DgmCase which) {
  if (which == DgmCase::case1) {
    return {
        {"naive", std::nullopt},
        {"standard", gcomp_spec(Variant::standard, "1,A,X")},
        {"modified", gcomp_spec(Variant::modified, "1,A,X")},
    };
  }
  return {
      {"naive", std::nullopt},
      {"standard-z", gcomp_spec(Variant::standard, "1,A,Z")},
      {"standard-x", gcomp_spec(Variant::standard, "1,A,X")},
      {"standard-xz", gcomp_spec(Variant::standard, "1,A,Z,X")},
      {"iterated", gcomp_spec(Variant::iterated, "1,A,Z,X,A*Z", "1,A,Z,A*Z")},
  };
}

EstimatorEntry estimator_by_name(DgmCase which, const std::string& name) {
  for (auto& e : default_estimators(which)) {
    if (e.name == name) return e;
  }
  throw std::invalid_argument("unknown estimator '" + name + "' for case " +
                              std::to_string(static_cast<int>(which)));
}

EstimatorSummary summarize(const std::string& name, std::span<const ReplicateEstimate> reps,
                           double truth) {
  EstimatorSummary out;
  out.name = name;
  out.truth = truth;
  double sum = 0.0, se_sum = 0.0;
  std::size_t covered = 0;
  for (const auto& r : reps) {
    if (!r.ok) {
      ++out.n_failures;
      continue;
    }
    ++out.n_reps;
    sum += r.psi;
    se_sum += r.se;
    covered += (r.lower <= truth && truth <= r.upper);
    out.max_residual = std::max(out.max_residual, r.residual);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (out.n_reps == 0) {
    out.bias = out.ese = out.ser = out.coverage = nan;
  } else {
    const double m = static_cast<double>(out.n_reps);
    const double mean = sum / m;
    out.bias = mean - truth;
    out.coverage = static_cast<double>(covered) / m;
    if (out.n_reps >= 2) {
      double ss = 0.0;
      for (const auto& r : reps) {
        if (r.ok) ss += (r.psi - mean) * (r.psi - mean);
      }
      out.ese = std::sqrt(ss / (m - 1.0));
      out.ser = (se_sum / m) / out.ese;
    } else {
      out.ese = out.ser = nan;
    }
  }
  out.flagged = static_cast<double>(out.n_failures) > 0.01 * static_cast<double>(reps.size());
  return out;
}

std::uint64_t replication_seed(std::uint64_t seed, std::size_t r) {
  return rng::derive_seed(rng::mix64(seed ^ 0x5ca1ab1e0ddba11ULL), r);
}

double cached_true_psi(DgmCase which, std::size_t n, std::uint64_t seed) {
  static std::mutex mutex;
  static std::map<std::tuple<int, std::size_t, std::uint64_t>, double> cache;
  const auto key = std::make_tuple(static_cast<int>(which), n, seed);
  std::lock_guard lock(mutex);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const double psi = true_psi(DgmSpec{which, n, seed}).psi;
  cache.emplace(key, psi);
  return psi;
}

SimulationReport run_study(const StudyConfig& config) {
  if (config.reps < 2) throw std::invalid_argument("run_study: reps must be >= 2");
  const auto estimators =
      config.estimators.empty() ? default_estimators(config.which) : config.estimators;

  SimulationReport report;
  report.which = config.which;
  report.n = config.n;
  report.reps = config.reps;
  report.seed = config.seed;
  report.truth = config.truth ? *config.truth
                              : cached_true_psi(config.which, config.truth_n, config.truth_seed);

  const std::size_t n_est = estimators.size();
  std::vector<ReplicateEstimate> results(config.reps * n_est);
  std::vector<std::exception_ptr> errors(config.reps);
  const int threads = config.threads > 0 ? config.threads : omp_get_max_threads();
  const auto reps = static_cast<std::ptrdiff_t>(config.reps);

#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t r = 0; r < reps; ++r) {
    const auto rr = static_cast<std::size_t>(r);
    try {
      const Dataset data = generate(DgmSpec{config.which, config.n, replication_seed(config.seed, rr)});
      for (std::size_t e = 0; e < n_est; ++e) {
        ReplicateEstimate& slot = results[rr * n_est + e];
        try {
          const FitResult fit = run_estimator(estimators[e], data, config.estimate);
          const std::size_t j = fit.theta_hat.size() - 1;  // psi is last
          slot.ok = true;
          slot.psi = fit.theta_hat[j];
          slot.se = fit.std_errors[j];
          slot.lower = fit.ci_lower[j];
          slot.upper = fit.ci_upper[j];
          slot.residual = fit.residual_norm;
        } catch (const StackestError&) {
          slot.ok = false;
        }
      }
    } catch (...) {
      errors[rr] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<ReplicateEstimate> column(config.reps);
  for (std::size_t e = 0; e < n_est; ++e) {
    for (std::size_t r = 0; r < config.reps; ++r) column[r] = results[r * n_est + e];
    report.rows.push_back(summarize(estimators[e].name, column, report.truth));
    if (report.rows.back().flagged) {
      report.warnings.push_back("estimator '" + estimators[e].name + "' failed in " +
                                std::to_string(report.rows.back().n_failures) + " of " +
                                std::to_string(config.reps) + " replications (> 1%)");
    }
  }
  if (config.reps < kSmallReps) {
    report.warnings.insert(report.warnings.begin(),
                           "only " + std::to_string(config.reps) +
                               " replications; Monte Carlo error in every metric is large");
  }
  return report;
}

std::string format_table(const SimulationReport& report) {
  std::ostringstream out;
  out << "# case " << static_cast<int>(report.which) << ", n = " << report.n
      << ", reps = " << report.reps << ", seed = " << report.seed
      << ", truth = " << fixed6(report.truth) << '\n';
  for (const auto& w : report.warnings) out << "# warning: " << w << '\n';
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %10s %10s %10s %10s %7s %8s\n", "estimator", "Bias",
                "ESE", "SER", "Coverage", "n_reps", "failures");
  out << line;
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof line, "%-14s %10s %10s %10s %10s %7zu %8zu\n", r.name.c_str(),
                  fixed6(r.bias).c_str(), fixed6(r.ese).c_str(), fixed6(r.ser).c_str(),
                  fixed6(r.coverage).c_str(), r.n_reps, r.n_failures);
    out << line;
  }
  return out.str();
}

std::string format_csv(const SimulationReport& report) {
  std::ostringstream out;
  out << "case,n,reps,seed,estimator,bias,ese,ser,coverage,n_reps,n_failures,truth,max_residual,"
         "flagged\n";
  for (const auto& r : report.rows) {
    out << static_cast<int>(report.which) << ',' << report.n << ',' << report.reps << ','
        << report.seed << ',' << r.name << ',' << csv::format_number(r.bias) << ','
        << csv::format_number(r.ese) << ',' << csv::format_number(r.ser) << ','
        << csv::format_number(r.coverage) << ',' << r.n_reps << ',' << r.n_failures << ','
        << csv::format_number(r.truth) << ',' << csv::format_number(r.max_residual) << ','
        << (r.flagged ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string format_json_lines(const SimulationReport& report) {
  std::ostringstream out;
  for (const auto& r : report.rows) {
    nlohmann::json j = {
        {"case", static_cast<int>(report.which)},
        {"n", report.n},
        {"reps", report.reps},
        {"seed", report.seed},
        {"estimator", r.name},
        {"bias", r.bias},
        {"ese", r.ese},
        {"ser", r.ser},
        {"coverage", r.coverage},
        {"n_reps", r.n_reps},
        {"n_failures", r.n_failures},
        {"truth", r.truth},
        {"max_residual", r.max_residual},
        {"flagged", r.flagged},
        {"warnings", report.warnings},
    };
    out << j.dump() << '\n';
  }
  return out.str();
}

}  // namespace stackest
