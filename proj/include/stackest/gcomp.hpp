#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stackest/dataset.hpp"
#include "stackest/glm.hpp"
#include "stackest/mest.hpp"

namespace stackest {

enum class Variant { standard, modified, iterated };

std::string_view to_string(Variant v) noexcept;
Variant parse_variant(std::string_view text);

// Rows used by the second-stage regression of the iterated estimator.
enum class SecondStageRows { all, selected };

struct ColumnRoles {
  std::string outcome = "Y";
  std::string treatment = "A";
  std::string selection = "S";
};

/// Configuration of one g-computation estimator.
///
/// Parameters are ordered (beta, [gamma1, gamma0,] mu1, mu0, psi), where beta
/// belongs to the outcome model fit among S = 1 rows and gamma_a to the
/// second-stage regression of the iterated variant.
struct EstimatorSpec {
  Variant variant = Variant::standard;
  Link outcome_link = Link::logit;
  DesignSpec outcome_design;
  std::optional<DesignSpec> second_stage_design;
  Link second_stage_link = Link::identity;
  SecondStageRows second_stage_rows = SecondStageRows::all;
  ColumnRoles roles;

  // Throws std::invalid_argument.
  void validate() const;
  std::vector<std::string> parameter_labels() const;
};

EstimatingFunctionSet build_standard(const EstimatorSpec& spec);
EstimatingFunctionSet build_modified(const EstimatorSpec& spec);
EstimatingFunctionSet build_iterated(const EstimatorSpec& spec);
EstimatingFunctionSet build_estimating_functions(const EstimatorSpec& spec);

// Mean and contrast functions only, theta = (mu1, mu0, psi), with the outcome
// model coefficients held fixed at `outcome_coef`. Standard and modified
// variants only. Treats the first stage as known; used for comparisons.
EstimatingFunctionSet build_plugin_means(const EstimatorSpec& spec,
                                         std::vector<double> outcome_coef);

enum class Presolve { never, always, on_failure };

struct EstimateOptions {
  SolverOptions solver;
  Presolve presolve = Presolve::on_failure;
};

// Zero coefficients, complete-case outcome mean for mu1 and mu0, zero psi.
ParameterVector initial_parameters(const EstimatorSpec& spec, const Dataset& data);

// Fits each block in turn (outcome model, second stage, means, contrast). The
// result is a near-root of the full stack used to start Newton.
ParameterVector sequential_presolve(const EstimatorSpec& spec, const Dataset& data,
                                    const SolverOptions& options = {});

// Checks role columns: treatment and selection binary, and each arm has rows
// with an observed outcome. Throws EmptyArm or std::invalid_argument.
void check_roles(const ColumnRoles& roles, const Dataset& data);

FitResult estimate(const EstimatorSpec& spec, const Dataset& data,
                   const EstimateOptions& options = {});

}  // namespace stackest
