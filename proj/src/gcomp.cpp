#include "stackest/gcomp.hpp"

#include <array>
#include <stdexcept>

#include "stackest/errors.hpp"

namespace stackest {
namespace {

constexpr std::size_t kMaxWidth = 64;
using Buffer = std::array<double, kMaxWidth>;

std::vector<std::string> prefixed(const std::string& prefix, const DesignSpec& design) {
  std::vector<std::string> out;
  for (const auto& l : design.labels()) out.push_back(prefix + l);
  return out;
}

const Column* outcome_for_row(const Column* outcome, std::size_t i) {
  if (!outcome->observed(i)) {
    throw MissingOutcomeRead("outcome '" + outcome->name() + "' missing on selected row " +
                             std::to_string(i));
  }
  return outcome;
}

// Outcome model bound three ways: observed design, A := 1 and A := 0.
struct BoundOutcomeModel {
  BoundOutcomeModel(const EstimatorSpec& spec, const DesignSpec& design, const Dataset& data)
      : observed(design, data),
        treated(design, data, {{spec.roles.treatment, 1.0}}),
        untreated(design, data, {{spec.roles.treatment, 0.0}}),
        width(design.width()) {}

  BoundDesign observed;
  BoundDesign treated;
  BoundDesign untreated;
  std::size_t width;

  double predict(const BoundDesign& d, Link link, std::size_t i,
                 std::span<const double> coef) const {
    Buffer x;
    d.row(i, std::span<double>(x.data(), width));
    return linear_predict(link, std::span<const double>(x.data(), width), coef);
  }
};

// Stack for the standard and modified variants. With `arm_restricted`, the
// mean for arm a only averages rows with A = a.
EstimatingFunctionSet build_single_stage(const EstimatorSpec& spec, bool arm_restricted) {
  auto binder = [spec, arm_restricted](const Dataset& data) -> RowFunction {
    BoundOutcomeModel model(spec, spec.outcome_design, data);
    const Column* y = &data.column(spec.roles.outcome);
    const Column* a = &data.column(spec.roles.treatment);
    const Column* s = &data.column(spec.roles.selection);
    const Link link = spec.outcome_link;
    return [model = std::move(model), y, a, s, link, arm_restricted](
               std::size_t i, std::span<const double> theta, std::span<double> out) {
      const std::size_t p = model.width;
      const auto beta = theta.first(p);
      if (s->raw()[i] != 0.0) {
        Buffer x;
        model.observed.row(i, std::span<double>(x.data(), p));
        score_contribution(link, std::span<const double>(x.data(), p),
                           outcome_for_row(y, i)->raw()[i], beta, 1.0, out.first(p));
      } else {
        std::fill_n(out.begin(), p, 0.0);
      }
      const double mu1 = theta[p];
      const double mu0 = theta[p + 1];
      const double psi = theta[p + 2];
      const double w1 = arm_restricted ? a->raw()[i] : 1.0;
      const double w0 = arm_restricted ? 1.0 - a->raw()[i] : 1.0;
      out[p] = w1 * (model.predict(model.treated, link, i, beta) - mu1);
      out[p + 1] = w0 * (model.predict(model.untreated, link, i, beta) - mu0);
      out[p + 2] = (mu1 - mu0) - psi;
    };
  };
  return EstimatingFunctionSet(spec.parameter_labels(), std::move(binder));
}

double complete_case_mean(const EstimatorSpec& spec, const Dataset& data) {
  const Column& y = data.column(spec.roles.outcome);
  const Column& s = data.column(spec.roles.selection);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (s.raw()[i] != 0.0 && y.observed(i)) {
      sum += y.raw()[i];
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::standard:
      return "standard";
    case Variant::modified:
      return "modified";
    case Variant::iterated:
      return "iterated";
  }
  return {};
}

Variant parse_variant(std::string_view text) {
  if (text == "standard") return Variant::standard;
  if (text == "modified") return Variant::modified;
  if (text == "iterated") return Variant::iterated;
  throw std::invalid_argument("unknown estimator variant '" + std::string(text) + "'");
}

void EstimatorSpec::validate() const {
  if (outcome_design.width() == 0) throw std::invalid_argument("outcome design is empty");
  if (variant == Variant::iterated && !second_stage_design) {
    throw std::invalid_argument("iterated estimator requires a second-stage design");
  }
  if (variant != Variant::iterated && second_stage_design) {
    throw std::invalid_argument("only the iterated estimator takes a second-stage design");
  }
  if (second_stage_design && second_stage_design->width() == 0) {
    throw std::invalid_argument("second-stage design is empty");
  }
}

std::vector<std::string> EstimatorSpec::parameter_labels() const {
  auto labels = prefixed("beta_", outcome_design);
  if (variant == Variant::iterated) {
    for (auto& l : prefixed("gamma1_", *second_stage_design)) labels.push_back(std::move(l));
    for (auto& l : prefixed("gamma0_", *second_stage_design)) labels.push_back(std::move(l));
  }
  labels.insert(labels.end(), {"mu1", "mu0", "psi"});
  return labels;
}

EstimatingFunctionSet build_standard(const EstimatorSpec& spec) {
  spec.validate();
  if (spec.variant != Variant::standard) throw std::invalid_argument("spec is not 'standard'");
  return build_single_stage(spec, false);
}

EstimatingFunctionSet build_modified(const EstimatorSpec& spec) {
  spec.validate();
  if (spec.variant != Variant::modified) throw std::invalid_argument("spec is not 'modified'");
  return build_single_stage(spec, true);
}

EstimatingFunctionSet build_iterated(const EstimatorSpec& spec) {
  spec.validate();
  if (spec.variant != Variant::iterated) throw std::invalid_argument("spec is not 'iterated'");
  auto binder = [spec](const Dataset& data) -> RowFunction {
    BoundOutcomeModel first(spec, spec.outcome_design, data);
    BoundOutcomeModel second(spec, *spec.second_stage_design, data);
    const Column* y = &data.column(spec.roles.outcome);
    const Column* s = &data.column(spec.roles.selection);
    const bool second_all = spec.second_stage_rows == SecondStageRows::all;
    const Link link1 = spec.outcome_link;
    const Link link2 = spec.second_stage_link;
    return [first = std::move(first), second = std::move(second), y, s, second_all, link1, link2](
               std::size_t i, std::span<const double> theta, std::span<double> out) {
      const std::size_t p = first.width;
      const std::size_t q = second.width;
      const auto beta = theta.first(p);
      const auto gamma1 = theta.subspan(p, q);
      const auto gamma0 = theta.subspan(p + q, q);
      const double mu1 = theta[p + 2 * q];
      const double mu0 = theta[p + 2 * q + 1];
      const double psi = theta[p + 2 * q + 2];
      const bool selected = s->raw()[i] != 0.0;

      if (selected) {
        Buffer x;
        first.observed.row(i, std::span<double>(x.data(), p));
        score_contribution(link1, std::span<const double>(x.data(), p),
                           outcome_for_row(y, i)->raw()[i], beta, 1.0, out.first(p));
      } else {
        std::fill_n(out.begin(), p, 0.0);
      }

      Buffer v;
      second.observed.row(i, std::span<double>(v.data(), q));
      const std::span<const double> v_row(v.data(), q);
      const double w = (second_all || selected) ? 1.0 : 0.0;

      const double yhat1 = first.predict(first.treated, link1, i, beta);
      score_contribution(link2, v_row, yhat1, gamma1, w, out.subspan(p, q));
      const double yhat0 = first.predict(first.untreated, link1, i, beta);
      score_contribution(link2, v_row, yhat0, gamma0, w, out.subspan(p + q, q));

      out[p + 2 * q] = second.predict(second.treated, link2, i, gamma1) - mu1;
      out[p + 2 * q + 1] = second.predict(second.untreated, link2, i, gamma0) - mu0;
      out[p + 2 * q + 2] = (mu1 - mu0) - psi;
    };
  };
  return EstimatingFunctionSet(spec.parameter_labels(), std::move(binder));
}

EstimatingFunctionSet build_estimating_functions(const EstimatorSpec& spec) {
  switch (spec.variant) {
    case Variant::standard:
      return build_standard(spec);
    case Variant::modified:
      return build_modified(spec);
    case Variant::iterated:
      return build_iterated(spec);
  }
  throw std::invalid_argument("unknown variant");
}

EstimatingFunctionSet build_plugin_means(const EstimatorSpec& spec,
                                         std::vector<double> outcome_coef) {
  spec.validate();
  if (spec.variant == Variant::iterated) {
    throw std::invalid_argument("plug-in means are defined for standard and modified only");
  }
  if (outcome_coef.size() != spec.outcome_design.width()) {
    throw std::invalid_argument("plug-in coefficients do not match the outcome design");
  }
  const bool arm_restricted = spec.variant == Variant::modified;
  auto binder = [spec, arm_restricted, coef = std::move(outcome_coef)](const Dataset& data) -> RowFunction {
    BoundOutcomeModel model(spec, spec.outcome_design, data);
    const Column* a = &data.column(spec.roles.treatment);
    const Link link = spec.outcome_link;
    return [model = std::move(model), a, link, coef, arm_restricted](
               std::size_t i, std::span<const double> theta, std::span<double> out) {
      const double w1 = arm_restricted ? a->raw()[i] : 1.0;
      const double w0 = arm_restricted ? 1.0 - a->raw()[i] : 1.0;
      out[0] = w1 * (model.predict(model.treated, link, i, coef) - theta[0]);
      out[1] = w0 * (model.predict(model.untreated, link, i, coef) - theta[1]);
      out[2] = (theta[0] - theta[1]) - theta[2];
    };
  };
  return EstimatingFunctionSet({"mu1", "mu0", "psi"}, std::move(binder));
}

ParameterVector initial_parameters(const EstimatorSpec& spec, const Dataset& data) {
  spec.validate();
  auto labels = spec.parameter_labels();
  std::vector<double> values(labels.size(), 0.0);
  const double ybar = complete_case_mean(spec, data);
  values[values.size() - 3] = ybar;
  values[values.size() - 2] = ybar;
  return ParameterVector(std::move(values), std::move(labels));
}

ParameterVector sequential_presolve(const EstimatorSpec& spec, const Dataset& data,
                                    const SolverOptions& options) {
  spec.validate();
  OutcomeModel outcome{spec.outcome_link, spec.outcome_design, spec.roles.outcome, {}};
  outcome = fit_outcome_model(outcome, data, spec.roles.selection, options);

  std::vector<double> values = outcome.coef;
  const auto yhat1 = predict(outcome, data, {{spec.roles.treatment, 1.0}});
  const auto yhat0 = predict(outcome, data, {{spec.roles.treatment, 0.0}});
  const Column& a = data.column(spec.roles.treatment);

  double mu1 = 0.0;
  double mu0 = 0.0;
  if (spec.variant == Variant::iterated) {
    const Column& s = data.column(spec.roles.selection);
    const bool all = spec.second_stage_rows == SecondStageRows::all;
    std::vector<double> stage_coef[2];
    const std::vector<double>* targets[2] = {&yhat1, &yhat0};
    for (int arm = 0; arm < 2; ++arm) {
      Dataset augmented = data;
      const std::string pseudo = "__pseudo_outcome";
      std::vector<std::uint8_t> mask(data.rows(), 1);
      if (!all) {
        for (std::size_t i = 0; i < data.rows(); ++i) mask[i] = s.raw()[i] != 0.0;
      }
      augmented.add_column(Column(pseudo, *targets[arm], mask));
      OutcomeModel stage{spec.second_stage_link, *spec.second_stage_design, pseudo, {}};
      stage = fit_outcome_model(stage, augmented,
                                all ? std::nullopt : std::optional<std::string>(spec.roles.selection),
                                options);
      stage_coef[arm] = stage.coef;
      const auto tilde = predict(stage, data, {{spec.roles.treatment, arm == 0 ? 1.0 : 0.0}});
      double sum = 0.0;
      for (double t : tilde) sum += t;
      (arm == 0 ? mu1 : mu0) = sum / static_cast<double>(data.rows());
    }
    values.insert(values.end(), stage_coef[0].begin(), stage_coef[0].end());
    values.insert(values.end(), stage_coef[1].begin(), stage_coef[1].end());
  } else {
    const bool arm_restricted = spec.variant == Variant::modified;
    double sum1 = 0.0, sum0 = 0.0, n1 = 0.0, n0 = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
      const double w1 = arm_restricted ? a.raw()[i] : 1.0;
      const double w0 = arm_restricted ? 1.0 - a.raw()[i] : 1.0;
      sum1 += w1 * yhat1[i];
      sum0 += w0 * yhat0[i];
      n1 += w1;
      n0 += w0;
    }
    mu1 = sum1 / n1;
    mu0 = sum0 / n0;
  }
  values.insert(values.end(), {mu1, mu0, mu1 - mu0});
  return ParameterVector(std::move(values), spec.parameter_labels());
}

void check_roles(const ColumnRoles& roles, const Dataset& data) {
  const Column& a = data.column(roles.treatment);
  const Column& s = data.column(roles.selection);
  const Column& y = data.column(roles.outcome);
  require_binary(a);
  require_binary(s);
  std::size_t arm_rows[2] = {0, 0};
  std::size_t arm_selected[2] = {0, 0};
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const int arm = a.raw()[i] != 0.0 ? 1 : 0;
    ++arm_rows[arm];
    if (s.raw()[i] != 0.0) {
      if (!y.observed(i)) {
        throw MissingOutcomeRead("outcome '" + roles.outcome + "' missing on selected row " +
                                 std::to_string(i));
      }
      ++arm_selected[arm];
    }
  }
  for (int arm = 0; arm < 2; ++arm) {
    if (arm_rows[arm] == 0 || arm_selected[arm] == 0) {
      throw EmptyArm("treatment arm " + std::to_string(arm) + " has no rows with an observed outcome");
    }
  }
}

FitResult estimate(const EstimatorSpec& spec, const Dataset& data, const EstimateOptions& options) {
  spec.validate();
  check_roles(spec.roles, data);
  const auto efs = build_estimating_functions(spec);
  if (options.presolve == Presolve::always) {
    return sandwich_fit(efs, data, sequential_presolve(spec, data, options.solver), options.solver);
  }
  try {
    return sandwich_fit(efs, data, initial_parameters(spec, data), options.solver);
  } catch (const NonConvergence&) {
    if (options.presolve == Presolve::never) throw;
  }
  return sandwich_fit(efs, data, sequential_presolve(spec, data, options.solver), options.solver);
}

}  // namespace stackest
