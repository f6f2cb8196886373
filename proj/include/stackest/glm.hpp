#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stackest/dataset.hpp"
#include "stackest/mest.hpp"

namespace stackest {

enum class Link { identity, logit };

// Inverse logit; strictly inside (0, 1) for every finite x.
double expit(double x) noexcept;
double inverse_link(Link link, double eta) noexcept;
std::string_view to_string(Link link) noexcept;
Link parse_link(std::string_view text);

/// One column of a design matrix.
struct Term {
  enum class Kind { intercept, column, interaction };

  Kind kind = Kind::intercept;
  std::string first;
  std::string second;

  static Term intercept() { return {}; }
  static Term column(std::string name) { return {Kind::column, std::move(name), {}}; }
  static Term interaction(std::string a, std::string b) {
    return {Kind::interaction, std::move(a), std::move(b)};
  }

  // "1", "A" or "A*Z".
  std::string label() const;
  bool operator==(const Term&) const = default;
};

/// Ordered list of design terms; the expansion follows this order.
class DesignSpec {
 public:
  DesignSpec() = default;
  explicit DesignSpec(std::vector<Term> terms);

  // Comma-separated terms: `1` is the intercept, `a*b` an interaction.
  // Throws ParseError.
  static DesignSpec parse(std::string_view text);

  std::size_t width() const noexcept { return terms_.size(); }
  const std::vector<Term>& terms() const noexcept { return terms_; }
  std::vector<std::string> labels() const;
  std::string to_string() const;
  // Column names referenced by any term.
  std::vector<std::string> columns() const;

  bool operator==(const DesignSpec&) const = default;

 private:
  std::vector<Term> terms_;
};

// Columns replaced by a constant during expansion, e.g. {"A", 1.0}.
using Overrides = std::map<std::string, double, std::less<>>;

/// A DesignSpec resolved against one dataset (and an optional set of
/// overrides), ready for fast row expansion.
class BoundDesign {
 public:
  BoundDesign(const DesignSpec& spec, const Dataset& data, const Overrides& overrides = {});

  std::size_t width() const noexcept { return terms_.size(); }
  void row(std::size_t i, std::span<double> out) const;

 private:
  struct Factor {
    const Column* column = nullptr;  // nullptr: use `constant`
    double constant = 1.0;
    double at(std::size_t i) const { return column ? column->value(i) : constant; }
  };
  struct BoundTerm {
    Factor a;
    Factor b;
  };
  std::vector<BoundTerm> terms_;
};

// n x p design matrix. Throws UnknownColumn.
Eigen::MatrixXd expand_design(const Dataset& data, const DesignSpec& spec,
                              const Overrides& overrides = {});

/// Regression model m(X; coef) for `response`.
struct OutcomeModel {
  Link link = Link::logit;
  DesignSpec design;
  std::string response = "Y";
  std::vector<double> coef;
};

// x . coef pushed through the inverse link.
double linear_predict(Link link, std::span<const double> x, std::span<const double> coef) noexcept;

// Writes w * [y - m(x; coef)] * x into `out` (length p).
void score_contribution(Link link, std::span<const double> x, double y,
                        std::span<const double> coef, double w, std::span<double> out) noexcept;

// Regression score fragment with theta = coef. With `restrict_to`, rows where
// that column is 0 contribute an exact zero vector and their response is not
// read; a missing response on a contributing row throws MissingOutcomeRead.
EstimatingFunctionSet score_function(const OutcomeModel& model,
                                     const std::optional<std::string>& restrict_to = {});

// m(X*_i; coef) for every row, X* being the design with `overrides` applied.
std::vector<double> predict(const OutcomeModel& model, const Dataset& data,
                            const Overrides& overrides = {});

// Solves the score fragment from coef = 0 and returns the fitted model.
OutcomeModel fit_outcome_model(OutcomeModel model, const Dataset& data,
                               const std::optional<std::string>& restrict_to = {},
                               const SolverOptions& options = {});

}  // namespace stackest
