#include "stackest/glm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "stackest/errors.hpp"

namespace stackest {
namespace {

constexpr std::size_t kMaxDesignWidth = 64;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

bool valid_name(const std::string& name) {
  return !name.empty() && name != "1" && name.find_first_of("*, \t") == std::string::npos;
}

}  // namespace

// Clamped one ulp inside (0, 1) so saturated predictions never reach the
// boundary; the shift is below double resolution of the unclamped value.
double expit(double x) noexcept {
  constexpr double kTop = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  constexpr double kBottom = std::numeric_limits<double>::denorm_min();
  if (std::isnan(x)) return x;
  if (x >= 0.0) return std::min(1.0 / (1.0 + std::exp(-x)), kTop);
  const double e = std::exp(x);
  return std::max(e / (1.0 + e), kBottom);
}

double inverse_link(Link link, double eta) noexcept {
  return link == Link::logit ? expit(eta) : eta;
}

std::string_view to_string(Link link) noexcept {
  return link == Link::logit ? "logit" : "identity";
}

Link parse_link(std::string_view text) {
  if (text == "logit") return Link::logit;
  if (text == "identity") return Link::identity;
  throw ParseError("unknown link '" + std::string(text) + "'");
}

std::string Term::label() const {
  switch (kind) {
    case Kind::intercept:
      return "1";
    case Kind::column:
      return first;
    case Kind::interaction:
      return first + "*" + second;
  }
  return {};
}

DesignSpec::DesignSpec(std::vector<Term> terms) : terms_(std::move(terms)) {
  if (terms_.empty()) throw std::invalid_argument("design needs at least one term");
  if (terms_.size() > kMaxDesignWidth) throw std::invalid_argument("design is too wide");
  std::size_t intercepts = 0;
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    const Term& t = terms_[i];
    if (t.kind == Term::Kind::intercept) ++intercepts;
    if (t.kind != Term::Kind::intercept && !valid_name(t.first)) {
      throw std::invalid_argument("invalid column name '" + t.first + "' in design");
    }
    if (t.kind == Term::Kind::interaction && !valid_name(t.second)) {
      throw std::invalid_argument("invalid column name '" + t.second + "' in design");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (terms_[j] == t) throw std::invalid_argument("duplicate design term '" + t.label() + "'");
    }
  }
  if (intercepts > 1) throw std::invalid_argument("design has more than one intercept");
}

DesignSpec DesignSpec::parse(std::string_view text) {
  std::vector<Term> terms;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = trim(text.substr(start, comma == std::string_view::npos ? text.size() - start
                                                                               : comma - start));
    if (piece.empty()) throw ParseError("design: empty term in '" + std::string(text) + "'");
    if (piece == "1") {
      terms.push_back(Term::intercept());
    } else if (auto star = piece.find('*'); star != std::string::npos) {
      auto a = trim(std::string_view(piece).substr(0, star));
      auto b = trim(std::string_view(piece).substr(star + 1));
      if (!valid_name(a) || !valid_name(b)) {
        throw ParseError("design: bad interaction '" + piece + "'");
      }
      terms.push_back(Term::interaction(std::move(a), std::move(b)));
    } else {
      if (!valid_name(piece)) throw ParseError("design: bad term '" + piece + "'");
      terms.push_back(Term::column(piece));
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  try {
    return DesignSpec(std::move(terms));
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("design: ") + e.what());
  }
}

std::vector<std::string> DesignSpec::labels() const {
  std::vector<std::string> out;
  out.reserve(terms_.size());
  for (const auto& t : terms_) out.push_back(t.label());
  return out;
}

std::string DesignSpec::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (i) out += ',';
    out += terms_[i].label();
  }
  return out;
}

std::vector<std::string> DesignSpec::columns() const {
  std::vector<std::string> out;
  auto add = [&](const std::string& name) {
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  };
  for (const auto& t : terms_) {
    if (t.kind != Term::Kind::intercept) add(t.first);
    if (t.kind == Term::Kind::interaction) add(t.second);
  }
  return out;
}

BoundDesign::BoundDesign(const DesignSpec& spec, const Dataset& data, const Overrides& overrides) {
  for (const auto& [name, value] : overrides) {
    if (!data.has_column(name)) throw UnknownColumn(name);
  }
  auto factor = [&](const std::string& name) {
    Factor f;
    if (auto it = overrides.find(name); it != overrides.end()) {
      f.constant = it->second;
    } else {
      f.column = &data.column(name);
    }
    return f;
  };
  terms_.reserve(spec.width());
  for (const auto& t : spec.terms()) {
    BoundTerm bt;
    if (t.kind != Term::Kind::intercept) bt.a = factor(t.first);
    if (t.kind == Term::Kind::interaction) bt.b = factor(t.second);
    terms_.push_back(bt);
  }
}

void BoundDesign::row(std::size_t i, std::span<double> out) const {
  for (std::size_t j = 0; j < terms_.size(); ++j) {
    out[j] = terms_[j].a.at(i) * terms_[j].b.at(i);
  }
}

Eigen::MatrixXd expand_design(const Dataset& data, const DesignSpec& spec,
                              const Overrides& overrides) {
  const BoundDesign bound(spec, data, overrides);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.rows()), static_cast<Eigen::Index>(spec.width()));
  std::array<double, kMaxDesignWidth> buf{};
  for (std::size_t i = 0; i < data.rows(); ++i) {
    bound.row(i, std::span<double>(buf.data(), spec.width()));
    for (std::size_t j = 0; j < spec.width(); ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = buf[j];
    }
  }
  return x;
}

double linear_predict(Link link, std::span<const double> x,
                      std::span<const double> coef) noexcept {
  double eta = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) eta += x[j] * coef[j];
  return inverse_link(link, eta);
}

void score_contribution(Link link, std::span<const double> x, double y,
                        std::span<const double> coef, double w, std::span<double> out) noexcept {
  const double r = w * (y - linear_predict(link, x, coef));
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = r * x[j];
}

EstimatingFunctionSet score_function(const OutcomeModel& model,
                                     const std::optional<std::string>& restrict_to) {
  std::vector<std::string> labels;
  for (const auto& l : model.design.labels()) labels.push_back("coef_" + l);
  auto binder = [model, restrict_to](const Dataset& data) -> RowFunction {
    BoundDesign design(model.design, data);
    const Column* response = &data.column(model.response);
    const Column* restriction = restrict_to ? &data.column(*restrict_to) : nullptr;
    if (restriction) require_binary(*restriction);
    const Link link = model.link;
    const std::size_t p = model.design.width();
    return [design = std::move(design), response, restriction, link, p](
               std::size_t i, std::span<const double> theta, std::span<double> out) {
      if (restriction && restriction->raw()[i] == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
      }
      if (!response->observed(i)) {
        throw MissingOutcomeRead("outcome '" + response->name() + "' missing on contributing row " +
                                 std::to_string(i));
      }
      std::array<double, kMaxDesignWidth> x;
      design.row(i, std::span<double>(x.data(), p));
      score_contribution(link, std::span<const double>(x.data(), p), response->raw()[i], theta,
                         1.0, out);
    };
  };
  return EstimatingFunctionSet(std::move(labels), std::move(binder));
}

std::vector<double> predict(const OutcomeModel& model, const Dataset& data,
                            const Overrides& overrides) {
  if (model.coef.size() != model.design.width()) {
    throw std::invalid_argument("predict: coefficient count does not match the design");
  }
  const BoundDesign design(model.design, data, overrides);
  std::vector<double> out(data.rows());
  std::array<double, kMaxDesignWidth> x;
  const std::size_t p = model.design.width();
  for (std::size_t i = 0; i < data.rows(); ++i) {
    design.row(i, std::span<double>(x.data(), p));
    out[i] = linear_predict(model.link, std::span<const double>(x.data(), p), model.coef);
  }
  return out;
}

OutcomeModel fit_outcome_model(OutcomeModel model, const Dataset& data,
                               const std::optional<std::string>& restrict_to,
                               const SolverOptions& options) {
  const auto efs = score_function(model, restrict_to);
  const ParameterVector init(std::vector<double>(model.design.width(), 0.0), efs.labels());
  const ParameterVector root = solve_root(efs, data, init, options);
  model.coef.assign(root.values().begin(), root.values().end());
  return model;
}

}  // namespace stackest
