#include "stackest/dgm.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "stackest/glm.hpp"
#include "stackest/random.hpp"

namespace stackest {
namespace {

const double kLog2 = std::numbers::ln2;
const double kLog4 = 2.0 * std::numbers::ln2;

struct Unit {
  double a = 0, u = 0, x = 0, s = 0;  // case 1 uses a, u, x, s
  double u1 = 0, u2 = 0, z = 0;       // case 2 extras
  double y_draw = 0;                  // uniform behind the outcome
};

double outcome_probability(const DgmSpec& spec, const Unit& unit, double a) {
  if (spec.null_effect) a = 0.0;
  if (spec.which == DgmCase::case1) return expit(0.5 + 0.75 * unit.u - a);
  const double z = unit.z;
  const double treatment_terms = spec.parsing == OutcomeParsing::main_effect
                                     ? -2.0 * a + kLog2 * a * z
                                     : -2.0 * a * kLog2 * z + kLog2 * a * z;
  const double z_term = spec.parsing == OutcomeParsing::main_effect ? kLog2 * z : 0.0;
  return expit(-2.0 + treatment_terms + z_term + kLog4 * unit.u2);
}

Unit draw_unit(const DgmSpec& spec, rng::Stream& stream) {
  Unit unit;
  if (spec.which == DgmCase::case1) {
    unit.a = stream.bernoulli(0.5);
    unit.u = stream.normal();
    unit.x = stream.normal(-1.0 + 2.0 * unit.a + unit.u, 1.0);
    unit.s = stream.bernoulli(expit(2.0 - unit.x));
  } else {
    unit.u1 = stream.bernoulli(0.5);
    unit.u2 = stream.bernoulli(0.5);
    unit.z = stream.bernoulli(0.5);
    unit.a = stream.bernoulli(expit(-2.3 + kLog2 * unit.z + kLog4 * unit.u1));
    unit.x = stream.normal(4.0 * unit.u1 - 4.0 * unit.u2, 1.0);
    unit.s = stream.bernoulli(expit(0.25 * unit.x));
  }
  unit.y_draw = stream.uniform();
  return unit;
}

// Calls fn(row, unit) for every row; blocks run in parallel.
template <class Fn>
void for_each_unit(const DgmSpec& spec, Fn&& fn) {
  const auto blocks = static_cast<std::ptrdiff_t>((spec.n + kRowsPerStream - 1) / kRowsPerStream);
#pragma omp parallel for schedule(static) if (blocks > 1)
  for (std::ptrdiff_t b = 0; b < blocks; ++b) {
    rng::Stream stream(rng::derive_seed(spec.seed, static_cast<std::uint64_t>(b)));
    const std::size_t begin = static_cast<std::size_t>(b) * kRowsPerStream;
    const std::size_t end = std::min(spec.n, begin + kRowsPerStream);
    for (std::size_t i = begin; i < end; ++i) fn(i, draw_unit(spec, stream));
  }
}

void check(const DgmSpec& spec) {
  if (spec.n < 1) throw std::invalid_argument("dgm: n must be >= 1");
  if (spec.which != DgmCase::case1 && spec.which != DgmCase::case2) {
    throw std::invalid_argument("dgm: unknown case");
  }
}

}  // namespace

Dataset generate(const DgmSpec& spec) {
  check(spec);
  const std::size_t n = spec.n;
  std::vector<double> a(n), u(n), x(n), s(n), y(n), u1(n), u2(n), z(n);
  std::vector<std::uint8_t> y_observed(n);
  for_each_unit(spec, [&](std::size_t i, const Unit& unit) {
    a[i] = unit.a;
    u[i] = unit.u;
    x[i] = unit.x;
    s[i] = unit.s;
    u1[i] = unit.u1;
    u2[i] = unit.u2;
    z[i] = unit.z;
    y_observed[i] = unit.s != 0.0;
    y[i] = y_observed[i] ? static_cast<double>(unit.y_draw < outcome_probability(spec, unit, unit.a))
                         : 0.0;
  });

  Dataset data;
  if (spec.which == DgmCase::case1) {
    data.add_column(Column("A", std::move(a)));
    data.add_column(Column("U", std::move(u)));
    data.add_column(Column("X", std::move(x)));
  } else {
    data.add_column(Column("U1", std::move(u1)));
    data.add_column(Column("U2", std::move(u2)));
    data.add_column(Column("Z", std::move(z)));
    data.add_column(Column("A", std::move(a)));
    data.add_column(Column("X", std::move(x)));
  }
  data.add_column(Column("S", std::move(s)));
  data.add_column(Column("Y", std::move(y), std::move(y_observed)));
  return data;
}

PotentialOutcomes potential_outcomes(const DgmSpec& spec) {
  check(spec);
  PotentialOutcomes po{std::vector<std::uint8_t>(spec.n), std::vector<std::uint8_t>(spec.n)};
  for_each_unit(spec, [&](std::size_t i, const Unit& unit) {
    po.y1[i] = unit.y_draw < outcome_probability(spec, unit, 1.0);
    po.y0[i] = unit.y_draw < outcome_probability(spec, unit, 0.0);
  });
  return po;
}

TruthEstimate true_psi(const DgmSpec& spec) {
  check(spec);
  const auto blocks = (spec.n + kRowsPerStream - 1) / kRowsPerStream;
  // Integer tallies per block keep the result independent of thread count.
  std::vector<std::int64_t> diff_sum(blocks, 0);
  std::vector<std::int64_t> discordant(blocks, 0);
  for_each_unit(spec, [&](std::size_t i, const Unit& unit) {
    const int y1 = unit.y_draw < outcome_probability(spec, unit, 1.0);
    const int y0 = unit.y_draw < outcome_probability(spec, unit, 0.0);
    const std::size_t b = i / kRowsPerStream;
    diff_sum[b] += y1 - y0;
    discordant[b] += y1 != y0;
  });
  std::int64_t total = 0;
  std::int64_t squares = 0;
  for (std::size_t b = 0; b < blocks; ++b) {
    total += diff_sum[b];
    squares += discordant[b];
  }
  const double n = static_cast<double>(spec.n);
  TruthEstimate t;
  t.n = spec.n;
  t.psi = static_cast<double>(total) / n;
  if (spec.n > 1) {
    const double var = (static_cast<double>(squares) - n * t.psi * t.psi) / (n - 1.0);
    t.mc_se = std::sqrt(std::max(0.0, var) / n);
  }
  return t;
}

std::string outcome_model_description(const DgmSpec& spec) {
  std::string text;
  if (spec.which == DgmCase::case1) {
    text = spec.null_effect ? "expit(0.5+0.75U)" : "expit(0.5+0.75U-A)";
  } else if (spec.null_effect) {
    text = spec.parsing == OutcomeParsing::main_effect ? "expit(-2+log(2)Z+log(4)U2)"
                                                       : "expit(-2+log(4)U2)";
  } else {
    text = spec.parsing == OutcomeParsing::main_effect
               ? "expit(-2-2A+log(2)Z+log(2)AZ+log(4)U2)"
               : "expit(-2-2A*log(2)*Z+log(2)AZ+log(4)U2)";
  }
  return text;
}

}  // namespace stackest
