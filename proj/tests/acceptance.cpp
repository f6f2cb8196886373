// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion with
// the measured values underneath; exits nonzero if any criterion fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracle/sequential_oracle.hpp"
#include "stackest/csv.hpp"
#include "stackest/dgm.hpp"
#include "stackest/errors.hpp"
#include "stackest/gcomp.hpp"
#include "stackest/mest.hpp"
#include "stackest/simharness.hpp"

namespace fs = std::filesystem;
using namespace stackest;

namespace {

const std::string kCli = STACKEST_CLI_PATH;
const std::string kFixtures = STACKEST_FIXTURE_DIR;

// Tolerances.
constexpr double kTruthTol = 0.005;
constexpr double kTruthSeconds = 120.0;
constexpr double kTable1Seconds = 600.0;
constexpr double kBiasTol = 0.010;
constexpr double kCoverageTol = 0.03;
constexpr double kSerLow = 0.95;
constexpr double kSerHigh = 1.06;
constexpr double kScalarSeTol = 1e-12;
constexpr double kOlsRelTol = 0.05;
constexpr double kResidualTol = 1e-9;
constexpr double kOracleTol = 1e-6;

constexpr std::size_t kStudyN = 1000;
constexpr std::size_t kStudyReps = 2000;
constexpr std::uint64_t kStudySeed = 1;

struct Check {
  std::string what;
  bool ok;
};

class Criterion {
 public:
  Criterion(int number, std::string title) : number_(number), title_(std::move(title)) {}

  void check(bool ok, std::string what) { checks_.push_back({std::move(what), ok}); }
  // Reported but never gating.
  void note(std::string what) { notes_.push_back(std::move(what)); }

  bool report() const {
    bool ok = !checks_.empty();
    for (const auto& c : checks_) ok = ok && c.ok;
    std::cout << "criterion " << number_ << " (" << title_ << "): " << (ok ? "PASS" : "FAIL")
              << '\n';
    for (const auto& c : checks_) {
      std::cout << "    [" << (c.ok ? "ok" : "FAIL") << "] " << c.what << '\n';
    }
    for (const auto& n : notes_) std::cout << "    [note] " << n << '\n';
    std::cout.flush();
    return ok;
  }

 private:
  int number_;
  std::string title_;
  std::vector<Check> checks_;
  std::vector<std::string> notes_;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Process {
  int status;
  std::string out;
};

Process run_command(const std::string& command) {
  Process p{-1, {}};
  FILE* pipe = ::popen(command.c_str(), "r");
  if (!pipe) return p;
  std::array<char, 4096> buf;
  std::size_t got;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) p.out.append(buf.data(), got);
  p.status = ::pclose(pipe);
  return p;
}

// --- criterion 1 -----------------------------------------------------------

bool truth_oracles() {
  Criterion c(1, "truth values at n = 1e7");
  const std::pair<int, double> targets[] = {{1, -0.219}, {2, -0.205}};
  for (const auto& [which, expected] : targets) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto p = run_command(kCli + " truth --case " + std::to_string(which) +
                               " --n 10000000 --format csv 2>&1");
    const double elapsed = seconds_since(t0);
    double psi = std::numeric_limits<double>::quiet_NaN();
    double mc_se = psi;
    if (p.status == 0) {
      std::istringstream in(p.out);
      std::string header, row;
      std::getline(in, header);
      std::getline(in, row);
      std::vector<std::string> f;
      std::stringstream ss(row);
      for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
      if (f.size() == 5) {
        psi = std::stod(f[3]);
        mc_se = std::stod(f[4]);
      }
    }
    c.check(std::abs(psi - expected) <= kTruthTol,
            fmt("case %d: psi = %.6f (mc se %.6f), target %.3f +- %.3f", which, psi, mc_se,
                expected, kTruthTol));
    c.check(elapsed < kTruthSeconds, fmt("case %d: %.1f s (< %.0f s)", which, elapsed, kTruthSeconds));
  }
  return c.report();
}

// --- criteria 2, 3 and 5 ---------------------------------------------------

struct Target {
  const char* name;
  double bias;
  double coverage;
};

struct StudyOutcome {
  SimulationReport report;
  double seconds = 0.0;
};

StudyOutcome run_table(DgmCase which) {
  StudyConfig config;
  config.which = which;
  config.n = kStudyN;
  config.reps = kStudyReps;
  config.seed = kStudySeed;
  const auto t0 = std::chrono::steady_clock::now();
  StudyOutcome out{run_study(config), 0.0};
  out.seconds = seconds_since(t0);
  return out;
}

void print_report(const SimulationReport& report) {
  std::istringstream in(format_table(report));
  for (std::string line; std::getline(in, line);) std::cout << "    | " << line << '\n';
}

const EstimatorSummary* find_row(const SimulationReport& report, const std::string& name) {
  for (const auto& r : report.rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

bool table_criterion(int number, const std::string& title, const StudyOutcome& study,
                     const std::vector<Target>& targets, const std::vector<std::string>& ser_rows,
                     double max_seconds) {
  Criterion c(number, title);
  print_report(study.report);
  for (const auto& t : targets) {
    const auto* row = find_row(study.report, t.name);
    if (!row) {
      c.check(false, std::string(t.name) + ": missing from report");
      continue;
    }
    c.check(std::abs(row->bias - t.bias) <= kBiasTol,
            fmt("%s bias %.4f, target %.3f +- %.3f", t.name, row->bias, t.bias, kBiasTol));
    c.check(std::abs(row->coverage - t.coverage) <= kCoverageTol + 1e-12,
            fmt("%s coverage %.1f%%, target %.0f%% +- %.0f", t.name, 100.0 * row->coverage,
                100.0 * t.coverage, 100.0 * kCoverageTol));
  }
  for (const auto& name : ser_rows) {
    const auto* row = find_row(study.report, name);
    const double ser = row ? row->ser : std::numeric_limits<double>::quiet_NaN();
    c.check(ser >= kSerLow && ser <= kSerHigh,
            fmt("%s SER %.3f in [%.2f, %.2f]", name.c_str(), ser, kSerLow, kSerHigh));
  }
  if (max_seconds > 0.0) {
    c.check(study.seconds < max_seconds, fmt("runtime %.1f s (< %.0f s)", study.seconds, max_seconds));
  } else {
    std::cout << fmt("    runtime %.1f s\n", study.seconds);
  }
  return c.report();
}

// --- criterion 4 -----------------------------------------------------------

EstimatingFunctionSet mean_function() {
  return EstimatingFunctionSet({"mu"}, [](const Dataset& d) -> RowFunction {
    const Column* y = &d.column("y");
    return [y](std::size_t i, std::span<const double> theta, std::span<double> out) {
      out[0] = y->raw()[i] - theta[0];
    };
  });
}

bool sandwich_correctness(double& worst_residual) {
  Criterion c(4, "sandwich correctness");
  std::mt19937_64 gen(4);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::bernoulli_distribution coin(0.4);
  double worst = 0.0;
  int samples = 0;
  for (std::size_t n : {1000u, 10000u}) {
    for (int kind = 0; kind < 3; ++kind) {
      for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> y(n);
        for (auto& v : y) {
          v = kind == 0 ? norm(gen) : kind == 1 ? (coin(gen) ? 1.0 : 0.0) : 5.0 + 3.0 * norm(gen);
        }
        const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
        double ss = 0.0;
        for (double v : y) ss += (v - ybar) * (v - ybar);
        Dataset d;
        d.add_column(Column("y", y));
        const auto fit = sandwich_fit(mean_function(), d, ParameterVector({0.0}, {"mu"}));
        worst_residual = std::max(worst_residual, fit.residual_norm);
        worst = std::max(worst, std::abs(fit.std_errors[0] - std::sqrt(ss) / static_cast<double>(n)));
        ++samples;
      }
    }
  }
  c.check(worst <= kScalarSeTol,
          fmt("scalar mean: max |SE - sqrt(sum (y - ybar)^2) / n| = %.2e over %d samples (<= %.0e)",
              worst, samples, kScalarSeTol));

  // Homoscedastic linear regression, n = 1e4.
  const std::size_t n = 10000;
  std::vector<double> x1(n), x2(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = norm(gen);
    x2[i] = 0.5 * x1[i] + norm(gen);
    y[i] = 1.0 + 2.0 * x1[i] - 0.5 * x2[i] + 1.5 * norm(gen);
  }
  Dataset d;
  d.add_column(Column("x1", x1));
  d.add_column(Column("x2", x2));
  d.add_column(Column("y", y));
  const EstimatingFunctionSet ols({"b0", "b1", "b2"}, [](const Dataset& data) -> RowFunction {
    const Column* a = &data.column("x1");
    const Column* b = &data.column("x2");
    const Column* r = &data.column("y");
    return [=](std::size_t i, std::span<const double> beta, std::span<double> out) {
      const double x[3] = {1.0, a->raw()[i], b->raw()[i]};
      const double e = r->raw()[i] - (beta[0] + beta[1] * x[1] + beta[2] * x[2]);
      for (int j = 0; j < 3; ++j) out[j] = e * x[j];
    };
  });
  const auto fit = sandwich_fit(ols, d, ParameterVector({0, 0, 0}, {"b0", "b1", "b2"}));
  worst_residual = std::max(worst_residual, fit.residual_norm);
  const Eigen::MatrixXd x = oracle::design(d, "1,x1,x2");
  const Eigen::VectorXd yv = oracle::outcome_vector(d, "y");
  const Eigen::VectorXd b = oracle::least_squares(x, yv);
  const double sigma2 = (yv - x * b).squaredNorm() / static_cast<double>(n - 3);
  const Eigen::MatrixXd classical = sigma2 * (x.transpose() * x).inverse();
  for (int j = 0; j < 3; ++j) {
    const double ratio = fit.std_errors[static_cast<std::size_t>(j)] / std::sqrt(classical(j, j));
    c.check(std::abs(ratio - 1.0) <= kOlsRelTol,
            fmt("OLS coefficient %d: sandwich / classical SE = %.4f", j, ratio));
  }
  return c.report();
}

// --- criterion 6 -----------------------------------------------------------

EstimatorSpec make_spec(Variant v, const char* design, const char* second = nullptr) {
  EstimatorSpec s;
  s.variant = v;
  s.outcome_design = DesignSpec::parse(design);
  if (second) s.second_stage_design = DesignSpec::parse(second);
  return s;
}

bool oracle_equivalence(double& worst_residual) {
  Criterion c(6, "stacked solve vs sequential oracle, 20 datasets of n = 200");
  struct Variant6 {
    std::string name;
    DgmCase which;
    std::function<FitResult(const Dataset&)> fit;
    std::function<std::vector<double>(const Dataset&)> expected;
    bool gating;
  };
  // The interaction design on case-2 data at n = 200 is usually quasi-separated,
  // so the logistic MLE does not exist; that comparison is informational and
  // the gating iterated check uses case-1 data.
  const std::vector<Variant6> variants = {
      {"naive", DgmCase::case1, [](const Dataset& d) { return naive_estimate(d); },
       [](const Dataset& d) { return oracle::naive(d); }, true},
      {"standard", DgmCase::case1,
       [](const Dataset& d) { return estimate(make_spec(Variant::standard, "1,A,X"), d); },
       [](const Dataset& d) { return oracle::single_stage(d, "1,A,X", false); }, true},
      {"modified", DgmCase::case1,
       [](const Dataset& d) { return estimate(make_spec(Variant::modified, "1,A,X"), d); },
       [](const Dataset& d) { return oracle::single_stage(d, "1,A,X", true); }, true},
      {"iterated (1,A,X | 1,A)", DgmCase::case1,
       [](const Dataset& d) { return estimate(make_spec(Variant::iterated, "1,A,X", "1,A"), d); },
       [](const Dataset& d) { return oracle::iterated(d, "1,A,X", "1,A"); }, true},
      {"iterated (1,A,Z,X,A*Z | 1,A,Z,A*Z) on case 2", DgmCase::case2,
       [](const Dataset& d) {
         return estimate(make_spec(Variant::iterated, "1,A,Z,X,A*Z", "1,A,Z,A*Z"), d);
       },
       [](const Dataset& d) { return oracle::iterated(d, "1,A,Z,X,A*Z", "1,A,Z,A*Z"); }, false},
  };
  for (const auto& v : variants) {
    double worst = 0.0;
    int compared = 0, no_oracle = 0;
    std::string problems;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto data = generate(DgmSpec{v.which, 200, 6000 + seed});
      std::vector<double> expected;
      try {
        expected = v.expected(data);
      } catch (const std::exception&) {
        ++no_oracle;
        continue;
      }
      try {
        const auto fit = v.fit(data);
        worst_residual = std::max(worst_residual, fit.residual_norm);
        if (expected.size() != fit.theta_hat.size()) {
          problems += " seed " + std::to_string(seed) + ": dimension mismatch;";
          continue;
        }
        for (std::size_t j = 0; j < expected.size(); ++j) {
          worst = std::max(worst, std::abs(fit.theta_hat[j] - expected[j]));
        }
        ++compared;
      } catch (const std::exception& e) {
        problems += " seed " + std::to_string(seed) + ": " + e.what() + ";";
      }
    }
    const std::string line =
        fmt("%s: %d/20 datasets compared, max |theta - oracle| = %.2e (<= %.0e)", v.name.c_str(),
            compared, worst, kOracleTol) +
        (no_oracle ? fmt(", %d without a logistic MLE", no_oracle) : std::string()) + problems;
    if (v.gating) {
      c.check(compared == 20 && worst <= kOracleTol, line);
    } else {
      c.note(line);
    }
  }
  return c.report();
}

// --- criterion 7 -----------------------------------------------------------

bool determinism() {
  Criterion c(7, "simulate output is byte-identical across runs and thread counts");
  for (const char* format : {"table", "csv", "jsonl"}) {
    const std::string base = kCli + " simulate --case 2 --n 1000 --reps 40 --seed 7 --format " +
                             format + " --truth-n 1000000";
    const auto first = run_command(base + " --threads 1 2>/dev/null");
    const auto again = run_command(base + " --threads 1 2>/dev/null");
    const auto two = run_command(base + " --threads 2 2>/dev/null");
    const auto four = run_command(base + " --threads 4 2>/dev/null");
    const auto env = run_command("STACKEST_THREADS=3 " + base + " 2>/dev/null");
    const bool ran = first.status == 0 && !first.out.empty();
    c.check(ran && first.out == again.out, fmt("%s: rerun with --threads 1", format));
    c.check(ran && first.out == two.out && first.out == four.out,
            fmt("%s: --threads 1 vs 2 vs 4", format));
    c.check(ran && first.out == env.out, fmt("%s: STACKEST_THREADS=3", format));
  }
  return c.report();
}

// --- criterion 8 -----------------------------------------------------------

bool same_bits(const FitResult& a, const FitResult& b) {
  auto eq = [](std::span<const double> x, std::span<const double> y) {
    return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  };
  return a.theta_hat.labels() == b.theta_hat.labels() && eq(a.theta_hat.values(), b.theta_hat.values()) &&
         a.covariance.size() == b.covariance.size() &&
         eq({a.covariance.data(), static_cast<std::size_t>(a.covariance.size())},
            {b.covariance.data(), static_cast<std::size_t>(b.covariance.size())}) &&
         eq(a.std_errors, b.std_errors) && eq(a.ci_lower, b.ci_lower) && eq(a.ci_upper, b.ci_upper) &&
         std::memcmp(&a.residual_norm, &b.residual_norm, sizeof(double)) == 0;
}

// Copy of `data` with Y on S = 0 rows replaced by `value`; `observed` decides
// whether the replaced slots are flagged as observed.
Dataset perturb(const Dataset& data, double value, bool observed) {
  Dataset out;
  const auto& s = data.column("S");
  for (const auto& name : data.column_names()) {
    const auto& col = data.column(name);
    if (name != "Y") {
      out.add_column(col);
      continue;
    }
    std::vector<double> v(col.raw().begin(), col.raw().end());
    std::vector<std::uint8_t> mask(col.observed_mask().begin(), col.observed_mask().end());
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (s.raw()[i] == 0.0) {
        v[i] = value;
        mask[i] = observed ? 1 : 0;
      }
    }
    out.add_column(Column("Y", v, mask));
  }
  return out;
}

bool masking() {
  Criterion c(8, "Y on S = 0 rows never changes an output bit");
  struct Fixture {
    std::string file;
    std::vector<std::pair<std::string, std::optional<EstimatorSpec>>> estimators;
  };
  const std::vector<Fixture> fixtures = {
      {"case1_n1000_seed20240607.csv",
       {{"naive", std::nullopt},
        {"standard", make_spec(Variant::standard, "1,A,X")},
        {"modified", make_spec(Variant::modified, "1,A,X")},
        {"iterated", make_spec(Variant::iterated, "1,A,X", "1,A")}}},
      {"case2_n1000_seed20240608.csv",
       {{"naive", std::nullopt},
        {"standard", make_spec(Variant::standard, "1,A,Z,X")},
        {"modified", make_spec(Variant::modified, "1,A,Z,X")},
        {"iterated", make_spec(Variant::iterated, "1,A,Z,X,A*Z", "1,A,Z,A*Z")}}},
  };
  const std::pair<double, bool> perturbations[] = {
      {std::numeric_limits<double>::quiet_NaN(), false},
      {1e300, false},
      {-7.5, false},
      {0.0, true},
      {1.0, true},
      {42.0, true},
  };
  for (const auto& f : fixtures) {
    const auto data = csv::read_file(kFixtures + "/" + f.file);
    for (const auto& [name, spec] : f.estimators) {
      const auto run = [&](const Dataset& d) {
        return spec ? estimate(*spec, d) : naive_estimate(d);
      };
      const auto base = run(data);
      int identical = 0, total = 0;
      for (const auto& [value, observed] : perturbations) {
        ++total;
        identical += same_bits(base, run(perturb(data, value, observed)));
      }
      c.check(identical == total, fmt("%s %s: %d/%d perturbations bit-identical", f.file.c_str(),
                                      name.c_str(), identical, total));
    }

    // Through the command line: fill every empty Y with 1 and compare output bytes.
    const auto tmp = fs::temp_directory_path() / ("stackest_masking_" + f.file);
    {
      std::ifstream in(kFixtures + "/" + f.file);
      std::ofstream out(tmp);
      for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == ',') line += "1";
        out << line << '\n';
      }
    }
    const bool case2 = f.file.rfind("case2", 0) == 0;
    const std::string args = case2 ? " --estimator iterated --design 1,A,Z,X,A*Z --second-stage 1,A,Z,A*Z"
                                   : " --estimator modified --design 1,A,X";
    const auto original = run_command(kCli + " estimate --format csv --data " + kFixtures + "/" +
                                      f.file + args + " 2>&1");
    const auto filled = run_command(kCli + " estimate --format csv --data " + tmp.string() + args +
                                    " 2>&1");
    fs::remove(tmp);
    c.check(original.status == 0 && original.out == filled.out,
            fmt("%s via CLI: output bytes identical with Y filled on S = 0 rows", f.file.c_str()));
  }
  return c.report();
}

}  // namespace

// Arguments select criteria by number; none runs all of them.
int main(int argc, char** argv) {
  std::vector<bool> want(9, argc == 1);
  for (int a = 1; a < argc; ++a) {
    const int k = std::atoi(argv[a]);
    if (k < 1 || k > 8) {
      std::cerr << "usage: acceptance [criterion 1-8]...\n";
      return 2;
    }
    want[static_cast<std::size_t>(k)] = true;
  }
  std::cout << "stackest acceptance suite\n";
  bool all = true;
  double worst_residual = 0.0;

  if (want[1]) all &= truth_oracles();

  std::optional<StudyOutcome> table1, table2;
  if (want[2] || want[5]) {
    table1 = run_table(DgmCase::case1);
    if (want[2]) {
      all &= table_criterion(2, "case-1 study, n = 1000, reps = 2000", *table1,
                             {{"naive", -0.028, 0.87}, {"standard", -0.144, 0.02}, {"modified", -0.001, 0.95}},
                             {"naive", "standard", "modified"}, kTable1Seconds);
    }
  }
  if (want[3] || want[5]) {
    table2 = run_table(DgmCase::case2);
    if (want[3]) {
      all &= table_criterion(3, "case-2 study, n = 1000, reps = 2000", *table2,
                             {{"naive", 0.037, 0.00},
                              {"standard-z", 0.025, 0.90},
                              {"standard-x", 0.042, 0.83},
                              {"standard-xz", 0.029, 0.90},
                              {"iterated", 0.004, 0.95}},
                             {"iterated"}, 0.0);
    }
  }

  // Criteria 4 and 6 run before 5 so their fits count toward the residual check.
  if (want[4] || want[5]) {
    const bool ok = sandwich_correctness(worst_residual);
    if (want[4]) all &= ok;
  }
  std::optional<bool> oracle_ok;
  if (want[6] || want[5]) oracle_ok = oracle_equivalence(worst_residual);

  if (want[5]) {
    Criterion c(5, "root residuals <= 1e-9 in every fit");
    std::size_t failures = 0;
    for (const auto* study : {&*table1, &*table2}) {
      for (const auto& row : study->report.rows) {
        worst_residual = std::max(worst_residual, row.max_residual);
        failures += row.n_failures;
      }
    }
    c.check(worst_residual <= kResidualTol,
            fmt("max residual %.2e over the studies and the checks of criteria 4 and 6",
                worst_residual));
    c.check(failures == 0, fmt("%zu replications without a fit", failures));
    all &= c.report();
  }
  if (want[6]) all &= *oracle_ok;

  if (want[7]) all &= determinism();
  if (want[8]) all &= masking();

  std::cout << (all ? "ALL SELECTED CRITERIA PASS" : "SOME CRITERIA FAIL") << '\n';
  return all ? 0 : 1;
}
