#include "stackest/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "stackest/csv.hpp"
#include "stackest/dgm.hpp"
#include "stackest/errors.hpp"
#include "stackest/gcomp.hpp"
#include "stackest/simharness.hpp"

namespace stackest::cli {
namespace {

// Raised for flag combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

DgmCase to_case(int c) { return c == 1 ? DgmCase::case1 : DgmCase::case2; }

OutcomeParsing to_parsing(const std::string& text) {
  return text == "literal" ? OutcomeParsing::literal : OutcomeParsing::main_effect;
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    csv::write_file_atomic(path, text);
  }
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("STACKEST_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("STACKEST_THREADS must be a positive integer");
  }
  return omp_get_num_procs();
}

std::string format_fit(const FitResult& fit, const std::string& format, const std::string& title) {
  std::ostringstream out;
  const auto& labels = fit.theta_hat.labels();
  if (format == "csv") {
    out << "parameter,estimate,std_error,ci_lower,ci_upper\n";
    for (std::size_t j = 0; j < labels.size(); ++j) {
      out << labels[j] << ',' << csv::format_number(fit.theta_hat[j]) << ','
          << csv::format_number(fit.std_errors[j]) << ',' << csv::format_number(fit.ci_lower[j])
          << ',' << csv::format_number(fit.ci_upper[j]) << '\n';
    }
  } else if (format == "jsonl") {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      nlohmann::json row = {{"parameter", labels[j]},    {"estimate", fit.theta_hat[j]},
                            {"std_error", fit.std_errors[j]}, {"ci_lower", fit.ci_lower[j]},
                            {"ci_upper", fit.ci_upper[j]}};
      out << row.dump() << '\n';
    }
  } else {
    out << "# " << title << ", n = " << fit.n_obs << ", residual = " << fit.residual_norm << '\n';
    char line[256];
    std::snprintf(line, sizeof line, "%-16s %12s %12s %12s %12s\n", "parameter", "estimate",
                  "std_error", "ci_lower", "ci_upper");
    out << line;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      std::snprintf(line, sizeof line, "%-16s %12s %12s %12s %12s\n", labels[j].c_str(),
                    fixed6(fit.theta_hat[j]).c_str(), fixed6(fit.std_errors[j]).c_str(),
                    fixed6(fit.ci_lower[j]).c_str(), fixed6(fit.ci_upper[j]).c_str());
      out << line;
    }
  }
  return out.str();
}

struct GenerateArgs {
  int which = 1;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string parsing = "main-effect";
};

struct EstimateArgs {
  std::string data;
  std::string estimator;
  std::string outcome = "Y";
  std::string treatment = "A";
  std::string selection = "S";
  std::string design;
  std::string second_stage;
  std::string link = "logit";
  std::string second_stage_rows = "all";
  std::string format = "table";
  std::string out;
};

struct SimulateArgs {
  int which = 1;
  std::size_t n = 1000;
  std::size_t reps = 2000;
  std::uint64_t seed = 1;
  std::string estimators;
  int threads = 0;
  std::string format = "table";
  std::string out;
  std::size_t truth_n = 10'000'000;
  std::uint64_t truth_seed = 20250101;
};

struct TruthArgs {
  int which = 1;
  std::size_t n = 10'000'000;
  std::uint64_t seed = 20250101;
  std::string parsing = "main-effect";
  std::string format = "table";
  std::string out;
};

int cmd_generate(const GenerateArgs& args, std::ostream& err) {
  DgmSpec spec{to_case(args.which), args.n, args.seed, to_parsing(args.parsing), false};
  if (spec.n < 1) throw UsageError("--n must be >= 1");
  const Dataset data = generate(spec);
  std::ostringstream text;
  csv::write(text, data);
  std::ostringstream meta;
  meta << "case=" << args.which << " n=" << args.n << " seed=" << args.seed
       << " y_model=" << outcome_model_description(spec) << '\n';
  csv::write_file_atomic(args.out, text.str());
  csv::write_file_atomic(args.out + ".meta", meta.str());
  (void)err;
  return kOk;
}

int cmd_estimate(const EstimateArgs& args, std::ostream& out) {
  std::optional<EstimatorEntry> entry;
  ColumnRoles roles{args.outcome, args.treatment, args.selection};
  if (args.estimator == "naive") {
    if (!args.second_stage.empty()) throw UsageError("--second-stage is only valid for iterated");
    entry = EstimatorEntry{"naive", std::nullopt};
  } else {
    if (args.design.empty()) throw UsageError("--design is required for " + args.estimator);
    EstimatorSpec spec;
    spec.variant = parse_variant(args.estimator);
    spec.outcome_link = parse_link(args.link);
    try {
      spec.outcome_design = DesignSpec::parse(args.design);
      if (!args.second_stage.empty()) spec.second_stage_design = DesignSpec::parse(args.second_stage);
    } catch (const ParseError& e) {
      throw UsageError(e.what());
    }
    spec.second_stage_rows =
        args.second_stage_rows == "selected" ? SecondStageRows::selected : SecondStageRows::all;
    spec.roles = roles;
    try {
      spec.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    entry = EstimatorEntry{args.estimator, spec};
  }

  csv::ReadOptions read_options;
  read_options.sentinel_columns = {args.outcome};
  const Dataset data = csv::read_file(args.data, read_options);
  FitResult fit;
  try {
    fit = entry->spec ? estimate(*entry->spec, data) : naive_estimate(data, roles);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  emit(format_fit(fit, args.format, "estimator = " + args.estimator), args.out, out);
  return kOk;
}

int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
  StudyConfig config;
  config.which = to_case(args.which);
  config.n = args.n;
  config.reps = args.reps;
  config.seed = args.seed;
  config.threads = resolve_threads(args.threads);
  config.truth_n = args.truth_n;
  config.truth_seed = args.truth_seed;
  if (config.reps < 2) throw UsageError("--reps must be >= 2");
  try {
    for (const auto& name : split_list(args.estimators)) {
      config.estimators.push_back(estimator_by_name(config.which, name));
    }
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  omp_set_num_threads(config.threads);
  const SimulationReport report = run_study(config);
  for (const auto& w : report.warnings) err << "warning: " << w << '\n';
  const std::string text = args.format == "csv"     ? format_csv(report)
                           : args.format == "jsonl" ? format_json_lines(report)
                                                    : format_table(report);
  emit(text, args.out, out);
  return kOk;
}

int cmd_truth(const TruthArgs& args, std::ostream& out) {
  if (args.n < 2) throw UsageError("--n must be >= 2");
  const DgmSpec spec{to_case(args.which), args.n, args.seed, to_parsing(args.parsing), false};
  const TruthEstimate t = true_psi(spec);
  std::ostringstream text;
  if (args.format == "csv") {
    text << "case,n,seed,psi,mc_se\n"
         << args.which << ',' << t.n << ',' << args.seed << ',' << csv::format_number(t.psi) << ','
         << csv::format_number(t.mc_se) << '\n';
  } else if (args.format == "jsonl") {
    nlohmann::json j = {{"case", args.which}, {"n", t.n},         {"seed", args.seed},
                        {"psi", t.psi},       {"mc_se", t.mc_se}, {"y_model", outcome_model_description(spec)}};
    text << j.dump() << '\n';
  } else {
    text << "psi = " << fixed6(t.psi) << "  mc_se = " << fixed6(t.mc_se) << "  (case " << args.which
         << ", n = " << t.n << ", seed = " << args.seed << ")\n";
  }
  emit(text.str(), args.out, out);
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stacked estimating equations for g-computation under selection bias", "stackest"};
  app.require_subcommand(1);
  const std::vector<std::string> formats = {"table", "csv", "jsonl"};
  const std::vector<std::string> parsings = {"main-effect", "literal"};

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Simulate one dataset from a case-study mechanism");
  g->add_option("--case", gen.which, "Mechanism (1 or 2)")->required()->check(CLI::IsMember({1, 2}));
  g->add_option("--n", gen.n, "Rows")->required();
  g->add_option("--seed", gen.seed, "Seed")->required();
  g->add_option("--out", gen.out, "Output CSV path")->required();
  g->add_option("--parsing", gen.parsing, "Case-2 outcome model reading")->check(CLI::IsMember(parsings));

  EstimateArgs est;
  auto* e = app.add_subcommand("estimate", "Fit one estimator to a CSV dataset");
  e->add_option("--data", est.data, "Input CSV")->required();
  e->add_option("--estimator", est.estimator)
      ->required()
      ->check(CLI::IsMember({"naive", "standard", "modified", "iterated"}));
  e->add_option("--outcome", est.outcome, "Outcome column");
  e->add_option("--treatment", est.treatment, "Treatment column");
  e->add_option("--selection", est.selection, "Selection indicator column");
  e->add_option("--design", est.design, "Outcome model terms, e.g. 1,A,X or 1,A,Z,X,A*Z");
  e->add_option("--second-stage", est.second_stage, "Second-stage terms (iterated)");
  e->add_option("--link", est.link)->check(CLI::IsMember({"logit", "identity"}));
  e->add_option("--second-stage-rows", est.second_stage_rows)->check(CLI::IsMember({"all", "selected"}));
  e->add_option("--format", est.format)->check(CLI::IsMember(formats));
  e->add_option("--out", est.out, "Write the report here instead of stdout");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run a Monte Carlo study");
  s->add_option("--case", sim.which)->required()->check(CLI::IsMember({1, 2}));
  s->add_option("--n", sim.n);
  s->add_option("--reps", sim.reps);
  s->add_option("--seed", sim.seed);
  s->add_option("--estimators", sim.estimators, "Comma-separated estimator names");
  s->add_option("--threads", sim.threads, "Worker threads (default: STACKEST_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  s->add_option("--format", sim.format)->check(CLI::IsMember(formats));
  s->add_option("--out", sim.out);
  s->add_option("--truth-n", sim.truth_n, "Units in the truth simulation");
  s->add_option("--truth-seed", sim.truth_seed);

  TruthArgs tru;
  auto* t = app.add_subcommand("truth", "Approximate the true average causal effect");
  t->add_option("--case", tru.which)->required()->check(CLI::IsMember({1, 2}));
  t->add_option("--n", tru.n);
  t->add_option("--seed", tru.seed);
  t->add_option("--parsing", tru.parsing)->check(CLI::IsMember(parsings));
  t->add_option("--format", tru.format)->check(CLI::IsMember(formats));
  t->add_option("--out", tru.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "stackest: " << ex.what() << '\n';
    return kUsage;
  }

  try {
    if (*g) return cmd_generate(gen, err);
    if (*e) return cmd_estimate(est, out);
    if (*s) return cmd_simulate(sim, out, err);
    if (*t) return cmd_truth(tru, out);
  } catch (const UsageError& ex) {
    err << "stackest: " << ex.what() << '\n';
    return kUsage;
  } catch (const NonConvergence& ex) {
    err << "stackest: convergence failure: " << ex.what() << '\n';
    return kConvergence;
  } catch (const EmptyArm& ex) {
    err << "stackest: positivity failure: " << ex.what() << '\n';
    return kPositivity;
  } catch (const SingularJacobian& ex) {
    err << "stackest: positivity failure: " << ex.what() << '\n';
    return kPositivity;
  } catch (const SingularBread& ex) {
    err << "stackest: positivity failure: " << ex.what() << '\n';
    return kPositivity;
  } catch (const StackestError& ex) {
    err << "stackest: " << ex.what() << '\n';
    return kParse;
  } catch (const std::exception& ex) {
    err << "stackest: " << ex.what() << '\n';
    return kParse;
  }
  return kUsage;
}

}  // namespace stackest::cli
