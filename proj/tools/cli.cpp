#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"
#include "eblup/checks.hpp"
#include "eblup/io.hpp"
#include "json.hpp"

namespace eblup::cli {

namespace {

struct ModelArgs {
  std::string family;
  std::string data;
  std::string design;
  std::string method = "reml";
  std::string targets;
  std::vector<long long> areas;
  bool data_specific = false;
  std::string output;
  int max_iter = 100;
  double tol = 1e-8;
};

struct SimulateArgs {
  std::string config;
  std::string preset;
  double gamma = 0.25;
  std::optional<long long> replicates;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string output = "mc_report";
};

struct CheckArgs {
  std::string suite = "all";
  std::string family;
  int w = 3;
  std::uint64_t seed = CheckOptions{}.seed;
  int instances = 0;
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NoConvergence: return kNoConvergence;
    case ErrorKind::SingularInformation: return kSingularInformation;
    default: return kInputError;
  }
}

int report_error(std::ostream& err, std::string_view kind, std::string_view message, int code,
                 std::optional<std::size_t> index = std::nullopt) {
  nlohmann::json j{{"error", kind}, {"message", message}, {"exit_code", code}};
  if (index) j["index"] = *index;
  err << j.dump() << "\n";
  return code;
}

int report_error(std::ostream& err, const Error& e) {
  std::string_view message = e.what();
  if (const auto pos = message.find(": "); pos != std::string_view::npos) message.remove_prefix(pos + 2);
  return report_error(err, to_string(e.kind()), message, exit_code_for(e.kind()), e.index());
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::InvalidInput, "cannot write " + path);
  f << text;
}

LoadedData load(const ModelArgs& a) {
  const FamilyKind family = family_from_string(a.family);
  if (a.data.empty()) throw Error(ErrorKind::InvalidInput, "--data is required");
  const CsvTable table = read_csv(a.data);
  switch (family) {
    case FamilyKind::FayHerriot: return load_fay_herriot(table);
    case FamilyKind::NestedError: return load_nested_error(table);
    case FamilyKind::AnovaVC:
      if (a.design.empty()) throw Error(ErrorKind::InvalidInput, "--design is required for the anova family");
      return load_anova(a.design, table);
  }
  throw Error(ErrorKind::InvalidInput, "unknown family");
}

std::vector<PredictionTarget> targets_for(const ModelArgs& a, const MixedModel& model) {
  std::vector<PredictionTarget> out;
  if (!a.targets.empty()) out = load_targets(model, read_csv(a.targets));
  for (long long area : a.areas) {
    if (area < 1) throw Error(ErrorKind::IndexOutOfRange, "area numbers start at 1");
    out.push_back(area_target(model, static_cast<Index>(area - 1)));
  }
  if (out.empty()) throw Error(ErrorKind::InvalidInput, "no targets given; use --targets or --area");
  return out;
}

int model_command(const std::string& command, const ModelArgs& a, std::ostream& out, std::ostream& err) {
  const LoadedData data = load(a);
  const MixedModel& model = data.model;
  const Method method = method_from_string(a.method);
  std::vector<PredictionTarget> targets;
  if (command != "fit") targets = targets_for(a, model);

  FitOptions options;
  options.max_iter = a.max_iter;
  options.tol = a.tol;
  const FitResult f = fit(model, data.y, method, options);

  RunReport report;
  report.command = command;
  report.family = std::string(to_string(model.kind()));
  report.n = model.n();
  report.p = model.p();
  report.r = model.r();
  report.s = model.s();
  report.method = std::string(to_string(method));
  report.data_specific = a.data_specific;
  report.fit = summarize_fit(f);
  if (f.boundary_hit) report.warnings.emplace_back("boundary: sigma_hat lies on the boundary of the parameter space");
  if (!f.converged) report.warnings.emplace_back("no-convergence: variance estimates did not converge");
  if (!f.information) report.warnings.emplace_back("singular-information: expected information is singular at sigma_hat");

  bool singular = false;
  if (!targets.empty()) {
    const SigmaEvaluation eval(model, f.sigma_hat);
    for (const PredictionTarget& t : targets) {
      TargetReport tr;
      tr.name = t.name;
      tr.l = t.l;
      tr.m = t.m;
      const BlupResult b = blup(eval, data.y, t);
      tr.eblup = b.value;
      tr.boundary_warning = f.boundary_hit;
      if (command == "mse") {
        tr.mse = mse_estimators(eval, f, data.y, t, a.data_specific);
        singular = singular || !tr.mse->prasad_rao.has_value();
      }
      report.targets.push_back(std::move(tr));
    }
  }
  emit(run_report_json(report), a.output, out);
  if (!f.converged) {
    return report_error(err, "NoConvergence", "variance estimates did not converge; best iterate reported",
                        kNoConvergence);
  }
  if (singular) {
    return report_error(err, "SingularInformation", "expected information is singular; naive estimator only",
                        kSingularInformation);
  }
  return kOk;
}

std::string summary_table(const McReport& r) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-6s %12s %12s %12s %12s %12s %12s %12s\n", "target", "method", "mse_eblup",
                "mse_cv", "g1+g2+g3", "naive", "prasad_rao", "second_ord", "data_spec");
  out += line;
  for (const TargetSummary& t : r.rows) {
    double est[4] = {0, 0, 0, 0};
    bool have[4] = {false, false, false, false};
    for (const EstimatorSummary& e : t.estimators) {
      est[static_cast<int>(e.estimator)] = e.mean;
      have[static_cast<int>(e.estimator)] = true;
    }
    std::snprintf(line, sizeof line, "%-12s %-6s %12.6f %12.6f %12.6f", t.target.c_str(),
                  std::string(to_string(t.method)).c_str(), t.mse_eblup, t.mse_eblup_cv, t.g1 + t.g2 + t.g3);
    out += line;
    for (int k = 0; k < 4; ++k) {
      if (have[k]) {
        std::snprintf(line, sizeof line, " %12.6f", est[k]);
      } else {
        std::snprintf(line, sizeof line, " %12s", "-");
      }
      out += line;
    }
    out += "\n";
  }
  for (const MethodSummary& m : r.method_summaries) {
    std::snprintf(line, sizeof line, "%s: %lld used, %lld failed, %lld not converged, boundary rate %.4f\n",
                  std::string(to_string(m.method)).c_str(), static_cast<long long>(m.used),
                  static_cast<long long>(m.failures), static_cast<long long>(m.nonconverged), m.boundary_rate);
    out += line;
  }
  for (const std::string& w : r.warnings) out += "warning: " + w + "\n";
  return out;
}

int simulate_command(const SimulateArgs& a, std::ostream& out) {
  if (a.config.empty() == a.preset.empty()) {
    throw Error(ErrorKind::InvalidInput, "give exactly one of --config and --preset");
  }
  McConfig cfg;
  if (!a.config.empty()) {
    cfg = parse_mc_config(read_text(a.config));
  } else {
    bool known = false;
    for (const auto& name : preset_names()) known = known || name == a.preset;
    if (!known) {
      std::string list;
      for (const auto& name : preset_names()) list += (list.empty() ? "" : ", ") + name;
      throw Error(ErrorKind::InvalidInput, "unknown preset '" + a.preset + "'; allowed: " + list);
    }
    cfg = preset_config(a.preset, a.gamma);
  }
  if (a.replicates) {
    if (*a.replicates < 2) throw Error(ErrorKind::InvalidInput, "replicates must be at least 2");
    cfg.replicates = *a.replicates;
  }
  if (a.seed) cfg.base_seed = *a.seed;
  if (a.threads < 0) throw Error(ErrorKind::InvalidInput, "--threads must be positive");
  set_thread_count(a.threads);
  const McReport report = run_study(cfg);
  const std::string json_path = a.output + ".json";
  const std::string csv_path = a.output + ".csv";
  emit(mc_report_json(report), json_path, out);
  emit(mc_report_csv(report), csv_path, out);
  out << summary_table(report);
  out << "wrote " << json_path << " and " << csv_path << "\n";
  return kOk;
}

int check_command(const CheckArgs& a, std::ostream& out) {
  CheckOptions o;
  o.seed = a.seed;
  o.max_factors = a.w;
  o.instances = a.instances;
  if (!a.family.empty()) o.family = family_from_string(a.family);
  if (a.w < 1 || a.w > 6) throw Error(ErrorKind::InvalidInput, "--w must lie in 1..6");
  std::vector<std::string> suites;
  if (a.suite == "all") {
    suites = check_suite_names();
  } else {
    suites.push_back(a.suite);
  }
  bool all_passed = true;
  for (const std::string& s : suites) {
    for (const CheckResult& c : run_check_suite(s, o)) {
      out << (c.passed ? "PASS " : "FAIL ") << c.suite << ": " << c.name << " (" << c.detail << ")\n";
      all_passed = all_passed && c.passed;
    }
  }
  return all_passed ? kOk : kCheckFailed;
}

void add_model_options(CLI::App* cmd, ModelArgs& a, bool with_targets, bool with_data_specific) {
  cmd->add_option("--family", a.family, "fay-herriot, nested-error or anova")->required();
  cmd->add_option("--data", a.data, "data CSV")->required();
  cmd->add_option("--design", a.design, "design JSON (anova family)");
  cmd->add_option("--method", a.method, "reml or ml");
  cmd->add_option("--output", a.output, "write the JSON report here instead of stdout");
  cmd->add_option("--max-iter", a.max_iter, "Fisher scoring iteration cap");
  cmd->add_option("--tol", a.tol, "scaled score tolerance");
  if (with_targets) {
    cmd->add_option("--targets", a.targets, "targets CSV: name,l1..lp,m1..mr");
    cmd->add_option("--area", a.areas, "area or group number (1-based), repeatable");
  }
  if (with_data_specific) cmd->add_flag("--data-specific", a.data_specific, "add the data-specific estimator");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Empirical best linear unbiased prediction for mixed linear models"};
  app.require_subcommand(1);
  ModelArgs fit_args, predict_args, mse_args;
  SimulateArgs sim_args;
  CheckArgs check_args;
  auto* fit_cmd = app.add_subcommand("fit", "estimate variance components and fixed effects");
  add_model_options(fit_cmd, fit_args, false, false);
  auto* predict_cmd = app.add_subcommand("predict", "EBLUP for each target");
  add_model_options(predict_cmd, predict_args, true, false);
  auto* mse_cmd = app.add_subcommand("mse", "EBLUP and MSE estimators for each target");
  add_model_options(mse_cmd, mse_args, true, true);

  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo study");
  sim_cmd->add_option("--config", sim_args.config, "study config JSON");
  sim_cmd->add_option("--preset", sim_args.preset, "harville-jeske-balanced, -unbalanced or -large");
  sim_cmd->add_option("--gamma", sim_args.gamma, "variance ratio for presets");
  sim_cmd->add_option("--replicates", sim_args.replicates, "override replicate count");
  sim_cmd->add_option("--seed", sim_args.seed, "override base seed");
  sim_cmd->add_option("--threads", sim_args.threads, "worker threads (default: EBLUP_THREADS or all cores)");
  sim_cmd->add_option("--output", sim_args.output, "output prefix for .json and .csv");

  auto* check_cmd = app.add_subcommand("check", "run internal consistency suites");
  check_cmd->add_option("--suite", check_args.suite, "all, derivatives, kron, projection, moments or blup");
  check_cmd->add_option("--family", check_args.family, "restrict family-based suites");
  check_cmd->add_option("--w", check_args.w, "largest factor count for kron designs");
  check_cmd->add_option("--seed", check_args.seed, "random instance seed");
  check_cmd->add_option("--instances", check_args.instances, "instances per suite (0: default)");

  std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    return report_error(err, "InvalidInput", e.what(), kInputError);
  }

  try {
    if (fit_cmd->parsed()) return model_command("fit", fit_args, out, err);
    if (predict_cmd->parsed()) return model_command("predict", predict_args, out, err);
    if (mse_cmd->parsed()) return model_command("mse", mse_args, out, err);
    if (sim_cmd->parsed()) return simulate_command(sim_args, out);
    if (check_cmd->parsed()) return check_command(check_args, out);
  } catch (const Error& e) {
    return report_error(err, e);
  } catch (const std::exception& e) {
    return report_error(err, "InternalError", e.what(), kCheckFailed);
  }
  return kInputError;
}

}  // namespace eblup::cli
