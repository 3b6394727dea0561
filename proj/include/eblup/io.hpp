#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "eblup/simulation.hpp"

namespace eblup {

// RFC-4180 subset: comma delimiter, optional double quotes, header row
// required, dot decimal separator regardless of locale.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column position; throws InvalidInput naming the column when absent.
  std::size_t column(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::string& path);
std::string read_text(const std::string& path);

double parse_double(std::string_view field, std::string_view what);
long long parse_integer(std::string_view field, std::string_view what);

// %.17g, so values read back exactly.
std::string format_double(double x);

FamilyKind family_from_string(std::string_view name);
Method method_from_string(std::string_view name);

struct LoadedData {
  MixedModel model;
  VectorXd y;
};

// Fay-Herriot CSV: area,y,phi[,x...]. Nested-error CSV: group,y[,x...].
// Without x columns X is an intercept.
LoadedData load_fay_herriot(const CsvTable& table);
LoadedData load_nested_error(const CsvTable& table);
// ANOVA: design JSON with either a balanced layout
//   {"levels": [...], "random": [[0,1], ...], "fixed": [1,1]}
// or explicit random-effect blocks
//   {"z_csv": "z.csv", "blocks": [r_1, r_2, ...]}
// and a data CSV y[,x...]. Relative z_csv paths resolve against the design
// file's directory.
LoadedData load_anova(const std::string& design_path, const CsvTable& data);
DesignSpec parse_design_json(std::string_view text);

// Targets CSV: name,l1..lp,m1..mr.
std::vector<PredictionTarget> load_targets(const MixedModel& model, const CsvTable& table);

// Unknown fields are rejected.
McConfig parse_mc_config(std::string_view json_text);
std::string mc_report_json(const McReport& report);
std::string mc_report_csv(const McReport& report);

struct TargetReport {
  std::string name;
  VectorXd l;
  VectorXd m;
  double eblup = 0.0;
  bool boundary_warning = false;
  std::optional<MseReport> mse;
};

struct FitSummary {
  VectorXd sigma_hat;
  std::vector<bool> boundary_flags;
  VectorXd beta_hat;
  MatrixXd beta_cov;
  std::optional<MatrixXd> information;  // A at sigma_hat
  int iterations = 0;
  double final_score_norm = 0.0;
  bool converged = false;
  bool boundary_hit = false;
  VectorXd effective_dims;
  double loglik = 0.0;
};

struct RunReport {
  std::string command;
  std::string family;
  Index n = 0;
  Index p = 0;
  Index r = 0;
  Index s = 0;
  std::string method;
  bool data_specific = false;
  FitSummary fit;
  std::vector<TargetReport> targets;
  std::vector<std::string> warnings;
};

// Exact structural equality (sizes and every value).
bool operator==(const MseReport& a, const MseReport& b);
bool operator==(const TargetReport& a, const TargetReport& b);
bool operator==(const FitSummary& a, const FitSummary& b);
bool operator==(const RunReport& a, const RunReport& b);

FitSummary summarize_fit(const FitResult& fit);
std::string run_report_json(const RunReport& report);
RunReport parse_run_report(std::string_view json_text);

}  // namespace eblup
