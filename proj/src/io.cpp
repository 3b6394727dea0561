#include "eblup/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace eblup {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad(const std::string& message) { throw Error(ErrorKind::InvalidInput, message); }

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) bad(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (std::string_view a : allowed) known = known || key == a;
    if (!known) bad("unknown field '" + key + "' in " + std::string(where));
  }
}

const json& require(const json& j, const char* key, std::string_view where) {
  if (!j.contains(key)) bad("missing field '" + std::string(key) + "' in " + std::string(where));
  return j.at(key);
}

double as_double(const json& j, std::string_view what) {
  if (!j.is_number()) bad(std::string(what) + " must be a number");
  return j.get<double>();
}

long long as_integer(const json& j, std::string_view what) {
  if (!j.is_number_integer()) bad(std::string(what) + " must be an integer");
  return j.get<long long>();
}

std::string as_string(const json& j, std::string_view what) {
  if (!j.is_string()) bad(std::string(what) + " must be a string");
  return j.get<std::string>();
}

bool as_bool(const json& j, std::string_view what) {
  if (!j.is_boolean()) bad(std::string(what) + " must be true or false");
  return j.get<bool>();
}

VectorXd as_vector(const json& j, std::string_view what) {
  if (!j.is_array()) bad(std::string(what) + " must be an array of numbers");
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = as_double(j[i], what);
  return v;
}

MatrixXd as_matrix(const json& j, std::string_view what) {
  if (!j.is_array()) bad(std::string(what) + " must be an array of rows");
  if (j.empty()) return MatrixXd(0, 0);
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  MatrixXd M(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) bad(std::string(what) + " rows must have equal length");
    for (std::size_t k = 0; k < cols; ++k) M(static_cast<Index>(i), static_cast<Index>(k)) = as_double(j[i][k], what);
  }
  return M;
}

json to_json(const VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json to_json(const MatrixXd& M) {
  json a = json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Index k = 0; k < M.cols(); ++k) row.push_back(M(i, k));
    a.push_back(std::move(row));
  }
  return a;
}

json opt(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

std::optional<double> opt_double(const json& j, std::string_view what) {
  if (j.is_null()) return std::nullopt;
  return as_double(j, what);
}

std::vector<std::string> as_strings(const json& j, std::string_view what) {
  if (!j.is_array()) bad(std::string(what) + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : j) out.push_back(as_string(e, what));
  return out;
}

FactorTuple parse_tuple(const json& j, std::size_t factors, std::string_view what) {
  if (!j.is_array() || j.size() != factors) {
    bad(std::string(what) + " must be a 0/1 array with one entry per factor (" + std::to_string(factors) + ")");
  }
  FactorTuple t = 0;
  for (std::size_t l = 0; l < factors; ++l) {
    const long long b = as_integer(j[l], what);
    if (b != 0 && b != 1) bad(std::string(what) + " entries must be 0 or 1");
    if (b == 1) t |= FactorTuple{1} << l;
  }
  return t;
}

DesignSpec design_from_json(const json& j) {
  DesignSpec d;
  const json& levels = require(j, "levels", "design");
  if (!levels.is_array()) bad("design levels must be an array");
  for (const auto& l : levels) d.levels.push_back(static_cast<Index>(as_integer(l, "design levels")));
  const json& random = require(j, "random", "design");
  if (!random.is_array()) bad("design random must be an array of tuples");
  for (const auto& t : random) d.random.push_back(parse_tuple(t, d.levels.size(), "random-effect tuple"));
  d.fixed = parse_tuple(require(j, "fixed", "design"), d.levels.size(), "fixed-effect tuple");
  return d;
}

bool same(const VectorXd& a, const VectorXd& b) { return a.size() == b.size() && a == b; }
bool same(const MatrixXd& a, const MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

// Remaining columns, in order, form X; none means an intercept.
MatrixXd x_columns(const CsvTable& t, const std::vector<std::size_t>& used) {
  std::vector<std::size_t> xs;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (std::find(used.begin(), used.end(), c) == used.end()) xs.push_back(c);
  }
  const auto n = static_cast<Index>(t.rows.size());
  if (xs.empty()) return MatrixXd::Ones(n, 1);
  MatrixXd X(n, static_cast<Index>(xs.size()));
  for (Index i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < xs.size(); ++k) {
      X(i, static_cast<Index>(k)) = parse_double(t.rows[static_cast<std::size_t>(i)][xs[k]], t.header[xs[k]]);
    }
  }
  return X;
}

VectorXd numeric_column(const CsvTable& t, std::size_t c) {
  VectorXd v(static_cast<Index>(t.rows.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) v(static_cast<Index>(i)) = parse_double(t.rows[i][c], t.header[c]);
  return v;
}

json mse_to_json(const MseReport& m) {
  return json{{"method", to_string(m.method)},
              {"g1", m.g1},
              {"g2", m.g2},
              {"g3", opt(m.g3)},
              {"g3_data", opt(m.g3_data)},
              {"g10", opt(m.g10)},
              {"naive", m.naive},
              {"prasad_rao", opt(m.prasad_rao)},
              {"second_order", opt(m.second_order)},
              {"data_specific", opt(m.data_specific)},
              {"warnings", m.warnings}};
}

MseReport mse_from_json(const json& j) {
  check_keys(j, {"method", "g1", "g2", "g3", "g3_data", "g10", "naive", "prasad_rao", "second_order",
                 "data_specific", "warnings"},
             "mse");
  MseReport m;
  m.method = method_from_string(as_string(require(j, "method", "mse"), "mse method"));
  m.g1 = as_double(require(j, "g1", "mse"), "g1");
  m.g2 = as_double(require(j, "g2", "mse"), "g2");
  m.g3 = opt_double(require(j, "g3", "mse"), "g3");
  m.g3_data = opt_double(require(j, "g3_data", "mse"), "g3_data");
  m.g10 = opt_double(require(j, "g10", "mse"), "g10");
  m.naive = as_double(require(j, "naive", "mse"), "naive");
  m.prasad_rao = opt_double(require(j, "prasad_rao", "mse"), "prasad_rao");
  m.second_order = opt_double(require(j, "second_order", "mse"), "second_order");
  m.data_specific = opt_double(require(j, "data_specific", "mse"), "data_specific");
  m.warnings = as_strings(require(j, "warnings", "mse"), "warnings");
  return m;
}

}  // namespace

std::optional<std::size_t> CsvTable::find(std::string_view name) const {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return c;
  }
  return std::nullopt;
}

std::size_t CsvTable::column(std::string_view name) const {
  if (auto c = find(name)) return *c;
  throw Error(ErrorKind::InvalidInput, "missing column '" + std::string(name) + "'");
}

CsvTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  auto end_record = [&] {
    record.push_back(field);
    field.clear();
    field_started = false;
    bool blank = record.size() == 1 && trim(record[0]).empty();
    if (!blank) records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && trim(field).empty()) {
      quoted = true;
      field.clear();
      field_started = true;
    } else if (c == ',') {
      record.push_back(std::string(trim(field)));
      field.clear();
      field_started = false;
    } else if (c == '\n') {
      field = std::string(trim(field));
      end_record();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) bad("unterminated quoted CSV field");
  if (field_started || !record.empty() || !field.empty()) {
    field = std::string(trim(field));
    end_record();
  }
  if (records.empty()) bad("CSV input has no header row");
  CsvTable t;
  t.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size()) {
      bad("CSV row " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) + " fields, header has " +
          std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) bad("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CsvTable read_csv(const std::string& path) { return parse_csv(read_text(path)); }

double parse_double(std::string_view field, std::string_view what) {
  const std::string_view s = trim(field);
  double value = 0.0;
  const char* begin = s.data();
  if (!s.empty() && s.front() == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) {
    bad("column '" + std::string(what) + "': '" + std::string(s) + "' is not a finite number");
  }
  return value;
}

long long parse_integer(std::string_view field, std::string_view what) {
  const std::string_view s = trim(field);
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    bad(std::string(what) + ": '" + std::string(s) + "' is not an integer");
  }
  return value;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

FamilyKind family_from_string(std::string_view name) {
  for (FamilyKind k : {FamilyKind::FayHerriot, FamilyKind::NestedError, FamilyKind::AnovaVC}) {
    if (to_string(k) == name) return k;
  }
  bad("unknown family '" + std::string(name) + "'; allowed: fay-herriot, nested-error, anova");
}

Method method_from_string(std::string_view name) {
  if (name == "reml" || name == "REML") return Method::REML;
  if (name == "ml" || name == "ML") return Method::ML;
  bad("unknown method '" + std::string(name) + "'; allowed: reml, ml");
}

LoadedData load_fay_herriot(const CsvTable& t) {
  const std::size_t area = t.column("area");
  const std::size_t y = t.column("y");
  const std::size_t phi = t.column("phi");
  MixedModel model = build_fay_herriot(numeric_column(t, phi), x_columns(t, {area, y, phi}));
  for (const auto& row : t.rows) model.effect_labels.push_back(row[area]);
  model.row_labels = model.effect_labels;
  return {std::move(model), numeric_column(t, y)};
}

LoadedData load_nested_error(const CsvTable& t) {
  const std::size_t group = t.column("group");
  const std::size_t y = t.column("y");
  std::map<std::string, Index> ids;
  std::vector<std::string> labels;
  std::vector<Index> groups;
  for (const auto& row : t.rows) {
    auto [it, inserted] = ids.emplace(row[group], static_cast<Index>(labels.size()));
    if (inserted) labels.push_back(row[group]);
    groups.push_back(it->second);
  }
  MixedModel model = build_nested_error(groups, x_columns(t, {group, y}));
  model.effect_labels = std::move(labels);
  return {std::move(model), numeric_column(t, y)};
}

DesignSpec parse_design_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    bad(std::string("design JSON: ") + e.what());
  }
  check_keys(j, {"levels", "random", "fixed"}, "design");
  return design_from_json(j);
}

LoadedData load_anova(const std::string& design_path, const CsvTable& data) {
  json j;
  try {
    j = json::parse(read_text(design_path));
  } catch (const json::parse_error& e) {
    bad(std::string("design JSON: ") + e.what());
  }
  check_keys(j, {"levels", "random", "fixed", "z_csv", "blocks"}, "design");
  const std::size_t y = data.column("y");
  if (j.contains("levels")) {
    if (j.contains("z_csv") || j.contains("blocks")) bad("design gives both a balanced layout and z_csv");
    const DesignSpec d = design_from_json(j);
    if (data.header.size() != 1) bad("balanced designs take X from the design; the data CSV holds only y");
    MixedModel model = BalancedDesign(d.levels, d.random, d.fixed).to_model();
    if (static_cast<Index>(data.rows.size()) != model.n()) {
      throw Error(ErrorKind::DimensionMismatch, "data rows (" + std::to_string(data.rows.size()) +
                                                    ") differ from the design's n (" + std::to_string(model.n()) + ")");
    }
    return {std::move(model), numeric_column(data, y)};
  }
  std::filesystem::path zpath(as_string(require(j, "z_csv", "design"), "z_csv"));
  if (zpath.is_relative()) zpath = std::filesystem::path(design_path).parent_path() / zpath;
  const CsvTable zt = read_csv(zpath.string());
  const json& blocks = require(j, "blocks", "design");
  if (!blocks.is_array() || blocks.empty()) bad("blocks must be a nonempty array of column counts");
  MatrixXd Z(static_cast<Index>(zt.rows.size()), static_cast<Index>(zt.header.size()));
  for (std::size_t i = 0; i < zt.rows.size(); ++i) {
    for (std::size_t c = 0; c < zt.header.size(); ++c) {
      Z(static_cast<Index>(i), static_cast<Index>(c)) = parse_double(zt.rows[i][c], zt.header[c]);
    }
  }
  if (Z.rows() != static_cast<Index>(data.rows.size())) {
    throw Error(ErrorKind::DimensionMismatch, "z_csv rows differ from data rows");
  }
  std::vector<MatrixXd> parts;
  Index offset = 0;
  for (const auto& b : blocks) {
    const auto width = static_cast<Index>(as_integer(b, "blocks"));
    if (width < 1 || offset + width > Z.cols()) bad("blocks do not partition the z_csv columns");
    parts.push_back(Z.middleCols(offset, width));
    offset += width;
  }
  if (offset != Z.cols()) bad("blocks do not partition the z_csv columns");
  MixedModel model = build_anova(x_columns(data, {y}), std::move(parts));
  return {std::move(model), numeric_column(data, y)};
}

std::vector<PredictionTarget> load_targets(const MixedModel& model, const CsvTable& t) {
  const std::size_t name = t.column("name");
  std::vector<std::size_t> lcols, mcols;
  for (Index k = 1; k <= model.p(); ++k) lcols.push_back(t.column("l" + std::to_string(k)));
  for (Index k = 1; k <= model.r(); ++k) mcols.push_back(t.column("m" + std::to_string(k)));
  if (t.header.size() != 1 + lcols.size() + mcols.size()) {
    throw Error(ErrorKind::DimensionMismatch, "targets file needs exactly name, l1..l" + std::to_string(model.p()) +
                                                  ", m1..m" + std::to_string(model.r()));
  }
  std::vector<PredictionTarget> out;
  for (const auto& row : t.rows) {
    PredictionTarget target;
    target.name = row[name];
    target.l.resize(model.p());
    target.m.resize(model.r());
    for (std::size_t k = 0; k < lcols.size(); ++k) target.l(static_cast<Index>(k)) = parse_double(row[lcols[k]], t.header[lcols[k]]);
    for (std::size_t k = 0; k < mcols.size(); ++k) target.m(static_cast<Index>(k)) = parse_double(row[mcols[k]], t.header[mcols[k]]);
    validate_target(model, target);
    out.push_back(std::move(target));
  }
  return out;
}

McConfig parse_mc_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    bad(std::string("config JSON: ") + e.what());
  }
  check_keys(j, {"family", "phi", "X", "group_sizes", "design", "sigma", "beta", "targets", "methods", "replicates",
                 "seed", "estimators"},
             "config");
  McConfig cfg;
  cfg.model.family = family_from_string(as_string(require(j, "family", "config"), "family"));
  switch (cfg.model.family) {
    case FamilyKind::FayHerriot:
      cfg.model.phi = as_vector(require(j, "phi", "config"), "phi");
      break;
    case FamilyKind::NestedError: {
      const json& sizes = require(j, "group_sizes", "config");
      if (!sizes.is_array()) bad("group_sizes must be an array");
      for (std::size_t g = 0; g < sizes.size(); ++g) {
        const long long size = as_integer(sizes[g], "group_sizes");
        if (size < 1) throw Error(ErrorKind::EmptyGroup, "group sizes must be positive", g);
        for (long long k = 0; k < size; ++k) cfg.model.groups.push_back(static_cast<Index>(g));
      }
      break;
    }
    case FamilyKind::AnovaVC: {
      const json& d = require(j, "design", "config");
      check_keys(d, {"levels", "random", "fixed"}, "design");
      cfg.model.design = design_from_json(d);
      if (j.contains("X")) bad("anova configs take X from the design");
      break;
    }
  }
  if (j.contains("X")) cfg.model.X = as_matrix(j.at("X"), "X");
  const MixedModel model = build_model(cfg.model);
  cfg.sigma_true = as_vector(require(j, "sigma", "config"), "sigma");
  if (cfg.sigma_true.size() != model.s()) {
    throw Error(ErrorKind::DimensionMismatch, "sigma needs " + std::to_string(model.s()) + " entries");
  }
  cfg.beta_true = j.contains("beta") ? as_vector(j.at("beta"), "beta") : VectorXd(VectorXd::Zero(model.p()));
  if (cfg.beta_true.size() != model.p()) {
    throw Error(ErrorKind::DimensionMismatch, "beta needs " + std::to_string(model.p()) + " entries");
  }
  if (j.contains("targets")) {
    const json& ts = j.at("targets");
    if (!ts.is_array() || ts.empty()) bad("targets must be a nonempty array");
    for (const auto& t : ts) {
      TargetSpec spec;
      if (t.is_object() && t.contains("area")) {
        check_keys(t, {"area"}, "target");
        spec.area = static_cast<Index>(as_integer(t.at("area"), "target area"));
      } else {
        check_keys(t, {"name", "l", "m"}, "target");
        spec.explicit_target.name = as_string(require(t, "name", "target"), "target name");
        spec.explicit_target.l = as_vector(require(t, "l", "target"), "target l");
        spec.explicit_target.m = as_vector(require(t, "m", "target"), "target m");
      }
      resolve_target(model, spec);
      cfg.targets.push_back(std::move(spec));
    }
  } else {
    cfg.targets.push_back(TargetSpec{Index{1}, {}});
  }
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : as_strings(j.at("methods"), "methods")) cfg.methods.push_back(method_from_string(m));
    if (cfg.methods.empty()) bad("methods must not be empty");
  }
  if (j.contains("replicates")) {
    cfg.replicates = as_integer(j.at("replicates"), "replicates");
    if (cfg.replicates < 2) bad("replicates must be at least 2");
  }
  if (j.contains("seed")) {
    const json& s = j.at("seed");
    if (!s.is_number_integer()) bad("seed must be an integer");
    cfg.base_seed = s.is_number_unsigned() ? s.get<std::uint64_t>() : static_cast<std::uint64_t>(s.get<long long>());
  }
  if (j.contains("estimators")) {
    cfg.estimators.clear();
    for (const auto& e : as_strings(j.at("estimators"), "estimators")) {
      const auto est = estimator_from_string(e);
      if (!est) bad("unknown estimator '" + e + "'; allowed: naive, prasad_rao, second_order, data_specific");
      cfg.estimators.push_back(*est);
    }
    if (cfg.estimators.empty()) bad("estimators must not be empty");
  }
  return cfg;
}

std::string mc_report_json(const McReport& r) {
  json j;
  j["family"] = r.family;
  j["replicates"] = r.replicates;
  j["base_seed"] = r.base_seed;
  j["targets"] = r.targets;
  json methods = json::array();
  for (Method m : r.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  json ests = json::array();
  for (Estimator e : r.estimators) ests.push_back(to_string(e));
  j["estimators"] = ests;
  json rows = json::array();
  for (const TargetSummary& t : r.rows) {
    json es = json::array();
    for (const EstimatorSummary& e : t.estimators) {
      es.push_back({{"estimator", to_string(e.estimator)},
                    {"mean", e.mean},
                    {"se", e.se},
                    {"bias", e.bias},
                    {"bias_se", e.bias_se},
                    {"relative_bias", e.relative_bias},
                    {"bias_cv", e.bias_cv},
                    {"bias_cv_se", e.bias_cv_se}});
    }
    rows.push_back({{"target", t.target},
                    {"method", to_string(t.method)},
                    {"mse_eblup", t.mse_eblup},
                    {"mse_eblup_se", t.mse_eblup_se},
                    {"mse_eblup_cv", t.mse_eblup_cv},
                    {"mse_eblup_cv_se", t.mse_eblup_cv_se},
                    {"mse_blup", t.mse_blup},
                    {"mse_blup_se", t.mse_blup_se},
                    {"mse_gap_se", t.mse_gap_se},
                    {"g1", t.g1},
                    {"g2", t.g2},
                    {"g3", t.g3},
                    {"g3_data_mean", t.g3_data_mean},
                    {"g3_data_se", t.g3_data_se},
                    {"ordering_ok", t.ordering_ok},
                    {"estimators", es}});
  }
  j["rows"] = rows;
  json ms = json::array();
  for (const MethodSummary& m : r.method_summaries) {
    ms.push_back({{"method", to_string(m.method)},
                  {"used", m.used},
                  {"failures", m.failures},
                  {"nonconverged", m.nonconverged},
                  {"boundary_hits", m.boundary_hits},
                  {"boundary_rate", m.boundary_rate},
                  {"score_mean", to_json(m.score_mean)},
                  {"score_se", to_json(m.score_se)},
                  {"score_target", to_json(m.score_target)},
                  {"score_z", to_json(m.score_z)}});
  }
  j["method_summaries"] = ms;
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

std::string mc_report_csv(const McReport& r) {
  std::string out =
      "target,method,estimator,mean,se,bias,bias_se,relative_bias,bias_cv,bias_cv_se,mse_eblup,mse_eblup_se,"
      "mse_eblup_cv,mse_eblup_cv_se,mse_blup,mse_blup_se,g1,g2,g3,g3_data_mean\n";
  for (const TargetSummary& t : r.rows) {
    for (const EstimatorSummary& e : t.estimators) {
      out += t.target + "," + std::string(to_string(t.method)) + "," + std::string(to_string(e.estimator));
      for (double x : {e.mean, e.se, e.bias, e.bias_se, e.relative_bias, e.bias_cv, e.bias_cv_se, t.mse_eblup,
                       t.mse_eblup_se, t.mse_eblup_cv, t.mse_eblup_cv_se, t.mse_blup, t.mse_blup_se, t.g1, t.g2, t.g3,
                       t.g3_data_mean}) {
        out += "," + format_double(x);
      }
      out += "\n";
    }
  }
  return out;
}

bool operator==(const MseReport& a, const MseReport& b) {
  return a.method == b.method && a.g1 == b.g1 && a.g2 == b.g2 && a.g3 == b.g3 && a.g3_data == b.g3_data &&
         a.g10 == b.g10 && a.naive == b.naive && a.prasad_rao == b.prasad_rao && a.second_order == b.second_order &&
         a.data_specific == b.data_specific && a.warnings == b.warnings;
}

bool operator==(const TargetReport& a, const TargetReport& b) {
  return a.name == b.name && same(a.l, b.l) && same(a.m, b.m) && a.eblup == b.eblup &&
         a.boundary_warning == b.boundary_warning && a.mse == b.mse;
}

bool operator==(const FitSummary& a, const FitSummary& b) {
  const bool info = a.information.has_value() == b.information.has_value() &&
                    (!a.information || same(*a.information, *b.information));
  return same(a.sigma_hat, b.sigma_hat) && a.boundary_flags == b.boundary_flags && same(a.beta_hat, b.beta_hat) &&
         same(a.beta_cov, b.beta_cov) && info && a.iterations == b.iterations &&
         a.final_score_norm == b.final_score_norm && a.converged == b.converged && a.boundary_hit == b.boundary_hit &&
         same(a.effective_dims, b.effective_dims) && a.loglik == b.loglik;
}

bool operator==(const RunReport& a, const RunReport& b) {
  return a.command == b.command && a.family == b.family && a.n == b.n && a.p == b.p && a.r == b.r && a.s == b.s &&
         a.method == b.method && a.data_specific == b.data_specific && a.fit == b.fit && a.targets == b.targets &&
         a.warnings == b.warnings;
}

FitSummary summarize_fit(const FitResult& f) {
  FitSummary s;
  s.sigma_hat = f.sigma_hat.values();
  s.boundary_flags = f.sigma_hat.boundary_flags();
  s.beta_hat = f.beta_hat;
  s.beta_cov = f.beta_cov;
  if (f.information) s.information = f.information->A;
  s.iterations = f.iterations;
  s.final_score_norm = f.final_score_norm;
  s.converged = f.converged;
  s.boundary_hit = f.boundary_hit;
  s.effective_dims = f.effective_dims;
  s.loglik = f.loglik;
  return s;
}

std::string run_report_json(const RunReport& r) {
  json fit{{"sigma_hat", to_json(r.fit.sigma_hat)},
           {"boundary_flags", r.fit.boundary_flags},
           {"beta_hat", to_json(r.fit.beta_hat)},
           {"beta_cov", to_json(r.fit.beta_cov)},
           {"information", r.fit.information ? to_json(*r.fit.information) : json(nullptr)},
           {"iterations", r.fit.iterations},
           {"final_score_norm", r.fit.final_score_norm},
           {"converged", r.fit.converged},
           {"boundary_hit", r.fit.boundary_hit},
           {"effective_dims", to_json(r.fit.effective_dims)},
           {"loglik", r.fit.loglik}};
  json targets = json::array();
  for (const TargetReport& t : r.targets) {
    targets.push_back({{"name", t.name},
                       {"l", to_json(t.l)},
                       {"m", to_json(t.m)},
                       {"eblup", t.eblup},
                       {"boundary_warning", t.boundary_warning},
                       {"mse", t.mse ? mse_to_json(*t.mse) : json(nullptr)}});
  }
  json j{{"command", r.command},
         {"family", r.family},
         {"n", r.n},
         {"p", r.p},
         {"r", r.r},
         {"s", r.s},
         {"method", r.method},
         {"data_specific", r.data_specific},
         {"fit", fit},
         {"targets", targets},
         {"warnings", r.warnings}};
  return j.dump(2) + "\n";
}

RunReport parse_run_report(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    bad(std::string("report JSON: ") + e.what());
  }
  check_keys(j, {"command", "family", "n", "p", "r", "s", "method", "data_specific", "fit", "targets", "warnings"},
             "report");
  RunReport r;
  r.command = as_string(require(j, "command", "report"), "command");
  r.family = as_string(require(j, "family", "report"), "family");
  r.n = static_cast<Index>(as_integer(require(j, "n", "report"), "n"));
  r.p = static_cast<Index>(as_integer(require(j, "p", "report"), "p"));
  r.r = static_cast<Index>(as_integer(require(j, "r", "report"), "r"));
  r.s = static_cast<Index>(as_integer(require(j, "s", "report"), "s"));
  r.method = as_string(require(j, "method", "report"), "method");
  r.data_specific = as_bool(require(j, "data_specific", "report"), "data_specific");
  const json& f = require(j, "fit", "report");
  check_keys(f, {"sigma_hat", "boundary_flags", "beta_hat", "beta_cov", "information", "iterations",
                 "final_score_norm", "converged", "boundary_hit", "effective_dims", "loglik"},
             "fit");
  r.fit.sigma_hat = as_vector(require(f, "sigma_hat", "fit"), "sigma_hat");
  const json& flags = require(f, "boundary_flags", "fit");
  if (!flags.is_array()) bad("boundary_flags must be an array");
  for (const auto& b : flags) r.fit.boundary_flags.push_back(as_bool(b, "boundary_flags"));
  r.fit.beta_hat = as_vector(require(f, "beta_hat", "fit"), "beta_hat");
  r.fit.beta_cov = as_matrix(require(f, "beta_cov", "fit"), "beta_cov");
  const json& info = require(f, "information", "fit");
  if (!info.is_null()) r.fit.information = as_matrix(info, "information");
  r.fit.iterations = static_cast<int>(as_integer(require(f, "iterations", "fit"), "iterations"));
  r.fit.final_score_norm = as_double(require(f, "final_score_norm", "fit"), "final_score_norm");
  r.fit.converged = as_bool(require(f, "converged", "fit"), "converged");
  r.fit.boundary_hit = as_bool(require(f, "boundary_hit", "fit"), "boundary_hit");
  r.fit.effective_dims = as_vector(require(f, "effective_dims", "fit"), "effective_dims");
  r.fit.loglik = as_double(require(f, "loglik", "fit"), "loglik");
  const json& ts = require(j, "targets", "report");
  if (!ts.is_array()) bad("targets must be an array");
  for (const auto& t : ts) {
    check_keys(t, {"name", "l", "m", "eblup", "boundary_warning", "mse"}, "target");
    TargetReport tr;
    tr.name = as_string(require(t, "name", "target"), "name");
    tr.l = as_vector(require(t, "l", "target"), "l");
    tr.m = as_vector(require(t, "m", "target"), "m");
    tr.eblup = as_double(require(t, "eblup", "target"), "eblup");
    tr.boundary_warning = as_bool(require(t, "boundary_warning", "target"), "boundary_warning");
    const json& m = require(t, "mse", "target");
    if (!m.is_null()) tr.mse = mse_from_json(m);
    r.targets.push_back(std::move(tr));
  }
  r.warnings = as_strings(require(j, "warnings", "report"), "warnings");
  return r;
}

}  // namespace eblup
