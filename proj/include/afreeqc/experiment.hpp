#pragma once

#include "afreeqc/qctest.hpp"
#include "afreeqc/symbol.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace afreeqc {

/// Exit codes shared by `run` and the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitViolation = 2;

/// One experiment. Every field is always encoded, so the JSON form is canonical:
/// encode(decode(encode(c))) == encode(c) byte for byte.
struct ExperimentConfig {
  /// rank-check | project | test-aqc | test-aqcb | test-strong-aqcb | qcb-gap |
  /// demo-cr | demo-dilation | demo-hessian | demo-cofactor | table5
  std::string command = "rank-check";
  nlohmann::json op = "div";  ///< catalog name or {name, n, m, d, coeffs}
  std::string integrand = "neg_norm_p";
  nlohmann::json integrand_params = nlohmann::json::object();
  std::vector<double> s0;
  std::vector<double> normal;
  double eps = 0.5;
  double beta = 0.5;
  double gamma = 0.5;
  SearchConfig search;
  nlohmann::json domain = {{"type", "disk"}, {"center", {0.0, 0.0}}, {"radius", 1.0}};
  int grid = 512;  ///< demo grid
  int k_max = 64;
  bool truncation = false;  ///< demo-cr: add ||A(eta u_k)|| per k
  std::string sequence = "oscillating";  ///< demo-cofactor: constant | perturbed | oscillating
  std::string input;        ///< project: AFK1 field (random field when empty)
  std::string out;
  std::string report;       ///< project: ProjectionReport JSON
  std::string witness;      ///< AFK1 path for a violation witness (default out + ".witness.afk1")

  nlohmann::json to_json() const;
  std::string to_json_string() const;
  /// Rejects unknown keys and wrong types with key names; parse errors carry line and column.
  static ExperimentConfig from_json_string(const std::string& text);
  static ExperimentConfig from_json(const nlohmann::json& j);
};

OperatorA resolve_operator(const nlohmann::json& op);
nlohmann::json rank_report_json(const OperatorA& op, const RankReport& rep);

struct Table5Row {
  std::string op;
  Certificate strong;
  Certificate periodic;
  std::string expected_strong;
  std::string expected_periodic;
  bool matches() const;
};

struct Table5 {
  std::vector<Table5Row> rows;
  int grid = 0;
  double eps = 0.5, beta = 0.5, gamma = 0.5;
  bool matches_expected() const;
  std::string markdown() const;
  std::string csv() const;
  nlohmann::json to_json() const;
};

/// Strong and periodic boundary testers with v = -|s|^2 over div, cauchy_riemann, curl2d.
Table5 table5(const SearchConfig& cfg, double eps = 0.5, double beta = 0.5, double gamma = 0.5);

struct RunResult {
  int exit_code = kExitOk;
  std::string summary;  ///< one line for the terminal
  std::vector<std::string> files;
};

/// Dispatches a config; errors propagate as exceptions (callers map them to kExitError).
RunResult run(const ExperimentConfig& cfg);

}  // namespace afreeqc
