#pragma once

#include "afreeqc/integrand.hpp"
#include "afreeqc/io.hpp"
#include "afreeqc/symbol.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace afreeqc {

struct SearchConfig {
  int grid = 32;             ///< points per axis
  int restarts = 4;
  int max_iterations = 200;  ///< per penalty stage
  double initial_step = 1.0; ///< first trial step of the expanding backtracking rule
  std::uint64_t seed = 1;
  double margin = 1e-4;
  int penalty_stages = 6;
  double penalty_factor = 10.0;
  double penalty_start = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static SearchConfig from_json(const nlohmann::json& j);
};

enum class Verdict { Violation, NoneFound };

std::string to_string(Verdict v);

struct Certificate {
  std::string tester;  ///< test_aqc | test_strong_aqcb | test_aqcb_periodic
  Verdict status = Verdict::NoneFound;
  bool marginal = false;
  bool unbounded = false;
  bool infeasible = false;  ///< no feasible iterate was met
  bool trivial = false;     ///< the admissible set is {0} up to constants ruled out

  std::string op_json;
  std::string integrand;
  double objective = 0.0;  ///< best feasible value found
  double reference = 0.0;  ///< v(s0) for test_aqc, 0 otherwise
  std::map<std::string, double> constraints;
  std::map<std::string, double> parameters;
  std::vector<double> s0;
  std::vector<double> normal;
  SearchConfig config;

  // optimizer trace
  int iterations = 0;
  int best_restart = -1;
  double objective_min = 0.0;  ///< over all accepted iterates
  double objective_max = 0.0;

  std::optional<FieldData> witness;
  std::string witness_file;

  nlohmann::json to_json() const;
  std::string to_json_string() const;
  /// Parses the JSON form; the witness itself is not part of it.
  static Certificate from_json(const nlohmann::json& j);
};

struct BoundaryParams {
  std::vector<double> normal;  ///< unit outer normal nu
  double eps = 0.5;
  double beta = 0.5;   ///< strong tester: ||A phi||_{W^-1,2(D)} <= beta ||phi||_{L^2(D)}
  double gamma = 0.5;  ///< periodic tester: ||phi||_{L^2(Q\Q/2)} <= gamma ||phi||_{L^2(Q)}
  /// x-dependent integrands are evaluated at x0 + delta * y unless frozen at x0.
  bool freeze_x = true;
  std::vector<double> x0;
  double delta = 1.0;
};

/// Interior A-quasiconvexity: minimize int_Q v(s0 + phi) over mean-zero
/// periodic A-free phi.
Certificate test_aqc(const OperatorA& op, const Integrand& v, std::span<const double> s0, const SearchConfig& cfg);

/// Strong boundary test on the half ball D = {|x| < 1, x . nu < 0} with phi
/// supported in D n B(0, 1/2), ||phi||_{L^2(D)} = 1.
Certificate test_strong_aqcb(const OperatorA& op, const HomogeneousIntegrand& v, const BoundaryParams& params,
                             const SearchConfig& cfg);

/// Periodic boundary test: phi = c + T psi on Q with e_1 = nu, objective over
/// Q^- = {y_1 < 0}, outer-mass constraint over Q \ Q/2.
Certificate test_aqcb_periodic(const OperatorA& op, const HomogeneousIntegrand& v, const BoundaryParams& params,
                               const SearchConfig& cfg);

struct GapReport {
  Certificate strong;
  Certificate periodic;
  bool agree() const { return strong.status == periodic.status; }
};

GapReport qcb_gap_probe(const OperatorA& op, const HomogeneousIntegrand& v, const BoundaryParams& params,
                        const SearchConfig& cfg);

/// Objective and constraint values of a field under the rules of a certificate.
struct WitnessMetrics {
  double objective = 0.0;
  std::map<std::string, double> constraints;
  bool feasible = false;
};

WitnessMetrics evaluate_witness(const Certificate& cert, const OperatorA& op, const Integrand& v,
                                const FieldData& field);

struct Revalidation {
  bool ok = false;
  double max_relative_error = 0.0;
  std::string detail;
};

/// Re-evaluates the stored witness and compares with the recorded values
/// (relative tolerance 1e-8).
Revalidation revalidate(const Certificate& cert, const OperatorA& op, const Integrand& v);

struct FrozenRow {
  double delta = 0.0;
  Verdict full = Verdict::NoneFound;
  Verdict frozen = Verdict::NoneFound;
  double objective_full = 0.0;
  double objective_frozen = 0.0;
};

struct FrozenProbe {
  std::vector<FrozenRow> rows;
  /// Largest delta below which every probed verdict pair agrees (0 if none).
  double threshold = 0.0;
};

/// Strong tester run with v(x0 + delta y, .) against v(x0, .) for each delta.
FrozenProbe frozen_x_probe(const OperatorA& op, const HomogeneousIntegrand& v, BoundaryParams params,
                           std::span<const double> deltas, const SearchConfig& cfg);

/// Fields known to be A-free for catalog operators, built from a polynomial
/// bump potential of the given center and radius; empty when the operator
/// has no known potential. R maps tester coordinates y to x = R y.
std::optional<std::vector<double>> afree_bump(const OperatorA& op, const GridSpec& grid, std::span<const double> center,
                                              double radius, const Matrix* R = nullptr);

/// Orthogonal matrix whose first column is nu.
Matrix frame_with_first_axis(std::span<const double> nu);

}  // namespace afreeqc
