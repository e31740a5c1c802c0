#include "afreeqc/experiment.hpp"

#include "afreeqc/errors.hpp"
#include "afreeqc/projection.hpp"
#include "afreeqc/sequences.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace afreeqc {

using json = nlohmann::json;

namespace {

const std::vector<std::string>& known_commands() {
  static const std::vector<std::string> c{"rank-check", "project",       "test-aqc",     "test-aqcb",
                                          "test-strong-aqcb", "qcb-gap", "demo-cr",      "demo-dilation",
                                          "demo-hessian", "demo-cofactor", "table5"};
  return c;
}

template <class T>
T get_key(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

std::vector<int> powers_of_two(int k_max) {
  if (k_max < 1) throw ConfigError("k_max must be >= 1");
  std::vector<int> ks;
  for (int k = 1; k <= k_max; k *= 2) ks.push_back(k);
  return ks;
}

DiskSpec disk_from(const json& d) {
  const auto type = get_key<std::string>(d, "type");
  if (type != "disk" && type != "ball") throw ConfigError("domain type '" + type + "' is not supported here");
  for (const auto& [key, _] : d.items())
    if (key != "type" && key != "center" && key != "radius") throw ConfigError("domain: unknown key '" + key + "'");
  DiskSpec disk;
  const auto c = get_key<std::vector<double>>(d, "center");
  if (c.size() != 2) throw ConfigError("domain center must have 2 entries");
  disk.center = {c[0], c[1]};
  disk.radius = get_key<double>(d, "radius");
  if (!(disk.radius > 0.0)) throw ConfigError("domain radius must be positive");
  return disk;
}

std::vector<double> unit_or_default(std::vector<double> v, int n, const char* what) {
  if (v.empty()) {
    v.assign(static_cast<std::size_t>(n), 0.0);
    v[0] = 1.0;
  }
  if (static_cast<int>(v.size()) != n) throw ConfigError(std::string(what) + " must have n entries");
  double len = 0.0;
  for (double x : v) len += x * x;
  if (!(len > 0.0)) throw ConfigError(std::string(what) + " must be nonzero");
  len = std::sqrt(len);
  for (double& x : v) x /= len;
  return v;
}

std::string params_text(const json& p) { return p.dump(); }

BoundaryParams boundary_params(const ExperimentConfig& cfg, int n) {
  BoundaryParams bp;
  bp.normal = unit_or_default(cfg.normal, n, "normal");
  bp.eps = cfg.eps;
  bp.beta = cfg.beta;
  bp.gamma = cfg.gamma;
  bp.x0.assign(static_cast<std::size_t>(n), 0.0);
  return bp;
}

std::string witness_path(const ExperimentConfig& cfg) {
  if (!cfg.witness.empty()) return cfg.witness;
  if (!cfg.out.empty()) return cfg.out + ".witness.afk1";
  return {};
}

// "w.afk1" + "strong" -> "w.strong.afk1"
std::string tagged(const std::string& path, const std::string& tag) {
  if (tag.empty()) return path;
  const auto dot = path.rfind('.');
  const auto slash = path.find_last_of("/\\");
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + "." + tag;
  return path.substr(0, dot) + "." + tag + path.substr(dot);
}

// Writes the witness of a violation next to the certificate.
void attach_witness(Certificate& cert, const std::string& path, const std::string& tag, RunResult& res) {
  if (cert.status != Verdict::Violation || !cert.witness || path.empty()) return;
  cert.witness_file = tagged(path, tag);
  write_afk1(cert.witness_file, *cert.witness);
  res.files.push_back(cert.witness_file);
}

void emit_json(const ExperimentConfig& cfg, const std::string& text, RunResult& res) {
  if (cfg.out.empty()) {
    res.summary = text;
    if (!res.summary.empty() && res.summary.back() == '\n') res.summary.pop_back();
  } else {
    write_file_atomic(cfg.out, text);
    res.files.push_back(cfg.out);
  }
}

std::string verdict_line(const Certificate& c) {
  std::string s = c.tester + ": " + to_string(c.status) + " objective=" + format_double(c.objective);
  if (c.trivial) s += " trivial";
  if (c.unbounded) s += " unbounded";
  if (c.infeasible) s += " infeasible";
  if (c.marginal) s += " marginal";
  return s;
}

PeriodicField random_periodic_field(int n, int m, int N, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> freq(-4, 4);
  struct Mode {
    std::vector<int> k;
    double phase;
    std::vector<double> amp;
  };
  std::vector<Mode> modes;
  for (int t = 0; t < 12; ++t) {
    Mode md;
    bool zero = true;
    for (int a = 0; a < n; ++a) {
      md.k.push_back(freq(rng));
      zero = zero && md.k.back() == 0;
    }
    if (zero) md.k[0] = 1;
    md.phase = 2.0 * std::numbers::pi * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    for (int c = 0; c < m; ++c) md.amp.push_back(g(rng));
    modes.push_back(std::move(md));
  }
  return PeriodicField::from_function(GridSpec::unit_cube(n, N), m, [&](std::span<const double> x, std::span<double> out) {
    for (auto& o : out) o = 0.0;
    for (const auto& md : modes) {
      double arg = md.phase;
      for (int a = 0; a < n; ++a) arg += 2.0 * std::numbers::pi * md.k[static_cast<std::size_t>(a)] * x[static_cast<std::size_t>(a)];
      const double c = std::cos(arg);
      for (int i = 0; i < m; ++i) out[static_cast<std::size_t>(i)] += md.amp[static_cast<std::size_t>(i)] * c;
    }
  });
}

json projection_report_json(const ProjectionReport& r) {
  json j;
  j["residual_afree"] = r.residual_afree;
  j["idempotence_gap"] = r.idempotence_gap;
  j["mean_of_tu"] = r.mean_of_tu;
  j["poincare_ratio"] = r.poincare_ratio ? json(*r.poincare_ratio) : json(nullptr);
  j["complement_norm"] = r.complement_norm;
  j["constraint_norm"] = r.constraint_norm;
  return j;
}

RunResult run_project(const ExperimentConfig& cfg, const OperatorA& op) {
  RunResult res;
  const PeriodicField u = cfg.input.empty()
                              ? random_periodic_field(op.n(), op.m(), cfg.search.grid, cfg.search.seed)
                              : read_afk1(cfg.input).periodic();
  if (u.m() != op.m() || u.grid().n() != op.n())
    throw InvalidArgument("project: field shape does not match operator " + op.name());
  const AfreeProjector proj(op, u.grid());
  const PeriodicField tu = proj.apply(u);
  const ProjectionReport rep = projection_report(proj, u);
  json j = projection_report_json(rep);
  j["operator"] = json::parse(operator_to_json(op));
  j["input"] = cfg.input.empty() ? json(nullptr) : json(cfg.input);
  const std::string text = j.dump(2) + "\n";
  if (!cfg.out.empty()) {
    write_afk1(cfg.out, FieldData::from(tu));
    res.files.push_back(cfg.out);
  }
  if (!cfg.report.empty()) {
    write_file_atomic(cfg.report, text);
    res.files.push_back(cfg.report);
  }
  res.summary = cfg.report.empty() ? text.substr(0, text.size() - 1)
                                   : "residual_afree=" + format_double(rep.residual_afree) +
                                         " idempotence_gap=" + format_double(rep.idempotence_gap);
  return res;
}

RunResult run_tester(const ExperimentConfig& cfg, const OperatorA& op) {
  RunResult res;
  const std::string params = params_text(cfg.integrand_params);
  std::string text;
  bool violation = false;
  if (cfg.command == "test-aqc") {
    const Integrand v = integrand_by_name(cfg.integrand, op.m(), params);
    std::vector<double> s0 = cfg.s0;
    if (s0.empty()) s0.assign(static_cast<std::size_t>(op.m()), 0.0);
    if (static_cast<int>(s0.size()) != op.m()) throw ConfigError("s0 must have m entries");
    Certificate c = test_aqc(op, v, s0, cfg.search);
    attach_witness(c, witness_path(cfg), "", res);
    text = c.to_json_string();
    violation = c.status == Verdict::Violation;
    res.summary = verdict_line(c);
  } else if (cfg.command == "qcb-gap") {
    const HomogeneousIntegrand v = homogeneous_by_name(cfg.integrand, op.m(), params);
    GapReport g = qcb_gap_probe(op, v, boundary_params(cfg, op.n()), cfg.search);
    const std::string wp = witness_path(cfg);
    attach_witness(g.strong, wp, "strong", res);
    attach_witness(g.periodic, wp, "periodic", res);
    json j;
    j["strong"] = g.strong.to_json();
    j["periodic"] = g.periodic.to_json();
    j["agree"] = g.agree();
    text = j.dump(2) + "\n";
    violation = g.strong.status == Verdict::Violation || g.periodic.status == Verdict::Violation;
    res.summary = verdict_line(g.strong) + "; " + verdict_line(g.periodic) + (g.agree() ? "; agree" : "; gap");
  } else {
    const HomogeneousIntegrand v = homogeneous_by_name(cfg.integrand, op.m(), params);
    const BoundaryParams bp = boundary_params(cfg, op.n());
    Certificate c = cfg.command == "test-strong-aqcb" ? test_strong_aqcb(op, v, bp, cfg.search)
                                                     : test_aqcb_periodic(op, v, bp, cfg.search);
    attach_witness(c, witness_path(cfg), "", res);
    text = c.to_json_string();
    violation = c.status == Verdict::Violation;
    res.summary = verdict_line(c);
  }
  if (cfg.out.empty()) {
    res.summary = text.substr(0, text.size() - 1);
  } else {
    write_file_atomic(cfg.out, text);
    res.files.push_back(cfg.out);
  }
  res.exit_code = violation ? kExitViolation : kExitOk;
  return res;
}

void emit_sequence(const ExperimentConfig& cfg, const SequenceReport& rep, RunResult& res) {
  if (cfg.out.empty()) {
    res.summary = rep.csv();
    if (!res.summary.empty() && res.summary.back() == '\n') res.summary.pop_back();
    return;
  }
  rep.write(cfg.out);
  res.files.push_back(cfg.out);
  res.files.push_back(cfg.out + ".json");
  std::ostringstream s;
  s << rep.name << ": " << rep.rows.size() << " rows -> " << cfg.out;
  res.summary = s.str();
}

RunResult run_demo_cr(const ExperimentConfig& cfg) {
  RunResult res;
  const DiskSpec disk = disk_from(cfg.domain);
  CrOptions opts;
  opts.grid = cfg.grid;
  const auto ks = powers_of_two(cfg.k_max);
  const Integrand h = integrand_by_name(cfg.integrand, 2, params_text(cfg.integrand_params));
  SequenceOptions so;
  so.p = 2.0;
  if (cfg.truncation) {
    so.op = resolve_operator(cfg.op);
    const double x = disk.center[0] + disk.radius * opts.direction[0];
    const double y = disk.center[1] + disk.radius * opts.direction[1];
    so.cutoff = CutoffSpec{{x, y}, 0.5 * disk.radius, disk.radius};
  }
  SequenceReport rep = sequence_report("cr", cr_generator(disk, opts), ks, {&h}, so);
  rep.metadata["integrand"] = cfg.integrand;
  rep.metadata["disk"] = {{"center", disk.center}, {"radius", disk.radius}};
  emit_sequence(cfg, rep, res);
  return res;
}

RunResult run_demo_dilation(const ExperimentConfig& cfg) {
  RunResult res;
  const DiskSpec disk = disk_from(cfg.domain);
  const GridSpec base_grid = GridSpec::cube(2, 128, -1.0, 1.0);
  const std::vector<double> amp{1.0, 0.5};
  const DomainField base = base_bump(base_grid, amp);
  const double half = 1.125 * disk.radius;
  const GridSpec target({cfg.grid, cfg.grid}, {disk.center[0] - half, disk.center[1] - half},
                        {disk.center[0] + half, disk.center[1] + half});
  const DomainSpec dom = BallDomain{{disk.center[0], disk.center[1]}, disk.radius};
  const Mask mask = make_mask(target, dom);
  const std::vector<double> x0{disk.center[0], disk.center[1]};
  const auto ks = powers_of_two(cfg.k_max);
  const Integrand h = integrand_by_name(cfg.integrand, 2, params_text(cfg.integrand_params));
  SequenceOptions so;
  if (cfg.truncation) {
    so.op = resolve_operator(cfg.op);
    so.cutoff = CutoffSpec{x0, 0.5 * disk.radius, disk.radius};
  }
  SequenceReport rep = sequence_report("dilation", dilation_generator(base, x0, 2.0, target, mask, dom), ks, {&h}, so);
  rep.metadata["integrand"] = cfg.integrand;
  rep.metadata["x0"] = x0;
  emit_sequence(cfg, rep, res);
  return res;
}

RunResult run_demo_hessian(const ExperimentConfig& cfg) {
  RunResult res;
  std::vector<int> ks;
  for (int k = 1; k <= cfg.k_max && cfg.grid / k >= 32; k *= 2) ks.push_back(k);
  if (ks.empty()) throw ConfigError("demo-hessian: grid too coarse for k = 1");
  const HessianSearch found = hessian_search(cfg.search.seed);
  const HessianReport rep = hessian_demo(found.bump, ks, cfg.grid);
  const HessianReport radial = hessian_demo(HessianBump::radial_bump(), std::vector<int>{1}, cfg.grid);

  std::string csv = "k,integral\n";
  for (const auto& r : rep.rows) csv += std::to_string(r.k) + "," + format_double(r.integral) + "\n";
  json side;
  side["name"] = "hessian";
  side["grid"] = cfg.grid;
  side["seed"] = cfg.search.seed;
  side["oracle"] = rep.oracle;
  side["max_relative_spread"] = rep.max_relative_spread;
  side["sign"] = rep.sign;
  side["search"] = {{"found", found.found}, {"trials", found.trials}, {"integral", found.integral},
                    {"q", found.bump.q}, {"coeffs", found.bump.coeffs}};
  side["radial"] = {{"integral", radial.rows.front().integral}, {"oracle", radial.oracle}, {"sign", radial.sign}};
  if (cfg.out.empty()) {
    res.summary = csv.substr(0, csv.size() - 1);
  } else {
    write_file_atomic(cfg.out, csv);
    write_file_atomic(cfg.out + ".json", side.dump(2) + "\n");
    res.files = {cfg.out, cfg.out + ".json"};
    res.summary = "hessian: integral " + format_double(rep.oracle) + " spread " +
                  format_double(rep.max_relative_spread) + " -> " + cfg.out;
  }
  return res;
}

RunResult run_demo_cofactor(const ExperimentConfig& cfg) {
  RunResult res;
  CofactorSpec spec;
  spec.grid = cfg.grid;
  if (cfg.sequence == "constant") spec.kind = CofactorSpec::Kind::Constant;
  else if (cfg.sequence == "perturbed") spec.kind = CofactorSpec::Kind::Perturbed;
  else if (cfg.sequence == "oscillating") spec.kind = CofactorSpec::Kind::Oscillating;
  else throw ConfigError("sequence must be constant, perturbed or oscillating");
  if (cfg.integrand_params.contains("a0")) spec.a0 = cfg.integrand_params.at("a0").get<std::vector<double>>();
  if (cfg.integrand_params.contains("a1")) spec.a1 = cfg.integrand_params.at("a1").get<std::vector<double>>();
  const auto ks = powers_of_two(cfg.k_max);
  const CofactorReport rep = cofactor_demo(spec, ks);
  std::string csv = "k,value,gap\n";
  for (const auto& r : rep.rows)
    csv += std::to_string(r.k) + "," + format_double(r.value) + "," + format_double(r.gap) + "\n";
  json side;
  side["name"] = "cofactor";
  side["sequence"] = cfg.sequence;
  side["grid"] = cfg.grid;
  side["base"] = rep.base;
  side["rate"] = rep.rate;
  side["a0"] = spec.a0;
  side["a1"] = spec.a1;
  side["direction"] = spec.direction;
  if (cfg.out.empty()) {
    res.summary = csv.substr(0, csv.size() - 1);
  } else {
    write_file_atomic(cfg.out, csv);
    write_file_atomic(cfg.out + ".json", side.dump(2) + "\n");
    res.files = {cfg.out, cfg.out + ".json"};
    res.summary = "cofactor " + cfg.sequence + ": rate " + format_double(rep.rate) + " -> " + cfg.out;
  }
  return res;
}

RunResult run_table5(const ExperimentConfig& cfg) {
  RunResult res;
  const Table5 t = table5(cfg.search, cfg.eps, cfg.beta, cfg.gamma);
  if (!cfg.out.empty()) {
    write_file_atomic(cfg.out, t.markdown());
    write_file_atomic(cfg.out + ".csv", t.csv());
    write_file_atomic(cfg.out + ".json", t.to_json().dump(2) + "\n");
    res.files = {cfg.out, cfg.out + ".csv", cfg.out + ".json"};
  }
  res.summary = t.markdown();
  if (!res.summary.empty() && res.summary.back() == '\n') res.summary.pop_back();
  return res;
}

}  // namespace

// Config -------------------------------------------------------------------------------

json ExperimentConfig::to_json() const {
  json j;
  j["command"] = command;
  j["op"] = op;
  j["integrand"] = integrand;
  j["integrand_params"] = integrand_params;
  j["s0"] = s0;
  j["normal"] = normal;
  j["eps"] = eps;
  j["beta"] = beta;
  j["gamma"] = gamma;
  j["search"] = search.to_json();
  j["domain"] = domain;
  j["grid"] = grid;
  j["k_max"] = k_max;
  j["truncation"] = truncation;
  j["sequence"] = sequence;
  j["input"] = input;
  j["out"] = out;
  j["report"] = report;
  j["witness"] = witness;
  return j;
}

std::string ExperimentConfig::to_json_string() const { return to_json().dump(2) + "\n"; }

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    throw ConfigError("config parse error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                      ": " + e.what());
  }
  return from_json(j);
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::vector<std::string> keys{"command", "op",     "integrand", "integrand_params", "s0",
                                             "normal",  "eps",    "beta",      "gamma",            "search",
                                             "domain",  "grid",   "k_max",     "truncation",       "sequence",
                                             "input",   "out",    "report",    "witness"};
  for (const auto& [key, _] : j.items())
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ConfigError("config: unknown key '" + key + "'");
  ExperimentConfig c;
  if (j.contains("command")) c.command = get_key<std::string>(j, "command");
  if (std::find(known_commands().begin(), known_commands().end(), c.command) == known_commands().end())
    throw ConfigError("config key 'command': unknown command '" + c.command + "'");
  if (j.contains("op")) {
    c.op = j.at("op");
    if (!c.op.is_string() && !c.op.is_object()) throw ConfigError("config key 'op': expected a name or an object");
  }
  if (j.contains("integrand")) c.integrand = get_key<std::string>(j, "integrand");
  if (j.contains("integrand_params")) {
    c.integrand_params = j.at("integrand_params");
    if (!c.integrand_params.is_object()) throw ConfigError("config key 'integrand_params': expected an object");
  }
  if (j.contains("s0")) c.s0 = get_key<std::vector<double>>(j, "s0");
  if (j.contains("normal")) c.normal = get_key<std::vector<double>>(j, "normal");
  if (j.contains("eps")) c.eps = get_key<double>(j, "eps");
  if (j.contains("beta")) c.beta = get_key<double>(j, "beta");
  if (j.contains("gamma")) c.gamma = get_key<double>(j, "gamma");
  if (j.contains("search")) {
    try {
      c.search = SearchConfig::from_json(j.at("search"));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key 'search': ") + e.what());
    }
  }
  if (j.contains("domain")) {
    c.domain = j.at("domain");
    if (!c.domain.is_object()) throw ConfigError("config key 'domain': expected an object");
  }
  if (j.contains("grid")) c.grid = get_key<int>(j, "grid");
  if (j.contains("k_max")) c.k_max = get_key<int>(j, "k_max");
  if (j.contains("truncation")) c.truncation = get_key<bool>(j, "truncation");
  if (j.contains("sequence")) c.sequence = get_key<std::string>(j, "sequence");
  if (j.contains("input")) c.input = get_key<std::string>(j, "input");
  if (j.contains("out")) c.out = get_key<std::string>(j, "out");
  if (j.contains("report")) c.report = get_key<std::string>(j, "report");
  if (j.contains("witness")) c.witness = get_key<std::string>(j, "witness");
  if (!(c.eps > 0.0)) throw ConfigError("config key 'eps': must be positive");
  if (!(c.beta > 0.0)) throw ConfigError("config key 'beta': must be positive");
  if (!(c.gamma > 0.0 && c.gamma < 1.0)) throw ConfigError("config key 'gamma': must lie in (0, 1)");
  if (c.grid < 8) throw ConfigError("config key 'grid': must be >= 8");
  if (c.k_max < 1) throw ConfigError("config key 'k_max': must be >= 1");
  c.search.validate();
  return c;
}

OperatorA resolve_operator(const json& op) {
  if (op.is_string()) return operator_by_name(op.get<std::string>());
  if (op.is_object()) return operator_from_json(op.dump());
  throw ConfigError("operator must be a catalog name or an object");
}

json rank_report_json(const OperatorA& op, const RankReport& rep) {
  json j;
  j["operator"] = op.name();
  j["n"] = op.n();
  j["m"] = op.m();
  j["d"] = op.d();
  j["rank"] = rep.rank;
  j["min_rank"] = rep.min_rank;
  j["max_rank"] = rep.max_rank;
  j["constant_rank"] = rep.constant_rank();
  j["num_samples"] = rep.num_samples;
  j["tolerance"] = rep.tolerance;
  std::vector<double> w(rep.witness_direction.data(), rep.witness_direction.data() + rep.witness_direction.size());
  j["witness_direction"] = w;
  return j;
}

// Table ----------------------------------------------------------------------------------

bool Table5Row::matches() const {
  return to_string(strong.status) == expected_strong && to_string(periodic.status) == expected_periodic;
}

bool Table5::matches_expected() const {
  for (const auto& r : rows)
    if (!r.matches()) return false;
  return !rows.empty();
}

std::string Table5::markdown() const {
  std::string s = "| operator | strong A-qcb | A-qcb (periodic) | expected | match |\n";
  s += "|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    auto cell = [](const Certificate& c) {
      std::string t = to_string(c.status);
      if (c.trivial) t += " (trivial)";
      return t;
    };
    s += "| " + r.op + " | " + cell(r.strong) + " | " + cell(r.periodic) + " | " + r.expected_strong + " / " +
         r.expected_periodic + " | " + (r.matches() ? "yes" : "no") + " |\n";
  }
  return s;
}

std::string Table5::csv() const {
  std::string s = "operator,strong,periodic,strong_objective,periodic_objective,expected_strong,expected_periodic,match\n";
  for (const auto& r : rows)
    s += r.op + "," + to_string(r.strong.status) + "," + to_string(r.periodic.status) + "," +
         format_double(r.strong.objective) + "," + format_double(r.periodic.objective) + "," + r.expected_strong +
         "," + r.expected_periodic + "," + (r.matches() ? "1" : "0") + "\n";
  return s;
}

json Table5::to_json() const {
  json j;
  j["grid"] = grid;
  j["eps"] = eps;
  j["beta"] = beta;
  j["gamma"] = gamma;
  j["matches_expected"] = matches_expected();
  json rs = json::array();
  for (const auto& r : rows)
    rs.push_back({{"operator", r.op},
                  {"strong", r.strong.to_json()},
                  {"periodic", r.periodic.to_json()},
                  {"expected", {{"strong", r.expected_strong}, {"periodic", r.expected_periodic}}},
                  {"match", r.matches()}});
  j["rows"] = rs;
  return j;
}

Table5 table5(const SearchConfig& cfg, double eps, double beta, double gamma) {
  cfg.validate();
  Table5 t;
  t.grid = cfg.grid;
  t.eps = eps;
  t.beta = beta;
  t.gamma = gamma;
  const std::vector<std::array<std::string, 3>> cases{
      {"div", "violation", "violation"},
      {"cauchy_riemann", "violation", "none_found"},
      {"curl2d", "violation", "violation"},
  };
  for (const auto& [name, es, ep] : cases) {
    const OperatorA op = operator_by_name(name);
    const HomogeneousIntegrand v = homogeneous_by_name("neg_norm_p", op.m(), R"({"p":2})");
    BoundaryParams bp;
    bp.normal = {1.0, 0.0};
    bp.eps = eps;
    bp.beta = beta;
    bp.gamma = gamma;
    bp.x0 = {0.0, 0.0};
    Table5Row row;
    row.op = name;
    row.strong = test_strong_aqcb(op, v, bp, cfg);
    row.periodic = test_aqcb_periodic(op, v, bp, cfg);
    row.expected_strong = es;
    row.expected_periodic = ep;
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Dispatch -------------------------------------------------------------------------------

RunResult run(const ExperimentConfig& cfg) {
  const std::string& c = cfg.command;
  if (c == "rank-check") {
    const OperatorA op = resolve_operator(cfg.op);
    const RankReport rep = check_constant_rank(op);
    RunResult res;
    emit_json(cfg, rank_report_json(op, rep).dump(2) + "\n", res);
    return res;
  }
  if (c == "project") return run_project(cfg, resolve_operator(cfg.op));
  if (c == "test-aqc" || c == "test-aqcb" || c == "test-strong-aqcb" || c == "qcb-gap")
    return run_tester(cfg, resolve_operator(cfg.op));
  if (c == "demo-cr") return run_demo_cr(cfg);
  if (c == "demo-dilation") return run_demo_dilation(cfg);
  if (c == "demo-hessian") return run_demo_hessian(cfg);
  if (c == "demo-cofactor") return run_demo_cofactor(cfg);
  if (c == "table5") return run_table5(cfg);
  throw ConfigError("unknown command '" + c + "'");
}

}  // namespace afreeqc
