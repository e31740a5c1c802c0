// afreeqc command-line tool.
#include "afreeqc/errors.hpp"
#include "afreeqc/experiment.hpp"
#include "afreeqc/io.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

using afreeqc::ExperimentConfig;

struct Common {
  std::string op = "div";
  std::string integrand = "neg_norm_p";
  std::string params = "{}";
  std::vector<double> s0, normal;
  double eps = 0.5, beta = 0.5, gamma = 0.5;
  int grid = 0;
  int restarts = 0;
  long long seed = -1;
  std::string out, witness;
};

nlohmann::json op_json(const std::string& op) {
  // a catalog name, or a path / inline object in the operator JSON format
  if (!op.empty() && op.front() == '{') return nlohmann::json::parse(op);
  if (op.size() > 5 && op.substr(op.size() - 5) == ".json") return nlohmann::json::parse(afreeqc::read_file(op));
  return op;
}

void add_op(CLI::App* sc, Common& c) {
  sc->add_option("--op", c.op, "catalog name, inline JSON or .json file")->capture_default_str();
}

void add_search(CLI::App* sc, Common& c) {
  sc->add_option("--grid", c.grid, "points per axis");
  sc->add_option("--restarts", c.restarts, "random restarts");
  sc->add_option("--seed", c.seed, "search seed");
}

void add_tester(CLI::App* sc, Common& c, bool interior) {
  add_op(sc, c);
  sc->add_option("--integrand", c.integrand, "integrand name or expr:<formula>")->capture_default_str();
  sc->add_option("--params", c.params, "integrand parameters as JSON")->capture_default_str();
  if (interior) {
    sc->add_option("--s0", c.s0, "base point s0 (m entries)")->delimiter(',');
  } else {
    sc->add_option("--normal", c.normal, "outer normal (n entries)")->delimiter(',');
    sc->add_option("--beta", c.beta, "strong constraint level")->capture_default_str();
    sc->add_option("--gamma", c.gamma, "periodic outer-mass level")->capture_default_str();
  }
  sc->add_option("--eps", c.eps, "violation margin epsilon")->capture_default_str();
  add_search(sc, c);
  sc->add_option("--out", c.out, "certificate JSON");
  sc->add_option("--witness", c.witness, "witness AFK1 (default <out>.witness.afk1)");
}

ExperimentConfig to_config(const std::string& command, const Common& c) {
  ExperimentConfig cfg;
  cfg.command = command;
  cfg.op = op_json(c.op);
  cfg.integrand = c.integrand;
  cfg.integrand_params = nlohmann::json::parse(c.params);
  cfg.s0 = c.s0;
  cfg.normal = c.normal;
  cfg.eps = c.eps;
  cfg.beta = c.beta;
  cfg.gamma = c.gamma;
  if (c.grid > 0) cfg.search.grid = c.grid;
  if (c.restarts > 0) cfg.search.restarts = c.restarts;
  if (c.seed >= 0) cfg.search.seed = static_cast<std::uint64_t>(c.seed);
  cfg.out = c.out;
  cfg.witness = c.witness;
  // revalidate through the JSON form so CLI and config files share one set of checks
  return ExperimentConfig::from_json(cfg.to_json());
}

int execute(const ExperimentConfig& cfg, bool dump) {
  if (dump) {
    std::cout << cfg.to_json_string();
    return afreeqc::kExitOk;
  }
  const auto res = afreeqc::run(cfg);
  if (!res.summary.empty()) std::cout << res.summary << "\n";
  for (const auto& f : res.files) std::cerr << "wrote " << f << "\n";
  return res.exit_code;
}

int list_ops() {
  for (const auto& name : afreeqc::catalog_names()) {
    const auto op = afreeqc::operator_by_name(name);
    const auto rep = afreeqc::check_constant_rank(op);
    std::cout << name << "  n=" << op.n() << " m=" << op.m() << " d=" << op.d() << " rank=" << rep.rank
              << (rep.constant_rank() ? "" : " (not constant rank)") << "\n";
  }
  return afreeqc::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical toolkit for A-free fields and A-quasiconvexity tests"};
  app.require_subcommand(1);
  bool dump = false;
  app.add_flag("--dump-config", dump, "print the experiment config as JSON instead of running");

  Common c;
  std::string command;

  auto* ops = app.add_subcommand("ops", "operator catalog");
  ops->add_subcommand("list", "list catalog operators")->final_callback([&] { command = "ops-list"; });
  ops->require_subcommand(1);

  auto* rank = app.add_subcommand("rank-check", "constant-rank report");
  std::string rank_op;
  rank->add_option("operator", rank_op, "operator name");
  add_op(rank, c);
  rank->add_option("--out", c.out, "report JSON");
  rank->final_callback([&] {
    command = "rank-check";
    if (!rank_op.empty()) c.op = rank_op;
  });

  auto* project = app.add_subcommand("project", "apply the A-free projection");
  std::string in, report;
  add_op(project, c);
  project->add_option("--in", in, "input AFK1 field (seeded random field when omitted)");
  project->add_option("--out", c.out, "projected AFK1 field");
  project->add_option("--report", report, "projection report JSON");
  add_search(project, c);
  project->final_callback([&] { command = "project"; });

  for (const char* name : {"test-aqc", "test-aqcb", "test-strong-aqcb", "qcb-gap"}) {
    auto* sc = app.add_subcommand(name, std::string("run the ") + name + " tester");
    add_tester(sc, c, std::string(name) == "test-aqc");
    sc->final_callback([&command, name] { command = name; });
  }

  auto* demo = app.add_subcommand("demo", "sequence demonstrations");
  demo->require_subcommand(1);
  int k_max = 64, demo_grid = 0;
  bool truncation = false;
  std::string sequence = "oscillating";
  for (const char* name : {"cr", "dilation", "hessian", "cofactor"}) {
    auto* sc = demo->add_subcommand(name, std::string(name) + " sequence");
    sc->add_option("--k-max", k_max, "largest k (powers of two)")->capture_default_str();
    sc->add_option("--grid", demo_grid, "grid points per axis");
    sc->add_option("--out", c.out, "CSV report (JSON sidecar next to it)");
    const std::string n(name);
    if (n == "cr" || n == "dilation") {
      add_op(sc, c);
      sc->add_flag("--truncation", truncation, "add the truncated negative norm column");
      sc->add_option("--integrand", c.integrand, "integrand for the I column")->capture_default_str();
      sc->add_option("--params", c.params, "integrand parameters as JSON")->capture_default_str();
    }
    if (n == "hessian") sc->add_option("--seed", c.seed, "bump search seed");
    if (n == "cofactor") sc->add_option("--sequence", sequence, "constant | perturbed | oscillating")->capture_default_str();
    sc->final_callback([&command, n] { command = "demo-" + n; });
  }

  auto* t5 = app.add_subcommand("table5", "boundary tester matrix with v = -|s|^2");
  t5->add_option("--grid", c.grid, "points per axis");
  t5->add_option("--restarts", c.restarts, "random restarts");
  t5->add_option("--seed", c.seed, "search seed");
  t5->add_option("--eps", c.eps, "violation margin")->capture_default_str();
  t5->add_option("--beta", c.beta, "strong constraint level")->capture_default_str();
  t5->add_option("--gamma", c.gamma, "periodic outer-mass level")->capture_default_str();
  t5->add_option("--out", c.out, "markdown table (.csv and .json next to it)");
  t5->final_callback([&] { command = "table5"; });

  auto* runc = app.add_subcommand("run", "run an experiment config file");
  std::string config_path;
  runc->add_option("--config", config_path, "ExperimentConfig JSON")->required();
  runc->final_callback([&] { command = "run"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? afreeqc::kExitOk : afreeqc::kExitError;
  }

  try {
    if (command == "ops-list") return list_ops();
    if (command == "run") return execute(ExperimentConfig::from_json_string(afreeqc::read_file(config_path)), dump);
    if (command == "project") {
      auto cfg = to_config(command, c);
      cfg.input = in;
      cfg.report = report;
      return execute(cfg, dump);
    }
    if (command.rfind("demo-", 0) == 0) {
      auto cfg = to_config(command, c);
      cfg.k_max = k_max;
      cfg.truncation = truncation;
      cfg.sequence = sequence;
      if (demo_grid > 0) cfg.grid = demo_grid;
      else if (command == "demo-cofactor") cfg.grid = 256;
      return execute(ExperimentConfig::from_json(cfg.to_json()), dump);
    }
    return execute(to_config(command, c), dump);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return afreeqc::kExitError;
  }
}
