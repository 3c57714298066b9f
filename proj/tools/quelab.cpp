// Command-line driver: one subcommand per pipeline stage plus `report`.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "quelab/harness.hpp"

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned workers = 0;
  bool workers_set = false;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON experiment config")->check(CLI::ExistingFile);
  app->add_option_function<std::uint64_t>(
      "--seed", [&c](const std::uint64_t& s) { c.seed = s, c.seed_set = true; }, "master seed");
  app->add_option_function<unsigned>(
      "--workers", [&c](const unsigned& w) { c.workers = w, c.workers_set = true; }, "worker threads (0: all cores)");
  app->add_option("--out", c.out, "output directory (default: $QUELAB_OUT, then the config)");
}

quelab::ExperimentConfig load(const Common& c) {
  quelab::ExperimentConfig cfg = c.config.empty() ? quelab::ExperimentConfig{} : quelab::ExperimentConfig::load(c.config);
  if (c.seed_set) cfg.seed = c.seed;
  if (c.workers_set) cfg.workers = c.workers;
  return cfg;
}

// Enables exactly the stages the subcommand needs.
void only(quelab::ExperimentConfig& cfg, const std::string& stage) {
  cfg.perturb.enabled = stage == "perturb";
  cfg.weyl.enabled = stage == "weyl";
  cfg.que.enabled = stage == "que";
  cfg.concentration.enabled = stage == "concentration";
  cfg.heatkernel.enabled = stage == "heatkernel";
}

int execute(quelab::ExperimentConfig cfg, const Common& c) {
  const auto dir = quelab::resolve_output(cfg, c.out);
  const auto m = quelab::run(cfg, dir);
  for (const auto& s : m.stages) {
    if (s.status == "skipped") continue;
    std::cout << s.name << ": " << s.status;
    if (!s.error.empty()) std::cout << " (" << s.error << ')';
    std::cout << " [" << s.wall_seconds << " s]\n";
  }
  for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "wrote " << dir.string() << '\n';
  return m.failed_stage.empty() ? 0 : 1;
}

quelab::Point parse_point(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw CLI::ValidationError("point", "expected x,y");
  return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random-rotation QUE experiments on planar Dirichlet domains"};
  app.set_version_flag("--version", std::string(QUELAB_VERSION) + " (" + QUELAB_GIT_DESCRIBE + ")");
  app.require_subcommand(1);

  Common common;
  std::string action;
  const std::vector<std::string> stages{"spectrum", "partition", "perturb", "weyl", "que", "concentration"};
  for (const auto& name : stages) {
    auto* sub = app.add_subcommand(name, "run the " + name + " stage (and what it depends on)");
    add_common(sub, common);
    sub->callback([&action, name] { action = name; });
  }

  auto* perturb = app.get_subcommand("perturb");
  std::string spectrum_file;
  for (auto* sub : {perturb, app.get_subcommand("weyl"), app.get_subcommand("que"), app.get_subcommand("concentration")})
    sub->add_option("--spectrum", spectrum_file, "read a saved spectrum file")->check(CLI::ExistingFile);
  double epsilon = -1, gamma = -1;
  for (auto* sub : {app.get_subcommand("partition"), perturb, app.get_subcommand("que")}) {
    sub->add_option("--epsilon", epsilon, "shell width parameter in (0, 1)");
    sub->add_option("--gamma", gamma, "subdivision exponent in [0, 1]");
  }

  auto* heat = app.add_subcommand("heatkernel", "Monte Carlo Dirichlet heat kernel");
  add_common(heat, common);
  std::vector<double> ts;
  std::string x, y, bridge, convention;
  std::size_t n_paths = 0;
  double dt = 0;
  heat->add_option("--t", ts, "times (repeatable)");
  heat->add_option("--x", x, "start point x1,x2");
  heat->add_option("--y", y, "target point y1,y2");
  heat->add_option("--n-paths", n_paths, "paths per estimate");
  heat->add_option("--dt", dt, "Euler step");
  heat->add_option("--bridge", bridge, "on|off")->check(CLI::IsMember({"on", "off"}));
  heat->add_option("--convention", convention, "half|full")->check(CLI::IsMember({"half", "full"}));
  heat->callback([&action] { action = "heatkernel"; });

  auto* rep = app.add_subcommand("report", "summarize a run directory");
  std::string report_dir;
  rep->add_option("dir", report_dir, "run directory")->required();
  rep->callback([&action] { action = "report"; });

  CLI11_PARSE(app, argc, argv);

  try {
    if (action == "report") {
      std::cout << quelab::report(report_dir);
      return 0;
    }
    quelab::ExperimentConfig cfg = load(common);
    only(cfg, action);
    if (!spectrum_file.empty()) cfg.spectrum.file = spectrum_file;
    if (epsilon >= 0) cfg.partition.epsilon = epsilon;
    if (gamma >= 0) cfg.partition.gamma = gamma;
    if (action == "heatkernel") {
      if (!ts.empty()) cfg.heatkernel.t = ts;
      if (!x.empty()) cfg.heatkernel.x = parse_point(x);
      if (!y.empty()) cfg.heatkernel.y = parse_point(y);
      if (n_paths) cfg.heatkernel.n_paths = n_paths;
      if (dt > 0) cfg.heatkernel.dt = dt;
      if (!bridge.empty()) cfg.heatkernel.bridge = bridge == "on";
      if (!convention.empty()) cfg.heatkernel.convention = convention;
    }
    cfg.validate();
    return execute(cfg, common);
  } catch (const quelab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
