#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "quelab/concentration.hpp"
#include "quelab/errors.hpp"
#include "quelab/fd.hpp"
#include "quelab/haar.hpp"
#include "quelab/heat.hpp"
#include "quelab/observables.hpp"
#include "quelab/operator.hpp"
#include "quelab/partition.hpp"
#include "quelab/spectrum.hpp"

#ifndef QUELAB_VERSION
#define QUELAB_VERSION "0.0.0"
#endif
#ifndef QUELAB_GIT_DESCRIBE
#define QUELAB_GIT_DESCRIBE "unknown"
#endif

namespace quelab {

using json = nlohmann::json;

/// Version of every CSV layout written by `run`. `report` refuses other versions.
constexpr int kSchemaVersion = 1;

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// Builds an observable from its config name: const, cos_x<k>, cos_y<k>, bump,
/// step<seed>, xi1sq, or pos*mom for a tensor product.
inline Observable parse_observable(const std::string& name) {
  if (const auto star = name.find('*'); star != std::string::npos)
    return observables::tensor(parse_observable(name.substr(0, star)), parse_observable(name.substr(star + 1)));
  auto suffix_int = [&](const std::string& prefix) -> std::optional<long long> {
    if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size()) return std::nullopt;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(name.substr(prefix.size()), &used);
      if (used + prefix.size() != name.size()) return std::nullopt;
      return v;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };
  if (name == "const") return observables::constant(1.0);
  if (name == "bump") return observables::bump();
  if (name == "xi1sq") return observables::xi1_squared();
  if (auto k = suffix_int("cos_x")) return observables::cos_x(static_cast<int>(*k));
  if (auto k = suffix_int("cos_y")) return observables::cos_y(static_cast<int>(*k));
  if (auto k = suffix_int("step")) return observables::random_step(static_cast<std::uint64_t>(*k));
  throw ConfigError("observables", "unknown observable '" + name + "'");
}

struct ExperimentConfig {
  std::string domain = "rectangle 1 1";
  struct {
    std::string backend = "analytic";
    double lambda_max = 50.0;
    double h = 0.02;
    std::size_t count = 50;
    std::string file;  // read a saved spectrum instead of computing one
  } spectrum;
  struct {
    double epsilon = 0.2;
    double gamma = 0.0;
    std::string placement = "equispaced";
  } partition;
  struct {
    bool enabled = true;
    std::size_t n = 0;  // 0: whole spectrum
  } perturb;
  std::vector<std::string> observables{"cos_x1", "xi1sq"};
  std::vector<std::pair<double, double>> windows;  // (lambda, alpha)
  struct {
    bool enabled = true;
    std::vector<double> lambdas;  // empty: the largest lambda with a full window
    double epsilon = 0.1;
    std::vector<double> trace_times;
  } weyl;
  struct {
    bool enabled = true;
  } que;
  struct {
    bool enabled = false;
    std::string observable = "cos_x1";
    double start_lambda = 0.0;  // 0: middle of the spectrum
    std::vector<std::size_t> sizes{8, 32};
    std::vector<double> t{0.05};
    std::size_t replicas = 1000;
  } concentration;
  struct {
    bool enabled = false;
    std::vector<double> t{0.05};
    Point x{0.5, 0.5};
    Point y{0.5, 0.5};
    std::size_t n_paths = 10000;
    double dt = 1e-4;
    bool bridge = true;
    std::string convention = "half";
  } heatkernel;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string output = "quelab-out";

  Domain parsed_domain() const {
    try {
      return Domain::parse(domain);
    } catch (const DomainError& e) {
      throw ConfigError("domain", e.what());
    }
  }

  /// Checks ranges; throws ConfigError naming the first bad field.
  void validate() const {
    (void)parsed_domain();
    if (spectrum.backend != "analytic" && spectrum.backend != "grid")
      throw ConfigError("spectrum.backend", "must be 'analytic' or 'grid'");
    if (spectrum.backend == "analytic" && !(spectrum.lambda_max > 0 && std::isfinite(spectrum.lambda_max)))
      throw ConfigError("spectrum.lambda_max", "must be positive and finite");
    if (spectrum.backend == "grid" && !(spectrum.h > 0 && spectrum.h < 1))
      throw ConfigError("spectrum.h", "grid spacing must lie in (0, 1)");
    if (spectrum.backend == "grid" && spectrum.count == 0) throw ConfigError("spectrum.count", "must be positive");
    if (!(partition.epsilon > 0 && partition.epsilon < 1)) throw ConfigError("partition.epsilon", "must lie in (0, 1)");
    if (!(partition.gamma >= 0 && partition.gamma <= 1)) throw ConfigError("partition.gamma", "must lie in [0, 1]");
    if (partition.placement != "equispaced" && partition.placement != "jittered")
      throw ConfigError("partition.placement", "must be 'equispaced' or 'jittered'");
    for (const auto& o : observables) (void)parse_observable(o);
    for (const auto& [l, a] : windows)
      if (!(l > 0 && a > 0)) throw ConfigError("windows", "lambda and alpha must be positive");
    if (!(weyl.epsilon > 0)) throw ConfigError("weyl.epsilon", "must be positive");
    for (double t : weyl.trace_times)
      if (!(t > 0)) throw ConfigError("weyl.trace_times", "times must be positive");
    (void)parse_observable(concentration.observable);
    if (concentration.replicas < 100) throw ConfigError("concentration.replicas", "need at least 100");
    for (auto n : concentration.sizes)
      if (n < 2) throw ConfigError("concentration.sizes", "block sizes must be >= 2");
    for (double t : concentration.t)
      if (!(t > 0)) throw ConfigError("concentration.t", "thresholds must be positive");
    for (double t : heatkernel.t)
      if (!(t > 0)) throw ConfigError("heatkernel.t", "times must be positive");
    if (heatkernel.n_paths == 0) throw ConfigError("heatkernel.n_paths", "must be positive");
    if (!(heatkernel.dt > 0)) throw ConfigError("heatkernel.dt", "must be positive");
    if (heatkernel.convention != "half" && heatkernel.convention != "full")
      throw ConfigError("heatkernel.convention", "must be 'half' or 'full'");
    if (heatkernel.enabled) {
      const Domain d = parsed_domain();
      if (!d.contains(heatkernel.x)) throw ConfigError("heatkernel.x", "point outside the domain");
      if (!d.contains(heatkernel.y)) throw ConfigError("heatkernel.y", "point outside the domain");
    }
  }

  json to_json() const {
    json j;
    j["domain"] = domain;
    j["spectrum"] = {{"backend", spectrum.backend}, {"lambda_max", spectrum.lambda_max}, {"h", spectrum.h},
                     {"count", spectrum.count}, {"file", spectrum.file}};
    j["partition"] = {{"epsilon", partition.epsilon}, {"gamma", partition.gamma}, {"placement", partition.placement}};
    j["perturb"] = {{"enabled", perturb.enabled}, {"n", perturb.n}};
    j["observables"] = observables;
    j["windows"] = json::array();
    for (const auto& [l, a] : windows) j["windows"].push_back({{"lambda", l}, {"alpha", a}});
    j["weyl"] = {{"enabled", weyl.enabled}, {"lambdas", weyl.lambdas}, {"epsilon", weyl.epsilon},
                 {"trace_times", weyl.trace_times}};
    j["que"] = {{"enabled", que.enabled}};
    j["concentration"] = {{"enabled", concentration.enabled},   {"observable", concentration.observable},
                          {"start_lambda", concentration.start_lambda}, {"sizes", concentration.sizes},
                          {"t", concentration.t},               {"replicas", concentration.replicas}};
    j["heatkernel"] = {{"enabled", heatkernel.enabled},
                       {"t", heatkernel.t},
                       {"x", {heatkernel.x.x, heatkernel.x.y}},
                       {"y", {heatkernel.y.x, heatkernel.y.y}},
                       {"n_paths", heatkernel.n_paths},
                       {"dt", heatkernel.dt},
                       {"bridge", heatkernel.bridge},
                       {"convention", heatkernel.convention}};
    j["seed"] = seed;
    j["workers"] = workers;
    j["output"] = output;
    return j;
  }

  /// Reads a config; absent keys keep their defaults, unknown keys are rejected.
  static ExperimentConfig from_json(const json& j) {
    ExperimentConfig c;
    if (!j.is_object()) throw ConfigError("<root>", "config must be an object");
    const json defaults = c.to_json();
    auto field = [](const json& obj, const std::string& path, const char* key, auto& dst) {
      if (!obj.contains(key)) return;
      try {
        obj.at(key).get_to(dst);
      } catch (const json::exception& e) {
        throw ConfigError(path + key, e.what());
      }
    };
    auto section = [&](const char* name, std::function<void(const json&, const std::string&)> read) {
      if (!j.contains(name)) return;
      const json& s = j.at(name);
      if (!s.is_object()) throw ConfigError(name, "must be an object");
      for (const auto& [k, v] : s.items())
        if (!defaults.at(name).contains(k)) throw ConfigError(std::string(name) + "." + k, "unknown key");
      read(s, std::string(name) + ".");
    };
    auto point = [](const json& obj, const std::string& path, const char* key, Point& dst) {
      if (!obj.contains(key)) return;
      const json& v = obj.at(key);
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ConfigError(path + key, "expected [x, y]");
      dst = {v[0].get<double>(), v[1].get<double>()};
    };
    for (const auto& [k, v] : j.items())
      if (!defaults.contains(k)) throw ConfigError(k, "unknown key");

    field(j, "", "domain", c.domain);
    section("spectrum", [&](const json& s, const std::string& p) {
      field(s, p, "backend", c.spectrum.backend);
      field(s, p, "lambda_max", c.spectrum.lambda_max);
      field(s, p, "h", c.spectrum.h);
      field(s, p, "count", c.spectrum.count);
      field(s, p, "file", c.spectrum.file);
    });
    section("partition", [&](const json& s, const std::string& p) {
      field(s, p, "epsilon", c.partition.epsilon);
      field(s, p, "gamma", c.partition.gamma);
      field(s, p, "placement", c.partition.placement);
    });
    section("perturb", [&](const json& s, const std::string& p) {
      field(s, p, "enabled", c.perturb.enabled);
      field(s, p, "n", c.perturb.n);
    });
    field(j, "", "observables", c.observables);
    if (j.contains("windows")) {
      c.windows.clear();
      if (!j.at("windows").is_array()) throw ConfigError("windows", "must be an array");
      for (const auto& w : j.at("windows")) {
        if (!w.is_object() || !w.contains("lambda") || !w.contains("alpha"))
          throw ConfigError("windows", "each window needs lambda and alpha");
        c.windows.emplace_back(w.at("lambda").get<double>(), w.at("alpha").get<double>());
      }
    }
    section("weyl", [&](const json& s, const std::string& p) {
      field(s, p, "enabled", c.weyl.enabled);
      field(s, p, "lambdas", c.weyl.lambdas);
      field(s, p, "epsilon", c.weyl.epsilon);
      field(s, p, "trace_times", c.weyl.trace_times);
    });
    section("que", [&](const json& s, const std::string& p) { field(s, p, "enabled", c.que.enabled); });
    section("concentration", [&](const json& s, const std::string& p) {
      field(s, p, "enabled", c.concentration.enabled);
      field(s, p, "observable", c.concentration.observable);
      field(s, p, "start_lambda", c.concentration.start_lambda);
      field(s, p, "sizes", c.concentration.sizes);
      field(s, p, "t", c.concentration.t);
      field(s, p, "replicas", c.concentration.replicas);
    });
    section("heatkernel", [&](const json& s, const std::string& p) {
      field(s, p, "enabled", c.heatkernel.enabled);
      field(s, p, "t", c.heatkernel.t);
      point(s, p, "x", c.heatkernel.x);
      point(s, p, "y", c.heatkernel.y);
      field(s, p, "n_paths", c.heatkernel.n_paths);
      field(s, p, "dt", c.heatkernel.dt);
      field(s, p, "bridge", c.heatkernel.bridge);
      field(s, p, "convention", c.heatkernel.convention);
    });
    field(j, "", "seed", c.seed);
    field(j, "", "workers", c.workers);
    field(j, "", "output", c.output);
    c.validate();
    return c;
  }

  static ExperimentConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot open " + path.string());
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("--config", e.what());
    }
    return from_json(j);
  }

  std::string hash() const { return hex64(fnv1a(to_json().dump())); }
};

/// Output directory: explicit flag, then $QUELAB_OUT, then the config value.
inline std::filesystem::path resolve_output(const ExperimentConfig& c, const std::string& flag = {}) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("QUELAB_OUT"); env && *env) return env;
  return c.output;
}

struct StageRecord {
  std::string name;
  std::string status;  // ok | failed | skipped
  double wall_seconds = 0.0;
  std::string error;
};

struct Metric {
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string description;
};

struct RunManifest {
  std::string config_hash;
  std::string version = QUELAB_VERSION;
  std::string git_describe = QUELAB_GIT_DESCRIBE;
  std::uint64_t seed = 0;
  std::vector<StageRecord> stages;
  std::vector<std::string> warnings;
  std::map<std::string, Metric> metrics;
  std::map<std::string, std::string> checksums;  // file -> fnv1a hex
  std::string failed_stage;

  json to_json() const {
    json j;
    j["config_hash"] = config_hash;
    j["version"] = version;
    j["git_describe"] = git_describe;
    j["seed"] = seed;
    j["schema_version"] = kSchemaVersion;
    j["stages"] = json::array();
    for (const auto& s : stages)
      j["stages"].push_back({{"name", s.name}, {"status", s.status}, {"wall_seconds", s.wall_seconds}, {"error", s.error}});
    j["warnings"] = warnings;
    j["metrics"] = json::object();
    for (const auto& [k, m] : metrics)
      j["metrics"][k] = {{"value", m.value}, {"tolerance", m.tolerance}, {"pass", m.pass}, {"description", m.description}};
    j["outputs"] = json::object();
    for (const auto& [f, h] : checksums) j["outputs"][f] = {{"fnv1a", h}, {"schema_version", kSchemaVersion}};
    j["failed_stage"] = failed_stage;
    return j;
  }
};

/// The canonical stage order of a run.
inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"spectrum", "partition", "perturb", "weyl", "que", "concentration", "heatkernel"};
  return names;
}

namespace detail {

inline std::string fmt17(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

class RunContext {
 public:
  RunContext(const ExperimentConfig& cfg, std::filesystem::path dir) : cfg_(cfg), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    m_.config_hash = cfg.hash();
    m_.seed = cfg.seed;
  }

  RunManifest& manifest() { return m_; }
  const ExperimentConfig& config() const { return cfg_; }

  void write(const std::string& name, const std::string& bytes) {
    std::ofstream out(dir_ / name, std::ios::binary);
    out << bytes;
    if (!out) throw Error("cannot write " + (dir_ / name).string());
    m_.checksums[name] = hex64(fnv1a(bytes));
  }

  void metric(const std::string& key, double value, double tol, bool pass, std::string desc) {
    m_.metrics[key] = Metric{value, tol, pass, std::move(desc)};
  }

  void warn(std::string w) { m_.warnings.push_back(std::move(w)); }

  /// Runs one stage, recording its status; a failed dependency marks it failed without running.
  void stage(const std::string& name, bool enabled, std::initializer_list<const char*> deps, const std::function<void()>& body) {
    StageRecord r;
    r.name = name;
    if (!enabled) {
      r.status = "skipped";
      m_.stages.push_back(r);
      return;
    }
    for (const char* d : deps) {
      if (status(d) != "ok") {
        r.status = "failed";
        r.error = std::string("dependency '") + d + "' did not complete";
        if (m_.failed_stage.empty()) m_.failed_stage = name;
        m_.stages.push_back(r);
        return;
      }
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
      r.status = "ok";
    } catch (const std::exception& e) {
      r.status = "failed";
      r.error = e.what();
      if (m_.failed_stage.empty()) m_.failed_stage = name;
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m_.stages.push_back(r);
  }

  std::string status(const std::string& name) const {
    for (const auto& s : m_.stages)
      if (s.name == name) return s.status;
    return "not run";
  }

  void write_manifest() {
    std::ofstream out(dir_ / "manifest.json");
    out << m_.to_json().dump(2) << '\n';
  }

 private:
  const ExperimentConfig& cfg_;
  std::filesystem::path dir_;
  RunManifest m_;
};

}  // namespace detail

/// Executes the enabled stages spectrum -> partition -> perturb -> weyl/que ->
/// concentration -> heatkernel, writing CSVs and manifest.json into `dir`. A failing
/// stage is recorded and the stages that do not depend on it still run; the manifest is
/// written in every case.
inline RunManifest run(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  detail::RunContext ctx(cfg, dir);
  const unsigned saved_workers = default_workers();
  default_workers() = cfg.workers;
  const Domain domain = cfg.parsed_domain();

  std::optional<Spectrum> spec;
  std::optional<BlockPartition> part;
  std::optional<ReassignedSpectrum> reas;

  try {
    const bool need_partition = cfg.perturb.enabled || cfg.que.enabled;
    const bool need_spectrum = need_partition || cfg.weyl.enabled || cfg.concentration.enabled;
    ctx.stage("spectrum", need_spectrum, {}, [&] {
      if (!cfg.spectrum.file.empty()) {
        std::ifstream in(cfg.spectrum.file);
        if (!in) throw ConfigError("spectrum.file", "cannot open " + cfg.spectrum.file);
        spec.emplace(read_spectrum(in));
      } else if (cfg.spectrum.backend == "analytic") {
        if (domain.kind() != DomainKind::rectangle) throw UnsupportedBackendError("analytic backend needs a rectangle");
        const auto& r = std::get<Rectangle>(domain.shape());
        spec.emplace(rectangle_spectrum(r.lx, r.ly, cfg.spectrum.lambda_max));
      } else {
        spec.emplace(fd_spectrum(domain, cfg.spectrum.h, cfg.spectrum.count));
        ctx.metric("spectrum.fd_residual", fd_max_residual(*spec), 1e-8, fd_max_residual(*spec) <= 1e-8,
                   "largest relative FD eigen-residual");
      }
      std::ostringstream os;
      write_spectrum(os, *spec);
      ctx.write("spectrum.txt", os.str());
    });

    ctx.stage("partition", need_partition, {"spectrum"}, [&] {
      part.emplace(build_partition(*spec, cfg.partition.epsilon, cfg.partition.gamma));
      const DistinctStrategy strat{cfg.partition.placement == "jittered" ? Placement::jittered : Placement::equispaced,
                                   cfg.seed};
      reas.emplace(reassign_distinct(*part, reassign_left(*part, *spec), strat));
      std::ostringstream os;
      write_partition_csv(os, *part);
      ctx.write("partition.csv", os.str());
      std::ostringstream ls;
      ls.precision(17);
      ls << "index,lambda,lambda_prime,lambda_dprime,block\n";
      for (std::size_t i = 0; i < spec->size(); ++i)
        ls << i << ',' << (*spec)[i].lambda << ',' << reas->lambda_prime[i] << ',' << reas->lambda_dprime[i] << ','
           << reas->block_of[i] << '\n';
      ctx.write("reassigned.csv", ls.str());
      ctx.metric("partition.threshold_prime", reas->threshold_prime, 0.0, std::isfinite(reas->threshold_prime),
                 "lambda from which |l^2 - l'^2| <= 3 eps (l^2)^(1-gamma/2)");
      ctx.metric("partition.threshold_dprime", reas->threshold_dprime, 0.0, std::isfinite(reas->threshold_dprime),
                 "lambda from which |l'^2 - l''^2| <= 3 eps (l'^2)^(1-gamma/2)");
    });

    ctx.stage("perturb", cfg.perturb.enabled, {"partition"}, [&] {
      const std::size_t n = cfg.perturb.n ? std::min(cfg.perturb.n, spec->size()) : spec->size();
      const auto rot = rotate_partition(*spec, *part, n, cfg.seed);
      const PerturbedOperator op = assemble(*spec, *reas, rot, n, cfg.partition.epsilon, cfg.partition.gamma);
      const double eps = cfg.partition.epsilon;
      const double snorm = operator_norm(op.s);
      const double wnorm = weighted_operator_norm(op, 0.5 * cfg.partition.gamma);
      const EigenCheck ec = check_eigenstructure(op);
      const NeumannCheck nc = neumann_check(op.s);
      ctx.metric("perturb.s_norm", snorm, 10 * eps, snorm <= 10 * eps, "||S||_2 <= 10 eps");
      ctx.metric("perturb.weighted_norm", wnorm, 0.0, std::isfinite(wnorm), "||<mu>^(gamma/2) S||_2 (finite)");
      ctx.metric("perturb.eig_value_error", ec.max_value_rel_error, 1e-10, ec.max_value_rel_error <= 1e-10,
                 "Tpp eigenvalues vs lambda''^2 (relative)");
      ctx.metric("perturb.eig_vector_error", ec.max_vector_error, 1e-8, ec.max_vector_error <= 1e-8,
                 "Tpp eigenvectors vs rotated rows (up to sign)");
      if (nc.applicable)
        ctx.metric("perturb.neumann_error", nc.error, nc.bound, nc.error <= nc.bound * (1 + 1e-6) + 1e-13,
                   "Neumann remainder at K=20 vs ||S||^21/(1-||S||)");
      std::ostringstream ss;
      ss.precision(17);
      ss << "n,epsilon,gamma,s_norm,weighted_norm,eig_value_error,eig_vector_error,neumann_error,neumann_bound\n";
      ss << op.n << ',' << eps << ',' << cfg.partition.gamma << ',' << snorm << ',' << wnorm << ','
         << ec.max_value_rel_error << ',' << ec.max_vector_error << ',' << nc.error << ',' << nc.bound << '\n';
      ctx.write("operator.csv", ss.str());
      std::ostringstream ds;
      const auto lam = spec->lambdas();
      write_defect_csv(ds, op, lam);
      ctx.write("defects.csv", ds.str());
    });

    ctx.stage("weyl", cfg.weyl.enabled, {"spectrum"}, [&] {
      const Spectrum& s = *spec;
      std::vector<double> lams = cfg.weyl.lambdas;
      if (lams.empty()) lams.push_back(s.lambda_max() / (1 + cfg.weyl.epsilon));
      const double vol = s.domain().volume();
      std::ostringstream os;
      os.precision(17);
      os << "lambda,count,count_over_lambda2,weyl_constant,epsilon,window_count,window_over_lambda2,window_limit\n";
      const double c0 = vol / (4 * std::numbers::pi);
      const double eps = cfg.weyl.epsilon;
      const double wlim = c0 * ((1 + eps) * (1 + eps) - 1);
      for (double l : lams) {
        const auto n = weyl_count(s, l);
        const auto w = window_count(s, l, eps);
        os << l << ',' << n << ',' << n / (l * l) << ',' << c0 << ',' << eps << ',' << w << ',' << w / (l * l) << ','
           << wlim << '\n';
      }
      const double lt = lams.back();
      const double rel = std::abs(weyl_count(s, lt) / (lt * lt) / c0 - 1);
      ctx.metric("weyl.count_ratio", rel, 0.03, rel <= 0.03, "|N(l)/l^2 - |Omega|/4pi| relative");
      const double wrel = std::abs(window_count(s, lt, eps) / (lt * lt) / wlim - 1);
      ctx.metric("weyl.window_ratio", wrel, 0.10, wrel <= 0.10, "|J|/l^2 vs ((1+eps)^2-1)|Omega|/4pi relative");
      ctx.write("weyl.csv", os.str());

      if (!cfg.weyl.trace_times.empty()) {
        std::ostringstream ts;
        ts.precision(17);
        ts << "t,trace,t_trace,relative_deviation\n";
        for (double t : cfg.weyl.trace_times) {
          try {
            const double tr = heat_trace(s, t);
            ts << t << ',' << tr << ',' << t * tr << ',' << t * tr / c0 - 1 << '\n';
          } catch (const TruncationError& e) {
            ctx.warn("heat_trace t=" + detail::fmt17(t) + ": needs lambda_max " + detail::fmt17(e.required_lambda_max()));
          }
        }
        ctx.write("trace.csv", ts.str());
      }

      std::vector<WindowSum> rows;
      std::ostringstream ws;
      ws.precision(17);
      ws << "observable,lambda,window,count,sum,mean,phase_space_average,residual\n";
      for (const auto& name : cfg.observables) {
        const Observable a = parse_observable(name);
        if (s.backend() == Backend::grid && a.has_momentum()) {
          ctx.warn("weyl: observable " + name + " skipped on the grid backend");
          continue;
        }
        const auto tbl = build_table(s, a);
        for (const auto& [l, al] : cfg.windows) {
          if (l * (1 + al) > s.lambda_max()) {
            ctx.warn("window [" + detail::fmt17(l) + ", ...) exceeds the spectrum cutoff");
            continue;
          }
          const auto w = window_sum(tbl, s, l, al);
          if (w.empty) ctx.warn("empty window at lambda " + detail::fmt17(l) + " for " + name);
          ws << name << ',' << w.lambda << ',' << w.lambda * (1 + w.alpha) << ',' << w.count << ',' << w.sum << ','
             << w.mean << ',' << w.phase_space_average << ',' << w.residual << '\n';
        }
      }
      ctx.write("windows.csv", ws.str());
    });

    ctx.stage("que", cfg.que.enabled, {"partition"}, [&] {
      const Spectrum& s = *spec;
      const auto rot = rotate_partition(s, *part, s.size(), cfg.seed);
      std::vector<BlockView> views;
      for (const auto& r : rot) views.push_back(r.view());
      std::vector<std::pair<double, double>> wins;
      for (const auto& [l, a] : cfg.windows) wins.emplace_back(l, l * (1 + a));
      std::string bytes;
      bool header = true;
      for (const auto& name : cfg.observables) {
        const Observable a = parse_observable(name);
        if (s.backend() == Backend::grid && a.has_momentum()) {
          ctx.warn("que: observable " + name + " skipped on the grid backend");
          continue;
        }
        const QueReport rep = que_diagnostic(s, views, a, wins);
        std::ostringstream os;
        write_que_csv(os, rep);
        std::string text = os.str();
        if (!header) text = text.substr(text.find('\n') + 1);
        header = false;
        bytes += text;
        if (!rep.rows.empty()) {
          const QueRow& last = rep.rows.back();
          ctx.metric("que." + name + ".rotated_max_dev", last.rotated_max_dev, 0.1, last.rotated_max_dev <= 0.1,
                     "top block: max |<A v_i,v_i> - B|");
        }
      }
      ctx.write("que.csv", bytes);
    });

    ctx.stage("concentration", cfg.concentration.enabled, {"spectrum"}, [&] {
      const Spectrum& s = *spec;
      const Observable a = parse_observable(cfg.concentration.observable);
      const double start = cfg.concentration.start_lambda > 0 ? cfg.concentration.start_lambda : 0.5 * s.lambda_max();
      std::size_t first = 0;
      while (first < s.size() && s[first].lambda < start) ++first;
      std::vector<TailReport> rows;
      for (std::size_t n : cfg.concentration.sizes) {
        if (first + n > s.size()) throw DomainError("concentration: not enough modes above start_lambda");
        std::vector<std::size_t> members(n);
        for (std::size_t k = 0; k < n; ++k) members[k] = first + k;
        for (double t : cfg.concentration.t)
          rows.push_back(rotation_tail(s, members, a, t, cfg.concentration.replicas, SeedKey{cfg.seed, n, 0}));
      }
      std::ostringstream os;
      write_tail_csv(os, rows);
      ctx.write("concentration.csv", os.str());
      const double t0 = cfg.concentration.t.front();
      bool decreasing = true;
      double prev = 2.0, last = 0.0;
      for (const auto& r : rows) {
        if (r.t != t0) continue;
        decreasing = decreasing && r.empirical_tail < prev;
        prev = last = r.empirical_tail;
      }
      ctx.metric("concentration.tail_decreasing", decreasing ? 1.0 : 0.0, 1.0, decreasing,
                 "tails strictly decreasing in n at the first t");
      ctx.metric("concentration.final_tail", last, 0.01, last <= 0.01, "tail at the largest n");
    });

    ctx.stage("heatkernel", cfg.heatkernel.enabled, {}, [&] {
      const auto& h = cfg.heatkernel;
      const Convention conv = h.convention == "half" ? Convention::half_generator : Convention::full_generator;
      McOptions opt;
      opt.dt = h.dt;
      opt.bridge = h.bridge;
      std::vector<KernelEstimate> rows;
      std::ostringstream os;
      os.precision(17);
      os << "t,x1,x2,y1,y2,value,stderr,n_paths,convention,seed,oracle,truncation_bound\n";
      for (std::size_t k = 0; k < h.t.size(); ++k) {
        const double t = h.t[k];
        const KernelEstimate e = dirichlet_kernel_mc(domain, t, h.x, h.y, h.n_paths, SeedKey{cfg.seed, 0x4ea7 + k, 0}, opt, conv);
        double oracle = NAN, bound = NAN;
        if (domain.kind() == DomainKind::rectangle) {
          const auto& r = std::get<Rectangle>(domain.shape());
          const double th = conv == Convention::half_generator ? t : to_half_time(t);
          const Spectrum ref = rectangle_spectrum(r.lx, r.ly, std::max(std::sqrt(2.0 * 60.0 / th), 10.0));
          const SpectralValue sv = eigen_kernel(ref, th, h.x, h.y);
          oracle = sv.value;
          bound = sv.truncation_bound;
          const double err = std::abs(e.value - oracle);
          const double tol = std::max(3 * e.std_error, 1e-3);
          ctx.metric("heatkernel.t" + detail::fmt17(t) + ".error", err, tol, err <= tol,
                     "|p_MC - p_eigen| <= max(3 stderr, 1e-3)");
        }
        os << e.t << ',' << e.x.x << ',' << e.x.y << ',' << e.y.x << ',' << e.y.y << ',' << e.value << ',' << e.std_error
           << ',' << e.n_paths << ',' << to_string(e.convention) << ',' << cfg.seed << ',' << oracle << ',' << bound
           << '\n';
      }
      ctx.write("heatkernel.csv", os.str());
    });
  } catch (...) {
    default_workers() = saved_workers;
    ctx.write_manifest();
    throw;
  }
  default_workers() = saved_workers;
  ctx.write_manifest();
  return ctx.manifest();
}

struct ReportRow {
  std::string stage;
  std::string metric;  // empty for a stage-level row
  std::string status;  // PASS | FAIL | not run | failed | skipped
  double value = NAN;
  double tolerance = NAN;
  std::string description;
};

/// Reads a run directory, verifies schema versions and checksums, and returns one row per
/// metric (or one row per stage that produced none).
inline std::vector<ReportRow> report_rows(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ShapeError("report: no manifest.json in " + dir.string());
  json m;
  in >> m;
  if (m.value("schema_version", -1) != kSchemaVersion)
    throw ConfigError("schema_version", "manifest schema " + std::to_string(m.value("schema_version", -1)) +
                                            " does not match " + std::to_string(kSchemaVersion));
  for (const auto& [file, info] : m.at("outputs").items()) {
    if (info.value("schema_version", -1) != kSchemaVersion)
      throw ConfigError("schema_version", file + " was written with another schema version");
    std::ifstream f(dir / file, std::ios::binary);
    if (!f) throw ChecksumError("report: missing output " + file);
    std::ostringstream buf;
    buf << f.rdbuf();
    if (hex64(fnv1a(buf.str())) != info.at("fnv1a").get<std::string>())
      throw ChecksumError("report: checksum mismatch for " + file);
  }
  std::map<std::string, std::string> status, error;
  for (const auto& s : m.at("stages")) {
    status[s.at("name").get<std::string>()] = s.at("status").get<std::string>();
    error[s.at("name").get<std::string>()] = s.at("error").get<std::string>();
  }
  std::vector<ReportRow> rows;
  for (const auto& stage : stage_names()) {
    const auto it = status.find(stage);
    const std::string st = it == status.end() || it->second == "skipped" ? "not run" : it->second;
    bool any = false;
    for (const auto& [key, v] : m.at("metrics").items()) {
      if (key.rfind(stage + ".", 0) != 0) continue;
      any = true;
      ReportRow r;
      r.stage = stage;
      r.metric = key;
      r.status = v.at("pass").get<bool>() ? "PASS" : "FAIL";
      r.value = v.at("value").is_number() ? v.at("value").get<double>() : NAN;
      r.tolerance = v.at("tolerance").is_number() ? v.at("tolerance").get<double>() : NAN;
      r.description = v.at("description").get<std::string>();
      rows.push_back(r);
    }
    if (!any || st != "ok") {
      ReportRow r;
      r.stage = stage;
      r.status = st;
      r.description = st == "failed" ? error[stage] : (st == "ok" ? "no metrics" : "");
      rows.push_back(r);
    }
  }
  return rows;
}

inline std::string report(const std::filesystem::path& dir) {
  const auto rows = report_rows(dir);
  std::ostringstream os;
  os << std::left << std::setw(14) << "stage" << std::setw(40) << "metric" << std::setw(9) << "status"
     << std::setw(14) << "value" << std::setw(14) << "tolerance" << "description\n";
  for (const auto& r : rows) {
    os << std::setw(14) << r.stage << std::setw(40) << (r.metric.empty() ? "-" : r.metric) << std::setw(9) << r.status;
    if (std::isnan(r.value))
      os << std::setw(14) << "-" << std::setw(14) << "-";
    else
      os << std::setw(14) << std::setprecision(6) << r.value << std::setw(14) << r.tolerance;
    os << r.description << '\n';
  }
  return os.str();
}

}  // namespace quelab
