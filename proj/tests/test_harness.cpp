#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "quelab/harness.hpp"

using namespace quelab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("quelab-test-" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ExperimentConfig minimal() {
  ExperimentConfig c;
  c.spectrum.lambda_max = 50;
  c.partition.epsilon = 0.2;
  c.partition.gamma = 0;
  c.seed = 42;
  return c;
}

std::string field_of(const json& j) {
  try {
    (void)ExperimentConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return {};
}

}  // namespace

TEST(Config, DefaultsValidateAndRoundTrip) {
  const ExperimentConfig c = minimal();
  EXPECT_NO_THROW(c.validate());
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  ExperimentConfig d = c;
  d.seed = 43;
  EXPECT_NE(d.hash(), c.hash());
}

TEST(Config, ValidationNamesTheField) {
  EXPECT_EQ(field_of({{"partition", {{"epsilon", 1.5}}}}), "partition.epsilon");
  EXPECT_EQ(field_of({{"partition", {{"gamma", -0.1}}}}), "partition.gamma");
  EXPECT_EQ(field_of({{"spectrum", {{"lambda_max", -1.0}}}}), "spectrum.lambda_max");
  EXPECT_EQ(field_of({{"spectrum", {{"colour", "red"}}}}), "spectrum.colour");
  EXPECT_EQ(field_of({{"verbose", true}}), "verbose");
  EXPECT_EQ(field_of({{"observables", {"cos_x1", "sin_q"}}}), "observables");
  EXPECT_EQ(field_of({{"domain", "hexagon 3"}}), "domain");
  EXPECT_EQ(field_of({{"heatkernel", {{"enabled", true}, {"x", {2.0, 0.5}}}}}), "heatkernel.x");
  EXPECT_EQ(field_of({{"heatkernel", {{"x", "centre"}}}}), "heatkernel.x");
  EXPECT_EQ(field_of({{"concentration", {{"replicas", 10}}}}), "concentration.replicas");
  EXPECT_EQ(field_of({{"partition", {{"epsilon", "small"}}}}), "partition.epsilon");
  EXPECT_EQ(field_of(json::array()), "<root>");
  EXPECT_EQ(field_of({{"partition", {{"epsilon", 0.5}}}}), "");
}

TEST(Config, ObservableNames) {
  for (const char* n : {"const", "bump", "xi1sq", "cos_x2", "cos_y1", "step7", "cos_x1*xi1sq"})
    EXPECT_NO_THROW(parse_observable(n)) << n;
  EXPECT_THROW(parse_observable("cos_x"), ConfigError);
  EXPECT_THROW(parse_observable(""), ConfigError);
}

TEST(Config, OutputOverride) {
  const ExperimentConfig c = minimal();
  ::unsetenv("QUELAB_OUT");
  EXPECT_EQ(resolve_output(c), fs::path("quelab-out"));
  ::setenv("QUELAB_OUT", "/tmp/elsewhere", 1);
  EXPECT_EQ(resolve_output(c), fs::path("/tmp/elsewhere"));
  EXPECT_EQ(resolve_output(c, "flagged"), fs::path("flagged"));
  ::unsetenv("QUELAB_OUT");
}

TEST(Run, MinimalConfigIsFastAndComplete) {
  const fs::path dir = scratch("minimal");
  const auto t0 = std::chrono::steady_clock::now();
  const RunManifest m = run(minimal(), dir);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 10.0);
  EXPECT_TRUE(m.failed_stage.empty()) << m.failed_stage;
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_FALSE(m.checksums.empty());
  for (const auto& [file, hash] : m.checksums) EXPECT_EQ(hex64(fnv1a(slurp(dir / file))), hash) << file;
  const std::string text = report(dir);
  EXPECT_NE(text.find("spectrum"), std::string::npos);
  EXPECT_NE(text.find("PASS"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Run, SameSeedGivesIdenticalBytes) {
  ExperimentConfig c = minimal();
  c.concentration.enabled = true;
  c.concentration.replicas = 200;
  c.heatkernel.enabled = true;
  c.heatkernel.n_paths = 200;
  c.heatkernel.dt = 1e-3;
  const fs::path a = scratch("det-a"), b = scratch("det-b");
  const RunManifest ma = run(c, a);
  c.workers = 3;
  const RunManifest mb = run(c, b);
  ASSERT_EQ(ma.checksums.size(), mb.checksums.size());
  for (const auto& [file, hash] : ma.checksums) {
    EXPECT_EQ(slurp(a / file), slurp(b / file)) << file;
    EXPECT_EQ(mb.checksums.at(file), hash) << file;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, WeylOnlyMarksOthersNotRun) {
  ExperimentConfig c = minimal();
  c.perturb.enabled = false;
  c.que.enabled = false;
  const fs::path dir = scratch("weyl");
  run(c, dir);
  bool concentration_row = false;
  for (const auto& r : report_rows(dir)) {
    if (r.stage == "concentration" || r.stage == "heatkernel" || r.stage == "que" || r.stage == "perturb") {
      EXPECT_EQ(r.status, "not run") << r.stage;
      concentration_row |= r.stage == "concentration";
    }
  }
  EXPECT_TRUE(concentration_row);
  EXPECT_NE(report(dir).find("not run"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Run, FailureStillWritesManifest) {
  ExperimentConfig c = minimal();
  c.spectrum.file = "/nonexistent/spectrum.txt";
  const fs::path dir = scratch("fail");
  const RunManifest m = run(c, dir);
  EXPECT_EQ(m.failed_stage, "spectrum");
  ASSERT_TRUE(fs::exists(dir / "manifest.json"));
  const json j = json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(j.at("failed_stage"), "spectrum");
  bool partition_failed = false;
  for (const auto& r : report_rows(dir)) partition_failed |= r.stage == "partition" && r.status == "failed";
  EXPECT_TRUE(partition_failed);
  fs::remove_all(dir);
}

TEST(Run, InvalidConfigThrowsBeforeWriting) {
  ExperimentConfig c = minimal();
  c.partition.epsilon = 1.5;
  const fs::path dir = scratch("invalid");
  try {
    run(c, dir);
    FAIL() << "expected a config error";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "partition.epsilon");
  }
  EXPECT_FALSE(fs::exists(dir / "manifest.json"));
}

TEST(Report, CorruptedCsvIsDetected) {
  const fs::path dir = scratch("corrupt");
  const RunManifest m = run(minimal(), dir);
  ASSERT_FALSE(m.checksums.empty());
  const fs::path victim = dir / m.checksums.begin()->first;
  std::string bytes = slurp(victim);
  bytes[bytes.size() / 2] = bytes[bytes.size() / 2] == '1' ? '2' : '1';
  std::ofstream(victim, std::ios::binary) << bytes;
  EXPECT_THROW(report(dir), ChecksumError);
  fs::remove(victim);
  EXPECT_THROW(report(dir), ChecksumError);
  fs::remove_all(dir);
}

TEST(Report, SchemaMismatchIsRefused) {
  const fs::path dir = scratch("schema");
  run(minimal(), dir);
  json j = json::parse(slurp(dir / "manifest.json"));
  j["schema_version"] = kSchemaVersion + 1;
  std::ofstream(dir / "manifest.json") << j.dump(2);
  EXPECT_THROW(report(dir), ConfigError);
  j["schema_version"] = kSchemaVersion;
  j["outputs"].begin().value()["schema_version"] = kSchemaVersion + 1;
  std::ofstream(dir / "manifest.json") << j.dump(2);
  EXPECT_THROW(report(dir), ConfigError);
  fs::remove_all(dir);
  EXPECT_THROW(report(dir), ShapeError);
}

TEST(Checksum, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}
