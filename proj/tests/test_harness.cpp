#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "traplab/harness.hpp"

using namespace traplab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_occurrences(const std::string& hay, const std::string& needle) {
  int n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos;
       pos = hay.find(needle, pos + 1))
    ++n;
  return n;
}

}  // namespace

TEST_SUITE_BEGIN("harness");

TEST_CASE("config parsing, defaults, and canonical hash") {
  const auto cfg = harness::Config::from_string(
      "# comment\nkind = duality-battery\nseed = 9\n  cases =  17 # trailing\n");
  CHECK(cfg.str("kind") == "duality-battery");
  CHECK(cfg.integer("cases") == 17);
  CHECK(cfg.integer_or("missing", 5) == 5);
  CHECK_THROWS_AS(cfg.str("nope"), std::invalid_argument);

  const auto a = harness::Config::from_string("x = 1\ny = 2\n");
  const auto b = harness::Config::from_string("y = 2\nx = 1\n");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != harness::Config::from_string("x = 1\ny = 3\n").hash());
  // canonical serialization round-trips
  CHECK(harness::Config::from_string(a.canonical()).hash() == a.hash());
}

TEST_CASE("experiment config validation") {
  CHECK_THROWS_WITH_AS(
      harness::ExperimentConfig::parse(harness::Config::from_string("kind = env-tail\n")),
      "config: master seed is mandatory", std::invalid_argument);
  CHECK_THROWS_AS(harness::ExperimentConfig::parse(
                      harness::Config::from_string("kind = bogus\nseed = 1\n")),
                  std::invalid_argument);
  CHECK_THROWS_AS(harness::ExperimentConfig::parse(harness::Config::from_string(
                      "kind = env-tail\nseed = 1\nbeta = 1.5\n")),
                  std::invalid_argument);
}

TEST_CASE("bump spec round trip") {
  const TestFunction f = harness::parse_bump("cos2:0.5:1.25:0.4");
  CHECK(f.kind == BumpKind::kSquaredCosine);
  CHECK(f.center[0] == 0.5);
  CHECK(f.radius == 1.25);
  CHECK(f.amplitude == 0.4);
  CHECK(harness::parse_bump(harness::bump_to_string(f, 1)).radius == 1.25);
  CHECK_THROWS_AS(harness::parse_bump("box:0:1"), std::invalid_argument);
  CHECK_THROWS_AS(harness::parse_bump("cos2:0"), std::invalid_argument);
}

TEST_CASE("runs are byte-identical for a fixed master seed") {
  const std::string dir1 = "/tmp/traplab_test_rep1";
  const std::string dir2 = "/tmp/traplab_test_rep2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  for (const std::string& dir : {dir1, dir2}) {
    auto cfg = harness::Config::from_string(
        "kind = hydro-density\nseed = 77\nd = 1\nbeta = 0.5\na = 0\nn = 4\nbox_factor = 3\n"
        "t = 0.1\nf = triangle:0:1:1\nrho0 = cos2:0:1.5:0.4\nreplicas = 24\nout = " +
        dir + "\n");
    const auto man = harness::run_experiment(harness::ExperimentConfig::parse(cfg));
    REQUIRE(man.ok);
  }
  CHECK(slurp(dir1 + "/fields.csv") == slurp(dir2 + "/fields.csv"));
  CHECK(slurp(dir1 + "/comparison.csv") == slurp(dir2 + "/comparison.csv"));
  CHECK(slurp(dir1 + "/gap.svg") == slurp(dir2 + "/gap.svg"));
}

TEST_CASE("worker count does not change the artifacts") {
  const std::string dir1 = "/tmp/traplab_test_w1";
  const std::string dir2 = "/tmp/traplab_test_w4";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  const std::string base =
      "kind = hydro-density\nseed = 13\nd = 1\nbeta = 0.5\na = 0\nn = 4\nbox_factor = 3\n"
      "t = 0.1\nf = triangle:0:1:1\nrho0 = cos2:0:1.5:0.4\nreplicas = 16\nout = ";
  setenv("TRAPLAB_WORKERS", "1", 1);
  (void)harness::run_experiment(
      harness::ExperimentConfig::parse(harness::Config::from_string(base + dir1 + "\n")));
  setenv("TRAPLAB_WORKERS", "4", 1);
  (void)harness::run_experiment(
      harness::ExperimentConfig::parse(harness::Config::from_string(base + dir2 + "\n")));
  unsetenv("TRAPLAB_WORKERS");
  CHECK(slurp(dir1 + "/fields.csv") == slurp(dir2 + "/fields.csv"));
  CHECK(slurp(dir1 + "/comparison.csv") == slurp(dir2 + "/comparison.csv"));
}

TEST_CASE("hydro run with rho0 == 0 produces zero fields") {
  const std::string dir = "/tmp/traplab_test_zero";
  fs::remove_all(dir);
  auto cfg = harness::Config::from_string(
      "kind = hydro-density\nseed = 5\nd = 1\nbeta = 0.5\na = 0\nn = 4\nbox_factor = 3\n"
      "t = 0.1\nf = triangle:0:1:1\nrho0 = cos2:0:1.5:0\nreplicas = 8\nout = " +
      dir + "\n");
  const auto man = harness::run_experiment(harness::ExperimentConfig::parse(cfg));
  REQUIRE(man.ok);
  for (const auto& level : man.summary["levels"]) {
    CHECK(level["mean_X"].get<double>() == 0.0);
    CHECK(level["reference"].get<double>() == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("manifest records hash, seeds, outputs") {
  const std::string dir = "/tmp/traplab_test_manifest";
  fs::remove_all(dir);
  auto cfg = harness::Config::from_string(
      "kind = duality-battery\nseed = 3\ncases = 4\nreplicas = 3\nout = " + dir + "\n");
  const auto e = harness::ExperimentConfig::parse(cfg);
  const auto man = harness::run_experiment(e);
  CHECK(man.ok);
  CHECK(man.config_hash == cfg.hash());
  CHECK(man.replica_seeds.size() == 3);
  CHECK(man.replica_seeds[0] == harness::replica_seed(3, "duality-battery", 0));
  nlohmann::json j;
  std::ifstream in(dir + "/manifest.json");
  in >> j;
  CHECK(j["config_hash"] == cfg.hash());
  CHECK(j["ok"] == true);
  const std::string csv = slurp(dir + "/duality.jsonl");
  CHECK(count_occurrences(csv, "\"pass\":true") == 8);
}

TEST_CASE("csv schema header line") {
  const std::string dir = "/tmp/traplab_test_csv";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    io::CsvWriter w(dir + "/x.csv", "demo", {"a", "b"});
    w.row_values({1.0, 2.0});
  }
  const std::string text = slurp(dir + "/x.csv");
  CHECK(text.rfind("# traplab-csv v1 schema=demo\na,b\n", 0) == 0);
}

TEST_CASE("convergence report") {
  const std::string d1 = "/tmp/traplab_test_conv1";
  const std::string rep = "/tmp/traplab_test_report";
  fs::remove_all(d1);
  fs::remove_all(rep);
  auto cfg = harness::Config::from_string(
      "kind = hydro-density\nseed = 21\nd = 1\nbeta = 0.5\na = 0\nn = 4,6\nbox_factor = 3\n"
      "t = 0.1,0.2\nf = triangle:0:1:1\nrho0 = cos2:0:1.5:0.4\nreplicas = 12\nout = " +
      d1 + "\n");
  const auto man = harness::run_experiment(harness::ExperimentConfig::parse(cfg));
  REQUIRE(man.ok);

  SUBCASE("single-n input is refused") {
    const std::string dsingle = "/tmp/traplab_test_conv_single";
    fs::remove_all(dsingle);
    auto cfg1 = harness::Config::from_string(
        "kind = hydro-density\nseed = 22\nd = 1\nbeta = 0.5\na = 0\nn = 4\nbox_factor = 3\n"
        "t = 0.1\nf = triangle:0:1:1\nrho0 = cos2:0:1.5:0.4\nreplicas = 8\nout = " +
        dsingle + "\n");
    (void)harness::run_experiment(harness::ExperimentConfig::parse(cfg1));
    CHECK_THROWS_AS(harness::report_convergence({dsingle}, rep), std::invalid_argument);
  }

  SUBCASE("two-level report has one series per (t, f)") {
    harness::report_convergence({d1}, rep);
    const std::string svg = slurp(rep + "/report.svg");
    CHECK(count_occurrences(svg, "<polyline") == 2);  // two observation times
    const std::string csv = slurp(rep + "/report.csv");
    CHECK(count_occurrences(csv, "\n") >= 5);  // header + 4 records
  }
}

TEST_SUITE_END();
