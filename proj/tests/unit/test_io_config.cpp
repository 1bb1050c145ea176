#include <cstdio>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "eigenscope/experiments.hpp"
#include "eigenscope/io.hpp"
#include "helpers.hpp"

using namespace eigenscope;
using namespace testutil;
namespace fs = std::filesystem;

#ifndef EIGENSCOPE_FIXTURES
#define EIGENSCOPE_FIXTURES "tests/fixtures"
#endif

namespace {

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("eigenscope-unit-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("EGSC round trip for matrices and vectors") {
  const auto dir = temp_dir("egsc");
  CounterRng rng(21);
  const Matrix m = random_matrix(7, 7, rng);
  write_egsc((dir / "m.egsc").string(), m);
  CHECK(fs::file_size(dir / "m.egsc") == 12 + 16 * 49);
  const Matrix back = read_egsc((dir / "m.egsc").string());
  CHECK(back.rows() == 7);
  CHECK(back.cols() == 7);
  CHECK((back - m).norm() == 0.0);

  const Vector v = random_vector(5, rng);
  write_egsc((dir / "v.egsc").string(), v);
  const Matrix vb = read_egsc((dir / "v.egsc").string());
  CHECK(vb.cols() == 1);
  CHECK((vb.col(0) - v).norm() == 0.0);

  CHECK_THROWS_AS(write_egsc((dir / "r.egsc").string(), Matrix(Matrix::Zero(2, 3))), Error);
}

TEST_CASE("EGSC rejects bad files") {
  const auto dir = temp_dir("egsc-bad");
  {
    std::ofstream f(dir / "magic.egsc", std::ios::binary);
    f << "NOPE" << std::string(8, '\0');
  }
  CHECK_THROWS_AS(read_egsc((dir / "magic.egsc").string()), Error);
  write_egsc((dir / "short.egsc").string(), Matrix(Matrix::Identity(4, 4)));
  fs::resize_file(dir / "short.egsc", 12 + 16 * 10);
  try {
    read_egsc((dir / "short.egsc").string());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
  CHECK_THROWS_AS(read_egsc((dir / "missing.egsc").string()), Error);
}

TEST_CASE("format_double round trips") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) {
    CHECK(std::stod(format_double(x)) == x);
  }
}

TEST_CASE("config files and overrides") {
  const auto dir = temp_dir("config");
  {
    std::ofstream f(dir / "c.cfg");
    f << "# sweep\nexperiment = pressure-certificate\nN=64  # small\n\nK=3\ntheta=auto\n";
  }
  auto c = ExperimentConfig::parse_file((dir / "c.cfg").string());
  CHECK(c.experiment == "pressure-certificate");
  CHECK(c.N == 64);
  CHECK(!c.theta.has_value());
  c.set("theta", "0.25");
  CHECK(*c.theta == 0.25);
  c.resolve();
  CHECK(c.n == 4);
  CHECK(c.eta == 0.02);
  CHECK(c.to_json()["N"] == 64);

  CHECK_THROWS_AS(c.set("nope", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("N", "12x"), ConfigError);
  CHECK_THROWS_AS(c.set("K", ""), ConfigError);
  {
    std::ofstream f(dir / "bad.cfg");
    f << "experiment mu-dft\n";
  }
  CHECK_THROWS_AS(ExperimentConfig::parse_file((dir / "bad.cfg").string()), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse_file((dir / "none.cfg").string()), ConfigError);

  ExperimentConfig u;
  u.experiment = "unknown";
  CHECK_THROWS_AS(u.resolve(), ConfigError);
  ExperimentConfig empty;
  CHECK_THROWS_AS(empty.resolve(), ConfigError);
}

TEST_CASE("experiment defaults") {
  ExperimentConfig c;
  c.experiment = "egorov-scan";
  c.resolve();
  CHECK(c.N == 512);
  CHECK(c.T == 2 * c.n);
  ExperimentConfig s;
  s.experiment = "classical-entropy";
  s.resolve();
  CHECK(s.K == 8);
  CHECK(s.n_o == 8);
  CHECK(s.measure == "lebesgue");
}

TEST_CASE("golden reports") {
  std::ifstream f(std::string(EIGENSCOPE_FIXTURES) + "/pilot.json");
  REQUIRE(f);
  const auto pilot = nlohmann::json::parse(f);
  const auto dir = temp_dir("golden");
  for (const auto& [name, entry] : pilot.items()) {
    CAPTURE(name);
    ExperimentConfig c;
    c.experiment = name;
    for (const auto& [k, v] : entry["config"].items()) c.set(k, v.dump());
    c.out_dir = dir.string();
    const auto r = run_experiment(c);
    REQUIRE(r.exit_code == 0);
    const double rel = entry["rel_tol"], abs = entry["abs_tol"];
    for (const auto& [k, v] : entry["results"].items()) {
      CAPTURE(k);
      const double got = r.report["results"][k].get<double>();
      const double want = v.get<double>();
      CHECK(std::abs(got - want) <= abs + rel * std::abs(want));
    }
  }
}

TEST_CASE("failed runs leave nothing behind") {
  const auto dir = temp_dir("failed");
  ExperimentConfig c;
  c.experiment = "egorov-scan";
  c.N = 64;  // the early commutator is large at small N
  c.out_dir = dir.string();
  const auto r = run_experiment(c);
  CHECK(r.exit_code == 2);
  CHECK(r.message.rfind("invariant failed:", 0) == 0);
  CHECK(fs::is_empty(dir));

  c.experiment = "mu-dft";
  c.N = 8;
  c.out_dir = dir.string();
  const auto ok = run_experiment(c);
  CHECK(ok.exit_code == 0);
  CHECK(fs::exists(dir / "mu-dft.report.json"));
  CHECK(r.report["status"] == "failed");
  CHECK(ok.report["manifest"]["version"] == kVersion);
}

TEST_CASE("plot data") {
  const auto dir = temp_dir("plot");
  ExperimentConfig c;
  c.experiment = "egorov-scan";
  c.out_dir = dir.string();
  REQUIRE(run_experiment(c).exit_code == 0);
  const auto files = emit_plot_data({(dir / "egorov-scan.report.json").string()});
  REQUIRE(files.size() == 1);
  std::ifstream f(files[0]);
  std::string header;
  std::getline(f, header);
  CHECK(header == "t,norm");
  CHECK_THROWS_AS(emit_plot_data({}), ConfigError);
  CHECK_THROWS_AS(emit_plot_data({(dir / "missing.json").string()}), ConfigError);
}
