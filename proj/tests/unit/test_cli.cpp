#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = crossed::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_file(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / ("crossed_cli_" + name);
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("toy file fit") {
  const auto path = temp_file("toy.csv", "row_id,col_id,y\nr1,c1,1\nr1,c2,3\nr2,c1,5\n");
  const Run r = run({"fit", "--input", path.string()});
  CHECK(r.code == 2);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["profile"]["N"] == 3);
  CHECK(j["profile"]["R"] == 2);
  CHECK(j["profile"]["C"] == 2);
  CHECK(j["steps"]["vc_step2"]["raw_a"].get<double>() == doctest::Approx(0.0));
  CHECK(j["steps"]["vc_step2"]["raw_b"].get<double>() == doctest::Approx(-6.0));
  CHECK(j["steps"]["vc_step2"]["raw_e"].get<double>() == doctest::Approx(8.0));
}

TEST_CASE("simulate, fit and verify") {
  const fs::path csv = fs::temp_directory_path() / "crossed_cli_sim.csv";
  const fs::path json = fs::temp_directory_path() / "crossed_cli_fit.json";
  Run r = run({"simulate", "--rows", "40", "--cols", "30", "--fill-prob", "0.3", "--p", "2", "--vc", "0,0,0",
               "--beta", "1,-2,3", "--seed", "5", "--output", csv.string()});
  REQUIRE(r.code == 0);
  r = run({"fit", "--input", csv.string(), "--output", json.string(), "--diagnostics", "--shards", "3",
           "--deterministic"});
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(std::ifstream(json));
  CHECK(j["beta"][0].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(j["beta"][1].get<double>() == doctest::Approx(-2.0).epsilon(1e-10));
  CHECK(j["beta"][2].get<double>() == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(j["diagnostics"].is_object());

  r = run({"simulate", "--rows", "40", "--cols", "30", "--p", "2", "--seed", "6", "--output", csv.string()});
  REQUIRE(r.code == 0);
  r = run({"verify", "--input", csv.string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  r = run({"fit", "--input", csv.string(), "--mode", "both-compare"});
  CHECK(nlohmann::json::parse(r.out).contains("comparison"));
}

TEST_CASE("verify down-samples large inputs") {
  const fs::path csv = fs::temp_directory_path() / "crossed_cli_big.csv";
  REQUIRE(run({"simulate", "--rows", "150", "--cols", "150", "--fill-count", "6000", "--p", "1", "--output",
               csv.string()})
              .code == 0);
  const Run r = run({"verify", "--input", csv.string()});
  CHECK(r.code == 0);
  CHECK(r.err.find("down-sampled") != std::string::npos);
}

TEST_CASE("errors") {
  Run r = run({"fit", "--input", "/no/such/dir/data.csv"});
  CHECK(r.code == 1);
  CHECK(r.err.find("/no/such/dir/data.csv") != std::string::npos);

  const auto bad = temp_file("bad.csv", "row_id,col_id,y,x1\nr1,c1,1,2\nr1,c2,oops,2\n");
  r = run({"verify", "--input", bad.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("line 3") != std::string::npos);

  CHECK(run({"fit", "--input", bad.string(), "--mode", "sideways"}).code == 1);
  CHECK(run({}).code == 1);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("study and bench") {
  Run r = run({"study", "--grid", "400,1600", "--reps", "3", "--p", "1"});
  CHECK(r.code == 0);
  CHECK(r.out.find("slope beta1") != std::string::npos);
  r = run({"bench", "--sizes", "1000", "--p", "1", "--repeats", "1"});
  CHECK(r.code == 0);
  CHECK(r.out.find("slope") == std::string::npos);
}

TEST_CASE("thread override") {
  setenv("CROSSED_LMM_THREADS", "3", 1);
  CHECK(crossed::cli::default_shards() == 3);
  unsetenv("CROSSED_LMM_THREADS");
  CHECK(crossed::cli::default_shards() >= 1);
}
