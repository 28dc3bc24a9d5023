#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path d = [] {
    const fs::path p = fs::temp_directory_path() / ("noisereg_test_cli_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Result {
  int status = -1;
  std::string out, err;
};

/// Runs the CLI with `args` (shell syntax) and captures both streams.
Result cli(const std::string& args) {
  const fs::path out = scratch() / "stdout.txt", err = scratch() / "stderr.txt";
  const std::string cmd = std::string(NOISEREG_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  Result r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

std::vector<std::vector<double>> read_csv(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream fields(line);
    std::string f;
    while (std::getline(fields, f, ',')) row.push_back(std::stod(f));
    rows.push_back(row);
  }
  return rows;
}

std::string dir(const std::string& name) { return (scratch() / name).string(); }

}  // namespace

TEST_CASE("verify lambda at sigma = 1", "[cli]") {
  const Result r = cli("verify --claim lambda --sigma 1 -o " + dir("lambda"));
  CHECK(r.status == 0);
  CHECK_THAT(r.out, ContainsSubstring("PASS lambda.max"));
  const auto reports = nlohmann::json::parse(read_file(scratch() / "lambda" / "verify.json"));
  REQUIRE(reports.size() == 3);
  CHECK(reports[0]["claim_id"] == "lambda.max");
  CHECK(reports[0]["observed"] == 2.0);
  CHECK(reports[0]["details"]["argmax_xi"] == 2.0);
  CHECK(fs::exists(scratch() / "lambda" / "verify.manifest.json"));
}

TEST_CASE("simulate the zero mode", "[cli]") {
  const Result r = cli("simulate --xi 0 --sigma 1 --paths 10 --v0-re 1 -o " + dir("zero"));
  REQUIRE(r.status == 0);
  const auto rows = read_csv(scratch() / "zero" / "simulate.csv");
  REQUIRE(rows.size() == 11);
  for (const auto& row : rows) {
    const double t = row[0];
    // U = 1 + t exactly on every path: m2 = Re(conj(U) V) is linear in t
    CHECK(std::abs(row[2] - (1.0 + t)) < 1e-12);
    CHECK(std::abs(row[1] - (1.0 + t) * (1.0 + t)) < 1e-12);
    CHECK(row[3] == 1.0);
    for (int i = 4; i < 7; ++i) CHECK(row[i] == 0.0);
    CHECK(std::abs(row[8] - row[2]) < 1e-12);
  }
  CHECK(std::abs(rows.back()[2] - 2.0) < 1e-12);
}

TEST_CASE("global certification fails without noise", "[cli]") {
  const Result r = cli("verify --claim global --sigma 0 --xi-max 200 --grid-points 201 -o " + dir("global0"));
  CHECK(r.status == 3);
  CHECK_THAT(r.out, ContainsSubstring("FAIL global"));
  const auto reports = nlohmann::json::parse(read_file(scratch() / "global0" / "verify.json"));
  CHECK(reports[0]["pass"] == false);
  CHECK(reports[0]["details"]["growth_ratio_at_xi_max"].get<double>() >= std::exp(2.0 * std::sqrt(200.0)) / 2.0);
}

TEST_CASE("configuration precedence and errors", "[cli]") {
  std::ofstream(scratch() / "sigma2.cfg") << "sigma = 2\nxi = 0.5\n";
  SECTION("flags override the file") {
    const Result r = cli("eigen --config " + dir("sigma2.cfg") + " --sigma 3 --grid-points 11 -o " + dir("prec"));
    REQUIRE(r.status == 0);
    const auto m = nlohmann::json::parse(read_file(scratch() / "prec" / "eigen.manifest.json"));
    CHECK(m["params"]["sigma"] == 3.0);
    CHECK(m["grids"]["frequency"]["xi"] == 0.5);
    CHECK(m["command"] == "eigen");
    // the resolved manifest is echoed before execution
    CHECK(nlohmann::json::parse(r.out.substr(0, r.out.rfind("}\n") + 1)) == m);
  }
  SECTION("malformed line reports its location") {
    std::ofstream(scratch() / "bad.cfg") << "sigma = 1\nhorizon: 2\n";
    const Result r = cli("eigen --config " + dir("bad.cfg") + " -o " + dir("bad"));
    CHECK(r.status == 2);
    CHECK_THAT(r.err, ContainsSubstring("ConfigParse"));
    CHECK_THAT(r.err, ContainsSubstring("bad.cfg:2:"));
  }
  SECTION("unknown key lists valid keys") {
    std::ofstream(scratch() / "unknown.cfg") << "noise = 1\n";
    const Result r = cli("eigen --config " + dir("unknown.cfg") + " -o " + dir("unknown"));
    CHECK(r.status == 2);
    CHECK_THAT(r.err, ContainsSubstring("UnknownKey"));
    CHECK_THAT(r.err, ContainsSubstring("sigma, horizon"));
  }
  SECTION("unknown flags and bad values") {
    CHECK(cli("verify --bogus 1").status == 2);
    CHECK(cli("simulate --sigma 0 -o " + dir("sigma0")).status == 2);
    CHECK(cli("simulate --paths ten -o " + dir("ten")).status == 2);
    CHECK(cli("").status == 2);
  }
  SECTION("a manifest replays only its own command") {
    REQUIRE(cli("eigen --grid-points 5 -o " + dir("own")).status == 0);
    const Result r = cli("simulate --config " + dir("own") + "/eigen.manifest.json -o " + dir("own2"));
    CHECK(r.status == 2);
    CHECK_THAT(r.err, ContainsSubstring("manifest for 'eigen'"));
  }
}

TEST_CASE("numerical blowup", "[cli]") {
  const Result r =
      cli("simulate --xi 2 --u0-re 9e299 --paths 20 --scheme euler_maruyama_ito -o " + dir("blowup"));
  CHECK(r.status == 4);
  CHECK_THAT(r.err, ContainsSubstring("NumericalBlowup"));
  CHECK_THAT(r.err, ContainsSubstring("path 0, step"));
  // the sidecar is written, the data file is not
  CHECK(fs::exists(scratch() / "blowup" / "simulate.manifest.json"));
  CHECK_FALSE(fs::exists(scratch() / "blowup" / "simulate.csv"));
}

TEST_CASE("manifest replay is bitwise across worker counts", "[cli][replay]") {
  REQUIRE(cli("simulate --xi 2 --paths 1000 --times 0.5,1 -j 1 -o " + dir("rep1")).status == 0);
  REQUIRE(cli("demo --sigma 0 --gevrey-s 3 -j 1 -o " + dir("rep1")).status == 0);
  for (const char* workers : {"3", "8"}) {
    const std::string out = dir(std::string("rep") + workers);
    for (const char* cmd : {"simulate", "demo"}) {
      const Result r =
          cli(std::string(cmd) + " --config " + dir("rep1") + "/" + cmd + ".manifest.json -j " + workers + " -o " + out);
      REQUIRE(r.status == 0);
      const std::string file = std::string(cmd) + ".csv";
      CHECK(read_file(scratch() / "rep1" / file) == read_file(fs::path(out) / file));
    }
  }
  for (const auto& e : fs::recursive_directory_iterator(scratch()))
    CHECK(e.path().extension() != ".tmp");
}

TEST_CASE("all subcommands write their outputs", "[cli]") {
  CHECK(cli("eigen --grid-points 21 -o " + dir("all")).status == 0);
  CHECK(cli("moments --n-points 256 --xi-max 50 --times 0,0.5,1 -o " + dir("all")).status == 0);
  CHECK(cli("demo -o " + dir("all")).status == 0);
  CHECK(cli("verify --claim continuity --n-points 512 -o " + dir("all")).status == 0);
  for (const char* f : {"eigen.csv", "moments.csv", "demo.csv", "verify.json", "eigen.manifest.json",
                        "moments.manifest.json", "demo.manifest.json", "verify.manifest.json"})
    CHECK(fs::exists(scratch() / "all" / f));
  const auto rows = read_csv(scratch() / "all" / "moments.csv");
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) CHECK(row[2] <= row[4]);
  CHECK(read_file(scratch() / "all" / "eigen.csv").starts_with(
      "xi,gamma,re_delta,im_delta,re_lambda_plus,im_lambda_plus,re_lambda_minus,im_lambda_minus\r\n"));
  fs::remove_all(scratch());
}
