#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "linrestrict/cli.hpp"
#include "linrestrict/io.hpp"
#include "test_nets.hpp"

using namespace linrestrict;
using namespace lrtest;

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / "linrestrict_cli_test";
    fs::create_directories(dir);
    save_network(loan_network(), dir / "loan.json");
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("exactline writes the loan partitioning") {
  Workspace ws;
  const auto r = invoke({"exactline", "--network", ws.path("loan.json"), "--from", "20,30", "--to",
                         "30,50", "--canonical", "--out", ws.path("parts.csv")});
  CHECK(r.code == 0);
  CHECK(r.err.empty());
  const std::string csv = read_text_file(ws.path("parts.csv"));
  CHECK(count_lines(csv) == 5);
  CHECK(csv.rfind("alpha,pre_0,pre_1,post_0,post_1\n", 0) == 0);

  const auto json = invoke({"exactline", "--network", ws.path("loan.json"), "--from", "20,30",
                            "--to", "30,50", "--format", "structured"});
  CHECK(json.code == 0);
  CHECK(parse_partitions(json.out).endpoints.size() == 4);
}

TEST_CASE("exit codes and diagnostics") {
  Workspace ws;
  auto r = invoke({"exactline", "--network", ws.path("loan.json"), "--from", "20,30", "--to",
                   "20,30"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error[query-error]: ", 0) == 0);
  CHECK(count_lines(r.err) == 1);

  r = invoke({"exactline", "--network", ws.path("loan.json"), "--from", "20,30"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error[usage-error]: ", 0) == 0);

  r = invoke({"exactline", "--from", "1,2", "--to", "3,4"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error[usage-error]: ", 0) == 0);

  r = invoke({"exactline", "--network", ws.path("loan.json"), "--from", "2,x", "--to", "3,4"});
  CHECK(r.code == 1);

  r = invoke({});
  CHECK(r.code == 1);

  r = invoke({"exactline", "--network", ws.path("missing.json"), "--from", "1,2", "--to", "3,4"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error[io-error]: ", 0) == 0);

  r = invoke({"exactline", "--network", ws.path("loan.json"), "--from", "1,2,3", "--to", "3,4"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error[shape-error]: ", 0) == 0);

  write_text_file(ws.path("bad.json"), "{\"schema_version\": 1,");
  r = invoke({"exactline", "--network", ws.path("bad.json"), "--from", "1,2", "--to", "3,4"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error[parse-error]: ", 0) == 0);

  r = invoke({"density", "--network", ws.path("loan.json"), "--from", "20,30", "--to", "30,50",
              "--output-index", "0"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error[undefined-error]: ", 0) == 0);

  r = invoke({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("exactline") != std::string::npos);

  CHECK(cli::exit_code_for(ErrorCode::usage) == 1);
  CHECK(cli::exit_code_for(ErrorCode::query) == 1);
  CHECK(cli::exit_code_for(ErrorCode::schema) == 2);
  CHECK(cli::diagnostic(ErrorCode::io, "a\nb") == "error[io-error]: a b");
}

TEST_CASE("ig reports") {
  Workspace ws;
  const auto r = invoke({"ig", "--network", ws.path("loan.json"), "--baseline", "20,30",
                         "--input", "30,50", "--output-index", "1", "--method", "exact",
                         "--format", "structured"});
  REQUIRE(r.code == 0);
  const auto pos = r.out.find("\"absolute\": ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(r.out.substr(pos + 12)) <= 1e-9);

  auto riemann = invoke({"ig", "--network", ws.path("loan.json"), "--baseline", "20,30",
                         "--input", "30,50", "--output-index", "1", "--method", "left"});
  CHECK(riemann.code == 1);
  riemann = invoke({"ig", "--network", ws.path("loan.json"), "--baseline", "20,30", "--input",
                    "30,50", "--output-index", "1", "--method", "trapezoid", "--samples", "16"});
  CHECK(riemann.code == 0);
  CHECK(riemann.out.find("samples,16") != std::string::npos);

  const auto samples = invoke({"ig-samples", "--network", ws.path("loan.json"), "--baseline",
                               "20,30", "--input", "30,50", "--output-index", "1", "--method",
                               "trapezoid", "--tolerance", "0.05"});
  CHECK(samples.code == 0);
  CHECK(samples.out.find("method,trapezoid") != std::string::npos);
}

TEST_CASE("points from files") {
  Workspace ws;
  write_text_file(ws.path("q.txt"), "20\n30\n");
  write_text_file(ws.path("r.txt"), "30, 50");
  const auto r = invoke({"density", "--network", ws.path("loan.json"), "--from-file",
                         ws.path("q.txt"), "--to-file", ws.path("r.txt"), "--output-index", "1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("partition_count,3") != std::string::npos);
  CHECK(r.out.find("gradient_deviation,0.3333333333333333") != std::string::npos);
}

TEST_CASE("sweep keeps input order under parallelism") {
  Workspace ws;
  std::string lines = "# start ; end\n";
  for (int k = 0; k < 12; ++k)
    lines += std::to_string(20 + k) + "," + std::to_string(30 + k) + " ; " +
             std::to_string(30 - k) + "," + std::to_string(50 - k) + "\n";
  write_text_file(ws.path("lines.txt"), lines);
  const std::vector<std::string> args{"sweep", "--network", ws.path("loan.json"), "--lines",
                                      ws.path("lines.txt")};
  unsetenv("LINRESTRICT_THREADS");
  const auto serial = invoke(args);
  REQUIRE(serial.code == 0);
  CHECK(serial.out.rfind("line,alpha_lo,alpha_hi,class\n0,0,0.55555555555555558,1\n", 0) == 0);
  setenv("LINRESTRICT_THREADS", "4", 1);
  const auto parallel = invoke(args);
  CHECK(parallel.code == 0);
  CHECK(parallel.out == serial.out);
  setenv("LINRESTRICT_THREADS", "zero", 1);
  CHECK(invoke(args).code == 1);
  unsetenv("LINRESTRICT_THREADS");

  write_text_file(ws.path("broken.txt"), "1,2 3,4\n");
  const auto broken = invoke({"sweep", "--network", ws.path("loan.json"), "--lines",
                              ws.path("broken.txt")});
  CHECK(broken.code == 2);
  CHECK(broken.err.find("broken.txt:1") != std::string::npos);
}

TEST_CASE("fgsm mode") {
  Workspace ws;
  const std::vector<std::string> base{"fgsm", "--network", ws.path("loan.json"), "--point",
                                      "20,30", "--epsilon", "0.1", "--label", "1"};
  const auto plain = invoke(base);
  REQUIRE(plain.code == 0);
  CHECK(plain.out.find("point[0],19.899999999999999") != std::string::npos);

  auto compare = base;
  compare.push_back("--compare-random");
  const auto missing_seed = invoke(compare);
  CHECK(missing_seed.code == 1);
  CHECK(missing_seed.err.find("--seed") != std::string::npos);

  compare.insert(compare.end(), {"--seed", "42", "--out", ws.path("a.json")});
  REQUIRE(invoke(compare).code == 0);
  compare.back() = ws.path("b.json");
  REQUIRE(invoke(compare).code == 0);
  CHECK(read_text_file(ws.path("a.json")) == read_text_file(ws.path("b.json")));
  CHECK(read_text_file(ws.path("a.json")).find("\"density_ratio\"") != std::string::npos);
}

TEST_CASE("value parsing") {
  CHECK(cli::parse_values("1, -2.5\n3e2", ErrorCode::usage, "x") == std::vector<double>{1, -2.5, 300});
  CHECK(cli::parse_values("+4", ErrorCode::usage, "x") == std::vector<double>{4});
  CHECK_THROWS_AS(cli::parse_values("", ErrorCode::usage, "x"), Error);
  CHECK_THROWS_AS(cli::parse_values("nan", ErrorCode::usage, "x"), Error);
}
