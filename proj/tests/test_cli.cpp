#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "votereg/dataprep.hpp"
#include "votereg/simbench.hpp"

using namespace votereg;
namespace fs = std::filesystem;

namespace {

std::string binary_path() {
  const char* env = std::getenv("VOTEREG_BIN");
  REQUIRE_MESSAGE(env != nullptr, "VOTEREG_BIN must point at the CLI binary");
  return env;
}

struct RunOutcome {
  int exit_code = -1;
  std::string stdout_text;
};

RunOutcome run_cli(const std::string& args, const fs::path& workdir) {
  const fs::path stdout_file = workdir / "stdout.txt";
  const fs::path stderr_file = workdir / "stderr.txt";
  const std::string command = binary_path() + " " + args + " > " + stdout_file.string() +
                              " 2> " + stderr_file.string();
  const int raw = std::system(command.c_str());
  RunOutcome outcome;
  outcome.exit_code = WEXITSTATUS(raw);
  std::ifstream in(stdout_file);
  std::stringstream buffer;
  buffer << in.rdbuf();
  outcome.stdout_text = buffer.str();
  return outcome;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("fit on a noiseless synthetic file prints the planted set") {
  const fs::path dir = fresh_dir("votereg_cli_fit");
  // y depends on predictor columns 1, 2, 5 (1-based)
  Dataset data;
  data.x = gen_design(60, 8, 0.3, 1001);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(8);
  theta[0] = 3.0;
  theta[1] = 1.5;
  theta[4] = 2.0;
  data.y = data.x * theta;
  // header-less layout: response first, then the 8 predictors
  {
    std::ofstream out(dir / "data.csv");
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      out << data.y[i];
      for (Eigen::Index j = 0; j < data.p(); ++j) out << ',' << data.x(i, j);
      out << '\n';
    }
  }
  const RunOutcome outcome = run_cli(
      "fit --data " + (dir / "data.csv").string() +
          " --no-header --response 1 --losses 'qgrid(5,even)' --grid 15 --folds 3 "
          "--workers 2 --out " +
      dir.string(),
      dir);
  CHECK(outcome.exit_code == 0);
  CHECK(outcome.stdout_text.find("selected: 1,2,5") != std::string::npos);
  CHECK(fs::exists(dir / "results.json"));
  CHECK(fs::exists(dir / "report.txt"));
}

TEST_CASE("single squared estimation loss reports weight [1]") {
  const fs::path dir = fresh_dir("votereg_cli_fit2");
  Dataset data;
  data.x = gen_design(50, 4, 0.0, 2002);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(4);
  theta[0] = 2.0;
  data.y = data.x * theta + gen_errors(ErrorDist::Normal3, 50, 2003) * 0.1;
  {
    std::ofstream out(dir / "data.csv");
    out << "y,x1,x2,x3,x4\n";
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      out << data.y[i];
      for (Eigen::Index j = 0; j < data.p(); ++j) out << ',' << data.x(i, j);
      out << '\n';
    }
  }
  const RunOutcome outcome = run_cli(
      "fit --data " + (dir / "data.csv").string() +
          " --response y --losses 'qgrid(3,even);sq' --grid 12 --folds 3 --out " +
          dir.string(),
      dir);
  CHECK(outcome.exit_code == 0);
  const std::string results = read_file(dir / "results.json");
  CHECK(results.find("\"weights\": [\n    1.0\n  ]") != std::string::npos);
}

TEST_CASE("exit codes: config errors are 2, run failures are 1") {
  const fs::path dir = fresh_dir("votereg_cli_exit");
  SUBCASE("unknown loss grammar") {
    const RunOutcome outcome =
        run_cli("fit --data nowhere.csv --losses 'bogus(3)'", dir);
    CHECK(outcome.exit_code == 2);
  }
  SUBCASE("missing data file") {
    const RunOutcome outcome = run_cli("fit --data " + (dir / "nope.csv").string(), dir);
    CHECK(outcome.exit_code == 1);
  }
  SUBCASE("unparseable data file") {
    std::ofstream(dir / "bad.csv") << "y,x\n1,2\n3,oops\n";
    const RunOutcome outcome =
        run_cli("fit --data " + (dir / "bad.csv").string() + " --response y", dir);
    CHECK(outcome.exit_code == 1);
  }
  SUBCASE("unknown distribution") {
    const RunOutcome outcome = run_cli("simulate --distributions marsian", dir);
    CHECK(outcome.exit_code == 2);
  }
  SUBCASE("unknown flag") {
    const RunOutcome outcome = run_cli("simulate --frobnicate", dir);
    CHECK(outcome.exit_code == 2);
  }
}

TEST_CASE("simulate outputs are byte-identical across worker counts") {
  const fs::path dir1 = fresh_dir("votereg_cli_w1");
  const fs::path dir8 = fresh_dir("votereg_cli_w8");
  const std::string base =
      "simulate --n 60 --p 6 --replicates 3 --validation-n 150 --grid 10 "
      "--distributions n03 --methods wqr-vote,lsr --seed 42";
  const RunOutcome a = run_cli(base + " --workers 1 --out " + dir1.string(), dir1);
  const RunOutcome b = run_cli(base + " --workers 8 --out " + dir8.string(), dir8);
  CHECK(a.exit_code == 0);
  CHECK(b.exit_code == 0);
  CHECK(read_file(dir1 / "report.csv") == read_file(dir8 / "report.csv"));
  CHECK(read_file(dir1 / "report.txt") == read_file(dir8 / "report.txt"));
  CHECK(!read_file(dir1 / "report.csv").empty());
}

TEST_CASE("simulate twice with one seed gives identical bytes") {
  const fs::path dir1 = fresh_dir("votereg_cli_r1");
  const fs::path dir2 = fresh_dir("votereg_cli_r2");
  const std::string base =
      "simulate --n 50 --p 5 --replicates 1 --validation-n 120 --grid 8 "
      "--distributions de --methods lsr --seed 7 --workers 2";
  run_cli(base + " --out " + dir1.string(), dir1);
  run_cli(base + " --out " + dir2.string(), dir2);
  CHECK(read_file(dir1 / "report.csv") == read_file(dir2 / "report.csv"));
}

TEST_CASE("screen then reload round-trips through the CLI") {
  const fs::path dir = fresh_dir("votereg_cli_screen");
  {
    std::ofstream out(dir / "expr.csv");
    out << "probe,s1,s2,s3,s4,s5,s6\n";
    out << "target,1.0,2.0,3.0,4.0,5.0,6.0\n";
    out << "follows,2.1,4.2,5.9,8.1,9.8,12.2\n";
    out << "flat,5.0,5.0,5.0,5.0,5.0,5.1\n";
    out << "noise,9.0,1.0,8.0,2.0,7.0,3.0\n";
  }
  const RunOutcome outcome = run_cli(
      "screen --data " + (dir / "expr.csv").string() +
          " --response-probe target --top 2 --min-range 0.5 --max-quantile 0.25 --out " +
          dir.string(),
      dir);
  CHECK(outcome.exit_code == 0);
  CHECK(fs::exists(dir / "screened.csv"));
  const Dataset screened =
      load_csv((dir / "screened.csv").string(), true, ColumnRef{std::string("target")});
  CHECK(screened.n() == 6);
  CHECK(screened.column_names.front() == "follows");
}

TEST_CASE("diagnose prints the Fisher limit table") {
  const fs::path dir = fresh_dir("votereg_cli_diag");
  const RunOutcome outcome =
      run_cli("diagnose --density 'normal(1)' --k 9,29 --out " + dir.string(), dir);
  CHECK(outcome.exit_code == 0);
  CHECK(outcome.stdout_text.find("r'H^-1r") != std::string::npos);
  CHECK(outcome.stdout_text.find("max |H*Hinv - I|") != std::string::npos);
  CHECK(fs::exists(dir / "report.txt"));

  const RunOutcome bad = run_cli("diagnose --density 'cauchy(1)'", dir);
  CHECK(bad.exit_code == 2);
}

TEST_CASE("config file values apply under flags") {
  const fs::path dir = fresh_dir("votereg_cli_cfg");
  {
    std::ofstream out(dir / "config.json");
    out << R"({"simulate": {"n": 50, "p": 5, "replicates": 1, "validation_n": 120,)"
        << R"( "distributions": "de", "methods": "lsr"}, "grid": 8, "seed": 7})";
  }
  const fs::path out1 = fresh_dir("votereg_cli_cfg_out1");
  const RunOutcome from_config = run_cli(
      "simulate --config " + (dir / "config.json").string() + " --workers 1 --out " +
          out1.string(),
      out1);
  CHECK(from_config.exit_code == 0);
  const std::string csv = read_file(out1 / "report.csv");
  CHECK(csv.find("lsr,de,") != std::string::npos);

  // a flag overrides the file
  const fs::path out2 = fresh_dir("votereg_cli_cfg_out2");
  const RunOutcome flag_wins = run_cli(
      "simulate --config " + (dir / "config.json").string() +
          " --distributions unif --workers 1 --out " + out2.string(),
      out2);
  CHECK(flag_wins.exit_code == 0);
  CHECK(read_file(out2 / "report.csv").find("lsr,unif,") != std::string::npos);
}
