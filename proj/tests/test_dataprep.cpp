#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "votereg/dataprep.hpp"
#include "votereg/rng.hpp"

using namespace votereg;

namespace {

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& name, const std::string& content)
      : path(std::filesystem::temp_directory_path() / name) {
    std::ofstream out(path, std::ios::binary);
    out << content;
  }
  ~TempFile() { std::filesystem::remove(path); }
};

ExpressionMatrix make_matrix(const std::vector<std::string>& probes,
                             const Eigen::MatrixXd& values) {
  ExpressionMatrix matrix;
  matrix.values = values;
  matrix.probe_ids = probes;
  for (Eigen::Index s = 0; s < values.cols(); ++s)
    matrix.sample_ids.push_back("s" + std::to_string(s + 1));
  return matrix;
}

}  // namespace

TEST_CASE("load_csv basics") {
  SUBCASE("3x3 numeric file with a named response") {
    TempFile file("votereg_t1.csv", "a,y,b\n1,2,3\n4,5,6\n7,8,9\n");
    const Dataset data = load_csv(file.path.string(), true, ColumnRef{std::string("y")});
    CHECK(data.n() == 3);
    CHECK(data.p() == 2);
    CHECK(data.y[1] == doctest::Approx(5.0));
    CHECK(data.x(2, 0) == doctest::Approx(7.0));
    CHECK(data.column_names == std::vector<std::string>{"a", "b"});
  }
  SUBCASE("a non-numeric cell reports its location") {
    TempFile file("votereg_t2.csv", "a,y\n1,2\n1,oops\n3,4\n");
    try {
      load_csv(file.path.string(), true, ColumnRef{std::string("y")});
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.row() == 3);
      CHECK(e.column() == 2);
    }
  }
  SUBCASE("header-less file with positional response") {
    TempFile file("votereg_t3.csv", "1,10\n2,20\n3,30\n");
    const Dataset data = load_csv(file.path.string(), false, ColumnRef{1});
    CHECK(data.y[0] == doctest::Approx(10.0));
    CHECK(data.x(0, 0) == doctest::Approx(1.0));
    CHECK(data.column_names.empty());
  }
  SUBCASE("missing response column") {
    TempFile file("votereg_t4.csv", "a,b\n1,2\n3,4\n");
    CHECK_THROWS_AS(load_csv(file.path.string(), true, ColumnRef{std::string("y")}),
                    ParseError);
  }
  SUBCASE("ragged rows") {
    TempFile file("votereg_t5.csv", "a,y\n1,2\n3\n");
    CHECK_THROWS_AS(load_csv(file.path.string(), true, ColumnRef{std::string("y")}),
                    ParseError);
  }
  SUBCASE("quoted fields and CRLF") {
    TempFile file("votereg_t6.csv", "\"a,1\",y\r\n1,2\r\n3,4\r\n");
    const Dataset data = load_csv(file.path.string(), true, ColumnRef{std::string("y")});
    CHECK(data.column_names == std::vector<std::string>{"a,1"});
    CHECK(data.y[1] == doctest::Approx(4.0));
  }
}

TEST_CASE("property: serialize then reload is idempotent on values") {
  Rng rng(777);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform() * 30);
    const int p = 1 + static_cast<int>(rng.uniform() * 6);
    Dataset data;
    data.y.resize(n);
    data.x.resize(n, p);
    for (int i = 0; i < n; ++i) {
      data.y[i] = rng.normal() * std::pow(10.0, rng.uniform(-8.0, 8.0));
      for (int j = 0; j < p; ++j) data.x(i, j) = rng.normal();
    }
    const auto path = std::filesystem::temp_directory_path() /
                      ("votereg_rt_" + std::to_string(trial) + ".csv");
    write_dataset_csv(data, path.string(), "y");
    const Dataset reloaded = load_csv(path.string(), true, ColumnRef{std::string("y")});
    write_dataset_csv(reloaded, path.string(), "y");
    const Dataset again = load_csv(path.string(), true, ColumnRef{std::string("y")});
    CHECK((again.y - data.y).cwiseAbs().maxCoeff() <= 1e-12 * data.y.cwiseAbs().maxCoeff());
    CHECK((again.x - data.x).cwiseAbs().maxCoeff() <= 1e-12);
    std::filesystem::remove(path);
  }
}

TEST_CASE("expression matrix loading in both orientations") {
  const std::string by_rows = "probe,s1,s2,s3\ng1,1,2,3\ng2,4,5,6\n";
  const std::string by_cols = "sample,g1,g2\ns1,1,4\ns2,2,5\ns3,3,6\n";
  TempFile rows_file("votereg_e1.csv", by_rows);
  TempFile cols_file("votereg_e2.csv", by_cols);

  const ExpressionMatrix a = load_expression_csv(rows_file.path.string(), true);
  const ExpressionMatrix b = load_expression_csv(cols_file.path.string(), false);
  CHECK(a.probe_ids == b.probe_ids);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.values.rows() == 2);
  CHECK(a.values.cols() == 3);
}

TEST_CASE("screen_probes") {
  SUBCASE("constant probes trip the range filter and the response check") {
    const Eigen::MatrixXd values = Eigen::MatrixXd::Constant(4, 6, 5.0);
    const ExpressionMatrix matrix = make_matrix({"r", "p1", "p2", "p3"}, values);
    CHECK_THROWS_AS(screen_probes(matrix, "r", 10), InputError);
  }
  SUBCASE("duplicated response ranks first with |corr| = 1") {
    Rng rng(4141);
    Eigen::MatrixXd values(4, 30);
    for (Eigen::Index c = 0; c < 30; ++c) {
      values(0, c) = 5.0 + 2.0 * rng.normal();  // response
      values(1, c) = rng.normal() * 3.0 + 5.0;
      values(2, c) = -values(0, c) + 10.0;  // perfect negative correlation
      values(3, c) = rng.normal() * 3.0 + 5.0;
    }
    const ExpressionMatrix matrix = make_matrix({"resp", "noise1", "dup", "noise2"}, values);
    const Dataset data = screen_probes(matrix, "resp", 2, 0.25, 0.5);
    CHECK(data.column_names.front() == "dup");
  }
  SUBCASE("synthetic correlation ladder keeps the top block") {
    // probes constructed at decreasing |correlation| with the response
    Rng rng(9292);
    const int samples = 400;
    Eigen::VectorXd response(samples);
    for (int s = 0; s < samples; ++s) response[s] = rng.normal();
    const std::vector<double> rhos = {0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0};
    Eigen::MatrixXd values(1 + 10, samples);
    values.row(0) = response.transpose() * 2.0;
    std::vector<std::string> ids = {"resp"};
    for (std::size_t k = 0; k < rhos.size(); ++k) {
      const double rho = rhos[k];
      for (int s = 0; s < samples; ++s)
        values(static_cast<Eigen::Index>(k + 1), s) =
            rho * response[s] + std::sqrt(1.0 - rho * rho) * rng.normal();
      ids.push_back("p" + std::to_string(k));
    }
    values.array() += 10.0;  // keep everything above the max-quantile filter
    const ExpressionMatrix matrix = make_matrix(ids, values);
    const Dataset data = screen_probes(matrix, "resp", 5, 0.25, 0.01);
    CHECK(data.column_names ==
          std::vector<std::string>{"p0", "p1", "p2", "p3", "p4"});
    CHECK(data.p() == 5);
  }
  SUBCASE("output size is min(top_m, survivors)") {
    Rng rng(5353);
    Eigen::MatrixXd values(5, 40);
    for (Eigen::Index r = 0; r < 5; ++r)
      for (Eigen::Index c = 0; c < 40; ++c) values(r, c) = 10.0 + rng.normal();
    const ExpressionMatrix matrix = make_matrix({"r", "a", "b", "c", "d"}, values);
    const Dataset data = screen_probes(matrix, "r", 100, 0.25, 0.1);
    CHECK(data.p() == 4);
  }
  SUBCASE("screening is invariant to sample permutation") {
    Rng rng(6464);
    Eigen::MatrixXd values(6, 50);
    for (Eigen::Index r = 0; r < 6; ++r)
      for (Eigen::Index c = 0; c < 50; ++c) values(r, c) = 8.0 + 2.0 * rng.normal();
    const ExpressionMatrix matrix =
        make_matrix({"r", "a", "b", "c", "d", "e"}, values);
    Eigen::MatrixXd shuffled = values;
    std::vector<int> order(50);
    std::iota(order.begin(), order.end(), 0);
    for (int i = 49; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(rng.next_u64() % (i + 1))]);
    for (int c = 0; c < 50; ++c)
      shuffled.col(c) = values.col(order[static_cast<std::size_t>(c)]);
    const ExpressionMatrix permuted =
        make_matrix({"r", "a", "b", "c", "d", "e"}, shuffled);

    const Dataset base = screen_probes(matrix, "r", 3, 0.25, 0.01);
    const Dataset perm = screen_probes(permuted, "r", 3, 0.25, 0.01);
    CHECK(base.column_names == perm.column_names);
  }
  SUBCASE("absent response probe") {
    const Eigen::MatrixXd values = Eigen::MatrixXd::Random(3, 10);
    const ExpressionMatrix matrix = make_matrix({"a", "b", "c"}, values);
    CHECK_THROWS_AS(screen_probes(matrix, "nope", 5), InputError);
  }
  SUBCASE("exact |corr| ties break by probe id") {
    Rng rng(7878);
    Eigen::MatrixXd values(4, 20);
    for (Eigen::Index c = 0; c < 20; ++c) {
      values(0, c) = 10.0 + rng.normal();          // response
      values(1, c) = 10.0 + rng.normal();          // independent noise
      values(2, c) = values(0, c) + 1.0;           // duplicate signal, id "zz"
      values(3, c) = values(0, c) + 2.0;           // duplicate signal, id "aa"
    }
    const ExpressionMatrix matrix = make_matrix({"resp", "mid", "zz", "aa"}, values);
    const Dataset data = screen_probes(matrix, "resp", 2, 0.25, 0.01);
    // both duplicates tie at |corr| = 1; lexicographic order decides
    CHECK(data.column_names == std::vector<std::string>{"aa", "zz"});
  }
}
