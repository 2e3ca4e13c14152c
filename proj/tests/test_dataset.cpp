#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedtad/dataset.hpp"
#include "fedtad/errors.hpp"
#include "fedtad/reliability.hpp"

using namespace fedtad;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("fedtad_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path toy_dir(const std::string& name) {
  const fs::path d = fresh_dir(name);
  write(d / "meta.json", R"({"num_nodes": 3, "num_classes": 2, "feature_dim": 2, "name": "toy"})");
  write(d / "edges.csv", "0,1\n1,2\n");
  write(d / "features.csv", "1,0\n0.5,0.5\n0,1\n");
  write(d / "labels.csv", "0\n0\n1\n");
  return d;
}

DatasetError::Kind load_error_kind(const fs::path& d, std::string* message = nullptr) {
  try {
    load_dataset(d);
  } catch (const DatasetError& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  FAIL("expected a DatasetError");
  return DatasetError::Kind::missing_file;
}

}  // namespace

TEST_SUITE("data_io") {
  TEST_CASE("well-formed toy directory loads") {
    const DatasetBundle b = load_dataset(toy_dir("ok"));
    CHECK(b.name == "toy");
    CHECK(b.graph.num_nodes() == 3);
    CHECK(b.graph.num_edges() == 2);
    CHECK(b.graph.features()(1, 1) == 0.5);
    CHECK_FALSE(b.split.has_value());
  }

  TEST_CASE("label out of range names the line") {
    const fs::path d = toy_dir("badlabel");
    write(d / "labels.csv", "0\n1\n2\n");
    std::string msg;
    CHECK(load_error_kind(d, &msg) == DatasetError::Kind::invalid_value);
    CHECK(msg.find("labels.csv") != std::string::npos);
    CHECK(msg.find('3') != std::string::npos);
  }

  TEST_CASE("feature row arity, missing files and count mismatches are distinct errors") {
    fs::path d = toy_dir("arity");
    write(d / "features.csv", "1,0\n0.5\n0,1\n");
    CHECK(load_error_kind(d) == DatasetError::Kind::malformed_row);

    d = toy_dir("missing");
    fs::remove(d / "edges.csv");
    CHECK(load_error_kind(d) == DatasetError::Kind::missing_file);

    d = toy_dir("count");
    write(d / "labels.csv", "0\n0\n");
    CHECK(load_error_kind(d) == DatasetError::Kind::count_mismatch);
  }

  TEST_CASE("split.json is read and must be disjoint") {
    const fs::path d = toy_dir("split");
    write(d / "split.json", R"({"train": [0], "val": [1], "test": [2]})");
    const DatasetBundle b = load_dataset(d);
    REQUIRE(b.split.has_value());
    CHECK(b.split->test == std::vector<std::uint32_t>{2});
    write(d / "split.json", R"({"train": [0], "val": [0], "test": [2]})");
    CHECK_THROWS_AS(load_dataset(d), DatasetError);
  }

  TEST_CASE("save/load round trip is byte identical") {
    SbmSpec spec;
    spec.nodes_per_class = {6, 5};
    spec.intra_prob = 0.5;
    spec.inter_prob = 0.1;
    spec.feature_dim = 3;
    spec.seed = 4;
    const fs::path a = fresh_dir("rt_a"), b = fresh_dir("rt_b");
    save_dataset(generate_sbm(spec), a);
    save_dataset(load_dataset(a), b);
    for (const char* f : {"meta.json", "edges.csv", "features.csv", "labels.csv"}) CHECK(slurp(a / f) == slurp(b / f));
  }

  TEST_CASE("sbm extremes and determinism") {
    SbmSpec spec;
    spec.nodes_per_class = {10, 10};
    spec.intra_prob = 1.0;
    spec.inter_prob = 0.0;
    spec.seed = 1;
    const Graph g = generate_sbm(spec).graph;
    CHECK(class_homophily(g, 0) == 1.0);
    CHECK(class_homophily(g, 1) == 1.0);

    spec.intra_prob = 0.0;
    spec.inter_prob = 1.0;
    const Graph h = generate_sbm(spec).graph;
    CHECK(class_homophily(h, 0) == 0.0);
    CHECK(class_homophily(h, 1) == 0.0);

    spec.intra_prob = 0.3;
    spec.inter_prob = 0.05;
    CHECK(generate_sbm(spec).graph.edge_list() == generate_sbm(spec).graph.edge_list());
  }

  TEST_CASE("sbm edge count within 3 sigma of its expectation") {
    SbmSpec spec;
    spec.nodes_per_class = {150, 120, 130};
    spec.intra_prob = 0.05;
    spec.inter_prob = 0.005;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      spec.seed = seed;
      double mean = 0.0, var = 0.0;
      const auto& n = spec.nodes_per_class;
      for (std::size_t a = 0; a < n.size(); ++a)
        for (std::size_t b = a; b < n.size(); ++b) {
          const double pairs = a == b ? n[a] * (n[a] - 1) / 2.0 : static_cast<double>(n[a] * n[b]);
          const double p = a == b ? spec.intra_prob : spec.inter_prob;
          mean += pairs * p;
          var += pairs * p * (1 - p);
        }
      REQUIRE(mean >= 500);
      const double edges = static_cast<double>(generate_sbm(spec).graph.num_edges());
      CHECK(std::abs(edges - mean) <= 3 * std::sqrt(var));
    }
  }

  TEST_CASE("invalid sbm specs are rejected") {
    SbmSpec spec;
    spec.nodes_per_class = {3};
    spec.intra_prob = 1.5;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec.intra_prob = 0.5;
    spec.class_center_separation = -1;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
  }

  TEST_CASE("row_normalize scales rows to unit L1 norm and leaves zero rows") {
    const Matrix m = row_normalize(Matrix::from_rows({{1, 3}, {0, 0}, {-2, 2}}));
    CHECK(m(0, 0) == 0.25);
    CHECK(m(0, 1) == 0.75);
    CHECK(m(1, 0) == 0.0);
    CHECK(m(2, 0) == -0.5);
  }
}
