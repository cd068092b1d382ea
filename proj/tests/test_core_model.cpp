#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gaware/csv_io.hpp"
#include "gaware/tree_json.hpp"
#include "helpers.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace gaware;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("gaware_test_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("weights renormalize to shares") {
  TempDir dir;
  write_file(dir.file("t.csv"),
             "type_id,w,phi_hat_y,eta2_hat_y,x_a\n"
             "a,1,0.5,0.1,0\n"
             "b,1,0.6,0.1,1\n"
             "c,2,0.7,0.1,2\n");
  const EstimateTable table = load_estimate_table(dir.file("t.csv"));
  REQUIRE(table.num_types() == 3);
  CHECK(table.row(0).weight == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(table.row(1).weight == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(table.row(2).weight == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(table.provenance.weight_renorm == doctest::Approx(4.0));
}

TEST_CASE("renormalization preserves weight ratios") {
  Rng rng(7);
  testing::RandomTableOptions opt;
  opt.num_profiles = 20;
  EstimateTable table = testing::random_table(rng, opt);
  std::vector<double> raw;
  for (auto& row : table.rows) {
    row.weight *= 37.5;
    raw.push_back(row.weight);
  }
  finalize_table(table);
  for (int i = 1; i < table.num_types(); ++i) {
    const double before = raw[static_cast<std::size_t>(i)] / raw[0];
    const double after = table.row(i).weight / table.row(0).weight;
    CHECK(std::abs(before - after) / before < 1e-12);
  }
}

TEST_CASE("negative variance rejected naming the row") {
  TempDir dir;
  write_file(dir.file("t.csv"),
             "type_id,w,phi_hat_y,eta2_hat_y,x_a\n"
             "a,1,0.5,0.1,0\n"
             "b,1,0.6,-0.1,1\n");
  CHECK_THROWS_WITH_AS(load_estimate_table(dir.file("t.csv")),
                       doctest::Contains("row 2"), ValidationError);
}

TEST_CASE("duplicate ids and non-finite fields rejected") {
  TempDir dir;
  write_file(dir.file("dup.csv"),
             "type_id,w,phi_hat_y,eta2_hat_y,x_a\n"
             "a,1,0.5,0.1,0\n"
             "a,1,0.6,0.1,1\n");
  CHECK_THROWS_WITH_AS(load_estimate_table(dir.file("dup.csv")),
                       doctest::Contains("duplicate"), ValidationError);

  write_file(dir.file("nan.csv"),
             "type_id,w,phi_hat_y,eta2_hat_y,x_a\n"
             "a,1,nan,0.1,0\n");
  CHECK_THROWS_AS(load_estimate_table(dir.file("nan.csv")), ValidationError);

  CHECK_THROWS_WITH_AS(load_estimate_table(dir.file("missing.csv")),
                       doctest::Contains("missing.csv"), ValidationError);
}

TEST_CASE("table round trip is exact") {
  Rng rng(11);
  testing::RandomTableOptions opt;
  opt.num_profiles = 50;
  opt.outcomes = 3;
  opt.covariates = 4;
  const EstimateTable table = testing::random_table(rng, opt);

  TempDir dir;
  save_estimate_table(table, dir.file("t.csv"));
  const EstimateTable loaded = load_estimate_table(dir.file("t.csv"));

  REQUIRE(loaded.num_types() == table.num_types());
  REQUIRE(loaded.outcome_names == table.outcome_names);
  REQUIRE(loaded.covariate_names == table.covariate_names);
  for (int i = 0; i < table.num_types(); ++i) {
    CHECK(loaded.row(i).type_id == table.row(i).type_id);
    CHECK(loaded.row(i).weight == table.row(i).weight);
    CHECK(loaded.row(i).phi_hat == table.row(i).phi_hat);
    CHECK(loaded.row(i).eta2_hat == table.row(i).eta2_hat);
    CHECK(loaded.row(i).covariates == table.row(i).covariates);
  }

  // idempotent: a second save/load changes nothing
  save_estimate_table(loaded, dir.file("t2.csv"));
  std::ifstream a(dir.file("t.csv")), b(dir.file("t2.csv"));
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("tree json round trip preserves a depth-1 tree") {
  TreeModel model;
  model.meta.depth = 1;
  model.meta.groups = 2;
  model.meta.outcome_names = {"y"};
  model.meta.covariate_names = {"x1"};
  model.nodes.push_back({0, 0.37, leaf_ref(0), leaf_ref(1)});
  TreeLeaf archetype;
  archetype.ignorance = false;
  archetype.label = 2;
  archetype.prediction = Vector::Constant(1, 1.2345678901234567);
  model.leaves.push_back(archetype);
  model.leaves.push_back(TreeLeaf{});

  TempDir dir;
  save_tree(model, dir.file("m.json"));
  const TreeModel loaded = load_tree(dir.file("m.json"));
  CHECK(loaded.nodes.size() == 1);
  CHECK(loaded.nodes[0].split_value == model.nodes[0].split_value);
  CHECK(loaded.leaves[0].prediction[0] == model.leaves[0].prediction[0]);
  CHECK(loaded.leaves[1].ignorance);
}

TEST_CASE("random valid trees survive the round trip") {
  Rng rng(23);
  for (int rep = 0; rep < 50; ++rep) {
    const TreeModel model = testing::random_tree(rng, 3, 2, 3);
    validate_tree(model);
    const TreeModel loaded = tree_from_json(tree_to_json(model));
    REQUIRE(loaded.nodes.size() == model.nodes.size());
    REQUIRE(loaded.leaves.size() == model.leaves.size());
    for (std::size_t i = 0; i < model.nodes.size(); ++i) {
      CHECK(loaded.nodes[i].split_var == model.nodes[i].split_var);
      CHECK(loaded.nodes[i].split_value == model.nodes[i].split_value);
      CHECK(loaded.nodes[i].left == model.nodes[i].left);
      CHECK(loaded.nodes[i].right == model.nodes[i].right);
    }
    for (std::size_t i = 0; i < model.leaves.size(); ++i) {
      CHECK(loaded.leaves[i].ignorance == model.leaves[i].ignorance);
      CHECK(loaded.leaves[i].label == model.leaves[i].label);
      if (!model.leaves[i].ignorance)
        CHECK(loaded.leaves[i].prediction == model.leaves[i].prediction);
    }
  }
}

TEST_CASE("tree with duplicate archetype labels is rejected on load") {
  TreeModel model;
  model.meta.depth = 1;
  model.meta.groups = 3;
  model.meta.outcome_names = {"y"};
  model.meta.covariate_names = {"x1"};
  model.nodes.push_back({0, 0.0, leaf_ref(0), leaf_ref(1)});
  TreeLeaf leaf;
  leaf.ignorance = false;
  leaf.label = 2;
  leaf.prediction = Vector::Constant(1, 1.0);
  model.leaves.push_back(leaf);
  model.leaves.push_back(leaf);  // same label twice

  const std::string text = tree_to_json(model);
  CHECK_THROWS_WITH_AS(tree_from_json(text), doctest::Contains("duplicate"), ValidationError);
}

TEST_CASE("malformed json and version mismatch are rejected") {
  CHECK_THROWS_AS(tree_from_json("{not json"), ValidationError);
  TreeModel model;
  model.meta.depth = 1;
  model.meta.groups = 2;
  model.meta.outcome_names = {"y"};
  model.meta.covariate_names = {"x1"};
  model.leaves.push_back(TreeLeaf{});
  std::string text = tree_to_json(model);
  const auto at = text.find("\"version\": 1");
  REQUIRE(at != std::string::npos);
  text.replace(at, 12, "\"version\": 9");
  CHECK_THROWS_WITH_AS(tree_from_json(text), doctest::Contains("version"), ValidationError);
}

TEST_CASE("study validation rejects bad propensities") {
  RawStudy study;
  study.outcome_names = {"y"};
  study.covariate_names = {"x1"};
  StudyUnit unit;
  unit.outcomes = Vector::Constant(1, 1.0);
  unit.covariates = Vector::Constant(1, 0.0);
  unit.propensity = 1.0;
  study.units.push_back(unit);
  CHECK_THROWS_WITH_AS(validate_study(study), doctest::Contains("propensity"), ValidationError);
}
