#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "orthoforest/dataset.hpp"
#include "orthoforest/errors.hpp"

namespace {

namespace fs = std::filesystem;
using orf::ColumnRole;
using orf::ConfigDoc;
using orf::Dataset;
using orf::DatasetSchema;

class DatasetTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("orf-dataset-" + std::to_string(::getpid()) + "-" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_file(const std::string& name, const std::string& content) {
    const std::string path = (dir_ / name).string();
    std::ofstream out(path);
    out << content;
    return path;
  }

  fs::path dir_;
};

DatasetSchema basic_schema() {
  return DatasetSchema::from_config(orf::ConfigDoc::parse_string(R"([schema]
y = outcome
t = treatment
x1 = target
w1 = parametric
v1 = nonparametric
)"));
}

TEST_F(DatasetTest, LoadsCsvByHeaderNameIgnoringExtras) {
  const auto path = write_file("d.csv",
                               "extra,y,t,x1,w1,v1\n"
                               "9,1.5,2,0.25,-1,3\n"
                               "8,2.5,1,0.75,0,4\n");
  Dataset ds = orf::load_dataset(path, basic_schema());
  EXPECT_EQ(ds.n(), 2);
  EXPECT_EQ(ds.d(), 1);
  EXPECT_EQ(ds.p1(), 1);
  EXPECT_EQ(ds.p2(), 1);
  EXPECT_EQ(ds.n_instruments(), 0);
  EXPECT_DOUBLE_EQ(ds.y()(0), 1.5);
  EXPECT_DOUBLE_EQ(ds.t()(1), 1.0);
  EXPECT_DOUBLE_EQ(ds.x()(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(ds.wp()(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(ds.wn()(0, 0), 3.0);
}

TEST_F(DatasetTest, MissingColumnAndBadCellsAreLocated) {
  const auto no_col = write_file("m.csv", "y,t,x1,w1\n1,2,3,4\n");
  EXPECT_THROW(orf::load_dataset(no_col, basic_schema()), orf::SchemaError);

  const auto bad_cell = write_file("b.csv",
                                   "y,t,x1,w1,v1\n"
                                   "1,2,3,4,5\n"
                                   "1,2,oops,4,5\n");
  try {
    orf::load_dataset(bad_cell, basic_schema());
    FAIL() << "expected IngestError";
  } catch (const orf::IngestError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("x1"), std::string::npos) << msg;
  }

  const auto ragged = write_file("r.csv", "y,t,x1,w1,v1\n1,2,3,4\n");
  EXPECT_THROW(orf::load_dataset(ragged, basic_schema()), orf::IngestError);

  const auto non_finite = write_file("n.csv", "y,t,x1,w1,v1\n1,2,inf,4,5\n");
  EXPECT_THROW(orf::load_dataset(non_finite, basic_schema()), orf::IngestError);
}

TEST_F(DatasetTest, SchemaRequiresCoreRoles) {
  EXPECT_THROW(DatasetSchema::from_config(
                   ConfigDoc::parse_string("[schema]\nt = treatment\nx1 = target\n")),
               orf::SchemaError);
  EXPECT_THROW(DatasetSchema::from_config(
                   ConfigDoc::parse_string("[schema]\ny = outcome\nx1 = target\n")),
               orf::SchemaError);
  EXPECT_THROW(DatasetSchema::from_config(
                   ConfigDoc::parse_string("[schema]\ny = outcome\nt = treatment\n")),
               orf::SchemaError);
  EXPECT_THROW(
      DatasetSchema::from_config(ConfigDoc::parse_string(
          "[schema]\ny = outcome\nt = treatment\nt2 = treatment\nx1 = target\n")),
      orf::SchemaError);
  EXPECT_THROW(DatasetSchema::from_config(ConfigDoc::parse_string(
                   "[schema]\ny = outcome\nt = treatment\nx1 = mystery\n")),
               orf::SchemaError);
}

TEST_F(DatasetTest, LogTransformAppliesAtIngest) {
  auto schema = DatasetSchema::from_config(ConfigDoc::parse_string(R"([schema]
y = outcome log1p
t = treatment
x1 = target
)"));
  const auto path = write_file("log.csv", "y,t,x1\n1.0,2,0\n0.0,1,1\n");
  Dataset ds = orf::load_dataset(path, schema);
  EXPECT_DOUBLE_EQ(ds.y()(0), std::log1p(1.0));
  EXPECT_DOUBLE_EQ(ds.y()(1), 0.0);

  const auto bad = write_file("logbad.csv", "y,t,x1\n-1.0,2,0\n");
  EXPECT_THROW(orf::load_dataset(bad, schema), orf::IngestError);
}

TEST_F(DatasetTest, StandardizeTransformCentersAndScales) {
  auto schema = DatasetSchema::from_config(ConfigDoc::parse_string(R"([schema]
y = outcome
t = treatment
x1 = target standardize
w1 = parametric standardize
)"));
  const auto path = write_file("std.csv",
                               "y,t,x1,w1\n"
                               "1,0,2,5\n"
                               "2,1,4,5\n"
                               "3,0,6,5\n");
  Dataset ds = orf::load_dataset(path, schema);
  // x1 = {2,4,6}: mean 4, sample sd 2.
  EXPECT_NEAR(ds.x()(0, 0), -1.0, 1e-12);
  EXPECT_NEAR(ds.x()(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(ds.x()(2, 0), 1.0, 1e-12);
  // Constant column: centered only, no division by zero.
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(ds.wp()(i, 0), 0.0, 1e-12);
}

TEST_F(DatasetTest, SaveLoadRoundTripPreservesValues) {
  const auto path = write_file("rt.csv",
                               "y,t,x1,w1,v1\n"
                               "0.1,1,0.3333333333333333,2,3\n"
                               "2.5,0,1e-10,4,5\n");
  auto schema = basic_schema();
  Dataset ds = orf::load_dataset(path, schema);
  const auto out = (dir_ / "saved.csv").string();
  orf::save_dataset(ds, out);
  Dataset ds2 = orf::load_dataset(out, schema);
  ASSERT_EQ(ds2.n(), ds.n());
  for (int i = 0; i < ds.n(); ++i) {
    EXPECT_EQ(ds.y()(i), ds2.y()(i));
    EXPECT_EQ(ds.x()(i, 0), ds2.x()(i, 0));
    EXPECT_EQ(ds.wn()(i, 0), ds2.wn()(i, 0));
  }
}

TEST_F(DatasetTest, SubsetSelectsRowsWithRepeats) {
  const auto path = write_file("s.csv",
                               "y,t,x1,w1,v1\n"
                               "1,1,10,0,0\n"
                               "2,0,20,0,0\n"
                               "3,1,30,0,0\n");
  Dataset ds = orf::load_dataset(path, basic_schema());
  Dataset sub = ds.subset({2, 0, 2});
  ASSERT_EQ(sub.n(), 3);
  EXPECT_DOUBLE_EQ(sub.y()(0), 3);
  EXPECT_DOUBLE_EQ(sub.y()(1), 1);
  EXPECT_DOUBLE_EQ(sub.x()(2, 0), 30);
}

TEST(SplitHalves, DisjointSortedAndExhaustive) {
  for (int n : {2, 5, 10, 101}) {
    const auto split = orf::split_halves(n, 123);
    EXPECT_EQ(static_cast<int>(split.first.size()), (n + 1) / 2);
    EXPECT_EQ(static_cast<int>(split.second.size()), n / 2);
    std::set<int> all;
    for (int v : split.first) all.insert(v);
    for (int v : split.second) all.insert(v);
    EXPECT_EQ(static_cast<int>(all.size()), n);
    EXPECT_TRUE(std::is_sorted(split.first.begin(), split.first.end()));
    EXPECT_TRUE(std::is_sorted(split.second.begin(), split.second.end()));
  }
  // Deterministic in the seed; different seeds give different splits.
  const auto a = orf::split_halves(50, 7);
  const auto b = orf::split_halves(50, 7);
  const auto c = orf::split_halves(50, 8);
  EXPECT_EQ(a.first, b.first);
  EXPECT_NE(a.first, c.first);
}

TEST(SubsampleHalves, DrawsWithoutReplacementThenHalves) {
  const auto split = orf::subsample_halves(100, 31, 5);
  EXPECT_EQ(split.first.size(), 16u);
  EXPECT_EQ(split.second.size(), 15u);
  std::set<int> all;
  for (int v : split.first) all.insert(v);
  for (int v : split.second) all.insert(v);
  EXPECT_EQ(all.size(), 31u);  // disjoint halves, no repeats
  for (int v : all) {
    EXPECT_GE(v, 0);
    EXPECT_LT(v, 100);
  }
}

}  // namespace
