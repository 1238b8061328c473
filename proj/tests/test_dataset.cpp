#include <gtest/gtest.h>

#include <sstream>

#include "rca/dataset.hpp"
#include "support.hpp"

using namespace rca;

namespace {

const char* kRoles = R"({
  "cache_mb": {"role": "option", "kind": "discrete"},
  "scheduler": {"role": "option", "kind": "categorical"},
  "gpu": {"role": "option", "kind": "boolean"},
  "cpu_load": {"role": "metric", "kind": "continuous"},
  "energy": {"role": "objective", "kind": "continuous"}
})";

Dataset load(const std::string& table, const std::string& roles = kRoles) {
  std::istringstream t(table);
  std::istringstream r(roles);
  return load_dataset(t, r);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

std::string key_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.key();
  }
  return {};
}

}  // namespace

TEST(LoadDataset, ParsesKindsAndKeepsColumnOrder) {
  auto ds = load(
      "cache_mb,scheduler,gpu,cpu_load,energy\n"
      "64,fifo,true,0.5,10.25\n"
      "128,rr,false,0.75,12\n"
      "64,fifo,1,0.25,9.5\n");
  ASSERT_EQ(ds.sample_count(), 3u);
  ASSERT_EQ(ds.variable_count(), 5u);
  EXPECT_EQ(ds.meta(0).name, "cache_mb");
  EXPECT_EQ(ds.meta(4).role, Role::PerformanceObjective);
  EXPECT_EQ(ds.at(1, 0), 128.0);
  // categorical codes follow first appearance
  EXPECT_EQ(ds.at(0, 1), 0.0);
  EXPECT_EQ(ds.at(1, 1), 1.0);
  EXPECT_EQ(ds.meta(1).levels, (std::vector<std::string>{"fifo", "rr"}));
  EXPECT_EQ(ds.at(0, 2), 1.0);
  EXPECT_EQ(ds.at(1, 2), 0.0);
  EXPECT_EQ(ds.at(2, 2), 1.0);
  EXPECT_DOUBLE_EQ(ds.at(0, 4), 10.25);
  EXPECT_TRUE(ds.has_every_role());
  EXPECT_EQ(ds.with_role(Role::ManipulableOption), (std::vector<VarId>{0, 1, 2}));
}

TEST(LoadDataset, DropsRowsWithMissingCells) {
  auto ds = load(
      "cache_mb,scheduler,gpu,cpu_load,energy\n"
      "64,fifo,true,0.5,10\n"
      "128,rr,false,NA,12\n"
      "64,,true,0.5,10\n"
      "32,rr,false,0.1,8\n");
  EXPECT_EQ(ds.sample_count(), 2u);
  EXPECT_EQ(ds.dropped_rows(), 2u);
}

TEST(LoadDataset, ReportsInputErrors) {
  const std::string header = "cache_mb,scheduler,gpu,cpu_load,energy\n";
  EXPECT_EQ(code_of([&] { load("cache_mb,cache_mb,gpu,cpu_load,energy\n1,2,true,3,4\n"); }), ErrorCode::DuplicateName);
  EXPECT_EQ(code_of([&] { load(header + "64,fifo,true,abc,10\n"); }), ErrorCode::NonNumericCell);
  EXPECT_EQ(key_of([&] { load(header + "64,fifo,true,abc,10\n"); }), "cpu_load");
  EXPECT_EQ(code_of([&] { load(header + "64,fifo,maybe,0.1,10\n"); }), ErrorCode::NonNumericCell);
  EXPECT_EQ(code_of([&] { load(header); }), ErrorCode::EmptyDataset);
  EXPECT_EQ(code_of([&] { load(header + "NA,fifo,true,0.1,10\n"); }), ErrorCode::EmptyDataset);
  EXPECT_EQ(code_of([&] { load(header + "64,fifo,true,0.1,10\n", R"({"cache_mb": {"role": "option", "kind": "discrete"}})"); }),
            ErrorCode::MissingRole);
  EXPECT_EQ(code_of([&] {
              load("cache_mb\n1\n", R"({"cache_mb": {"role": "option", "kind": "discrete"},
                                        "ghost": {"role": "metric", "kind": "continuous"}})");
            }),
            ErrorCode::UnknownVariable);
}

TEST(LoadDataset, MalformedRolesNameTheOffendingKey) {
  EXPECT_EQ(code_of([] { parse_roles(nlohmann::json::parse(R"({"a": {"role": "option"}})")); }), ErrorCode::InvalidRoles);
  EXPECT_EQ(key_of([] { parse_roles(nlohmann::json::parse(R"({"a": {"role": "option"}})")); }), "a");
  EXPECT_EQ(key_of([] { parse_roles(nlohmann::json::parse(R"({"b": {"role": "boss", "kind": "continuous"}})")); }), "b");
  EXPECT_EQ(code_of([] { parse_roles(nlohmann::json::parse("[1, 2]")); }), ErrorCode::InvalidRoles);
}

TEST(LoadDataset, DeclaredCategoricalLevelsFixTheCoding) {
  const std::string roles = R"({"mode": {"role": "option", "kind": "categorical", "levels": ["low", "mid", "high"]},
                                "y": {"role": "objective", "kind": "continuous"}})";
  auto ds = load("mode,y\nhigh,1\nlow,2\n", roles);
  EXPECT_EQ(ds.at(0, 0), 2.0);
  EXPECT_EQ(ds.at(1, 0), 0.0);
  EXPECT_EQ(code_of([&] { load("mode,y\nturbo,1\n", roles); }), ErrorCode::InvalidArgument);
}

TEST(LoadDataset, WriteThenLoadRoundTrips) {
  auto ds = load(
      "cache_mb,scheduler,gpu,cpu_load,energy\n"
      "64,fifo,true,0.1,10.000000000000002\n"
      "128,rr,false,-3.5e-7,12\n");
  std::ostringstream table;
  std::ostringstream roles;
  write_table(table, ds);
  write_roles(roles, ds);
  auto back = load(table.str(), roles.str());
  EXPECT_EQ(back, ds);
}

TEST(Dataset, ConcatRequiresMatchingSchema) {
  using testkit::Column;
  auto a = testkit::make_dataset({{"x", Role::ManipulableOption, Kind::Continuous, {1, 2}},
                                  {"y", Role::PerformanceObjective, Kind::Continuous, {3, 4}}});
  auto b = testkit::make_dataset({{"x", Role::ManipulableOption, Kind::Continuous, {5}},
                                  {"y", Role::PerformanceObjective, Kind::Continuous, {6}}});
  auto c = concat(a, b);
  EXPECT_EQ(c.sample_count(), 3u);
  EXPECT_EQ(c.at(2, 1), 6.0);
  auto other = testkit::make_dataset({{"x", Role::ManipulableOption, Kind::Continuous, {5}},
                                      {"z", Role::PerformanceObjective, Kind::Continuous, {6}}});
  EXPECT_EQ(code_of([&] { concat(a, other); }), ErrorCode::SchemaMismatch);
}

TEST(Dataset, IndexOfUnknownNameFails) {
  auto a = testkit::make_dataset({{"x", Role::ManipulableOption, Kind::Continuous, {1}}});
  EXPECT_EQ(a.index_of("x"), 0u);
  EXPECT_EQ(code_of([&] { a.index_of("nope"); }), ErrorCode::UnknownVariable);
}

TEST(Discretization, EqualFrequencyEdgesAreOrderStatistics) {
  std::vector<double> xs{10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
  auto d = fit_discretization(xs, "x", BinStrategy::EqualFrequency, 5);
  EXPECT_EQ(d.bin_edges, (std::vector<double>{1, 2, 4, 6, 8, 10}));
  EXPECT_EQ(d.bin_count, 5u);
  EXPECT_EQ(d.bin_of(1), 0u);
  EXPECT_EQ(d.bin_of(2), 0u);
  EXPECT_EQ(d.bin_of(2.5), 1u);
  EXPECT_EQ(d.bin_of(10), 4u);
  EXPECT_EQ(d.bin_of(99), 4u);
}

TEST(Discretization, EqualWidthSplitsTheRange) {
  std::vector<double> xs{0, 10, 3};
  auto d = fit_discretization(xs, "x", BinStrategy::EqualWidth, 5);
  ASSERT_EQ(d.bin_edges.size(), 6u);
  EXPECT_DOUBLE_EQ(d.bin_edges[1], 2.0);
  EXPECT_DOUBLE_EQ(d.bin_edges[4], 8.0);
  EXPECT_EQ(d.bin_of(3), 1u);
}

TEST(Discretization, DegenerateInputs) {
  std::vector<double> same{4, 4, 4};
  auto d = fit_discretization(same, "x", BinStrategy::EqualFrequency, 5);
  EXPECT_EQ(d.bin_count, 1u);
  EXPECT_EQ(d.bin_of(4), 0u);
  // ties collapse duplicate edges
  std::vector<double> ties{1, 1, 1, 1, 1, 1, 1, 1, 2, 3};
  auto t = fit_discretization(ties, "x", BinStrategy::EqualFrequency, 5);
  EXPECT_TRUE(std::is_sorted(t.bin_edges.begin(), t.bin_edges.end()));
  EXPECT_EQ(std::adjacent_find(t.bin_edges.begin(), t.bin_edges.end()), t.bin_edges.end());
  EXPECT_EQ(code_of([&] { fit_discretization(same, "x", BinStrategy::EqualFrequency, 1); }), ErrorCode::BadBinCount);
}

TEST(Discretization, DiscretizeRewritesOnlyTargetedColumns) {
  auto ds = testkit::make_dataset({{"x", Role::NonManipulableMetric, Kind::Continuous, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}},
                                   {"b", Role::ManipulableOption, Kind::Boolean, {0, 1, 0, 1, 0, 1, 0, 1, 0, 1}}});
  auto binned = discretize_default(ds, 5);
  EXPECT_EQ(binned.meta(0).kind, Kind::Discrete);
  EXPECT_EQ(binned.meta(0).bin_edges.size(), 6u);
  EXPECT_EQ(binned.at(0, 0), 0.0);
  EXPECT_EQ(binned.at(9, 0), 4.0);
  EXPECT_EQ(binned.meta(1).kind, Kind::Boolean);
  EXPECT_EQ(binned.at(1, 1), 1.0);
  std::vector<Discretization> bad{{"x", BinStrategy::PassThrough, 5, {}}};
  EXPECT_EQ(code_of([&] { discretize(ds, bad); }), ErrorCode::BadDiscretization);
}
