#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "rwsgd/ingest.hpp"

namespace rwsgd {
namespace {

namespace fs = std::filesystem;

class TempCsv {
 public:
  explicit TempCsv(const std::string& text) {
    path_ = fs::temp_directory_path() /
            ("rwsgd_ingest_" + std::to_string(counter_++) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name() + ".csv");
    std::ofstream(path_) << text;
  }
  ~TempCsv() { fs::remove(path_); }
  std::string path() const { return path_.string(); }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

std::vector<Observation> drain(CsvSource& src) {
  std::vector<Observation> out;
  while (auto z = src.next()) out.push_back(*z);
  return out;
}

TEST(Csv, MissingRowIsSkippedAndCounted) {
  TempCsv f("y,a,b\n1,2,3\n4,?,6\n7,8,9\n");
  IngestionSpec spec;
  spec.response = "y";
  spec.covariates = {"a", "b"};
  CsvSource src(f.path(), spec, ModelKind::least_squares());
  const auto rows = drain(src);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(src.stats().rows_read, 3u);
  EXPECT_EQ(src.stats().rows_emitted, 2u);
  EXPECT_EQ(src.stats().rows_skipped, 1u);
  EXPECT_EQ(rows[1].y, 7.0);
  EXPECT_EQ(rows[1].x[0], 8.0);
  EXPECT_EQ(rows[1].x[1], 9.0);
}

TEST(Csv, UnparseableAndShortRowsSkipped) {
  TempCsv f("y,a\n1,abc\n2\n3,4\n");
  IngestionSpec spec;
  spec.response = "y";
  spec.covariates = {"a"};
  CsvSource src(f.path(), spec, ModelKind::least_squares());
  EXPECT_EQ(drain(src).size(), 1u);
  EXPECT_EQ(src.stats().rows_skipped, 2u);
}

TEST(Csv, TimeCategoryOneHot) {
  const std::vector<std::string> cats{"0-2",   "3-5",   "6-8",   "9-11",
                                      "12-14", "15-17", "18-20", "21-23"};
  EXPECT_EQ(hour_bin_labels(3), cats);
  TempCsv f("power,Time\n2.5,0-2\n1.0,21-23\n0.4,24-26\n");
  IngestionSpec spec;
  spec.response = "power";
  spec.covariates = {"Time"};
  spec.categorical = {{"Time", cats, 0}};
  CsvSource src(f.path(), spec, ModelKind::least_squares());
  EXPECT_EQ(src.dim(), 8);
  EXPECT_EQ(src.names().front(), "Time 0-2");
  const auto rows = drain(src);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].x[0], 1.0);
  EXPECT_EQ(rows[0].x.sum(), 1.0);
  EXPECT_EQ(rows[1].x[7], 1.0);
  EXPECT_EQ(src.stats().rows_skipped, 1u);
}

TEST(Csv, ClockTimesBinnedByHour) {
  TempCsv f("y,Time\n1,00:15:00\n2,17:59:00\n3,23:00\n4,25:00\n");
  IngestionSpec spec;
  spec.response = "y";
  spec.covariates = {"Time"};
  spec.categorical = {{"Time", {}, 3}};
  CsvSource src(f.path(), spec, ModelKind::least_squares());
  ASSERT_EQ(src.dim(), 8);
  const auto rows = drain(src);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].x[0], 1.0);
  EXPECT_EQ(rows[1].x[5], 1.0);
  EXPECT_EQ(rows[2].x[7], 1.0);
}

TEST(Csv, LogisticLabels) {
  TempCsv f("class,R1\nbanana,0.5\nwine,0.1\nbanana,0.2\n");
  IngestionSpec spec;
  spec.response = "class";
  spec.covariates = {"R1"};
  spec.labels = {{"banana", 1.0}, {"wine", -1.0}};
  CsvSource src(f.path(), spec, ModelKind::logistic());
  const auto rows = drain(src);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].y, 1.0);
  EXPECT_EQ(rows[1].y, -1.0);
  EXPECT_EQ(rows[2].y, 1.0);
}

TEST(Csv, LogisticLabelOutsideMappingIsError) {
  TempCsv f("class,R1\nbanana,0.5\nbeer,0.1\n");
  IngestionSpec spec;
  spec.response = "class";
  spec.covariates = {"R1"};
  spec.labels = {{"banana", 1.0}};
  CsvSource src(f.path(), spec, ModelKind::logistic());
  EXPECT_TRUE(src.next());
  EXPECT_THROW(src.next(), DataError);
}

TEST(Csv, UnknownColumnIsConfigError) {
  TempCsv f("y,a\n1,2\n");
  IngestionSpec spec;
  spec.response = "y";
  spec.covariates = {"nope"};
  EXPECT_THROW(CsvSource(f.path(), spec, ModelKind::least_squares()), ConfigError);
}

TEST(Csv, InterceptDiscoveryAndStandardization) {
  TempCsv f("y,g,a\n1,red,10\n2,blue,20\n3,red,30\n");
  IngestionSpec spec;
  spec.response = "y";
  spec.covariates = {"g", "a"};
  spec.categorical = {{"g", {}, 0}};
  spec.discover_categories = true;
  spec.intercept = true;
  spec.standardize = {{"a", {20.0, 10.0}}};
  CsvSource src(f.path(), spec, ModelKind::least_squares());
  EXPECT_EQ(src.names(), (std::vector<std::string>{"(Intercept)", "g red", "g blue", "a"}));
  const auto rows = drain(src);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].x[0], 1.0);
  EXPECT_EQ(rows[0].x[1], 1.0);
  EXPECT_EQ(rows[1].x[2], 1.0);
  EXPECT_EQ(rows[0].x[3], -1.0);
  EXPECT_EQ(rows[2].x[3], 1.0);
}

TEST(Csv, QuotedFields) {
  EXPECT_EQ(split_csv_line("a,\"b,c\",\"d\"\"e\""),
            (std::vector<std::string>{"a", "b,c", "d\"e"}));
  EXPECT_EQ(split_csv_line("1;2", ';'), (std::vector<std::string>{"1", "2"}));
}

TEST(Csv, AffineTransformFile) {
  TempCsv f("column,center,scale\na,1.5,2\nb,0,0.5\n");
  const auto t = read_affine_transforms(f.path());
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.at("a").center, 1.5);
  EXPECT_EQ(t.at("b").scale, 0.5);
}

}  // namespace
}  // namespace rwsgd
