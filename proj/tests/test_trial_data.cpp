#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "crtbayes/trial_data.hpp"
#include "fixtures.hpp"

using namespace crtbayes;

namespace {

std::filesystem::path write_file(const std::string& name, const std::string& body) {
  auto p = std::filesystem::temp_directory_path() / ("crtbayes_" + name);
  std::ofstream(p) << body;
  return p;
}

CsvSchema schema_xyz() { return {"cid", "arm", "y", {"x"}, ','}; }

}  // namespace

TEST(TrialData, LoadsFourRowFile) {
  const auto p = write_file("four.csv", "cid,arm,y,x\nc1,1,1.0,0.5\nc1,1,3.0,1.5\nc2,0,2,0\nc2,0,4,1\n");
  const auto d = load_csv(p, schema_xyz(), 0.5);
  EXPECT_EQ(d.num_clusters(), 2u);
  EXPECT_EQ(d.num_individuals(), 4u);
  EXPECT_EQ(d.cluster(0).id, "c1");
  EXPECT_EQ(d.cluster(0).treatment, 1);
  EXPECT_EQ(d.cluster(1).outcomes(1), 4.0);
  EXPECT_DOUBLE_EQ(d.assignment_probability(), 0.5);
}

TEST(TrialData, InterleavedRowsKeepFirstAppearanceOrder) {
  const auto p = write_file("interleave.csv", "cid,arm,y,x\nb,0,1,0\na,1,2,0\nb,0,3,0\na,1,4,0\n");
  const auto d = load_csv(p, schema_xyz(), 0.5);
  ASSERT_EQ(d.num_clusters(), 2u);
  EXPECT_EQ(d.cluster(0).id, "b");
  EXPECT_EQ(d.cluster(0).outcomes(1), 3.0);
  EXPECT_EQ(d.cluster(1).outcomes(0), 2.0);
}

TEST(TrialData, InconsistentTreatmentIsDataError) {
  const auto p = write_file("incons.csv", "cid,arm,y,x\nc1,1,1,0\nc1,0,2,0\nc2,0,2,0\n");
  EXPECT_THROW(load_csv(p, schema_xyz(), 0.5), DataError);
}

TEST(TrialData, TreatmentOutsideBinaryIsDataError) {
  const auto p = write_file("arm2.csv", "cid,arm,y,x\nc1,2,1,0\nc2,0,2,0\n");
  EXPECT_THROW(load_csv(p, schema_xyz(), 0.5), DataError);
}

TEST(TrialData, MissingColumnIsSchemaError) {
  const auto p = write_file("nocol.csv", "cid,arm,y\nc1,1,1\nc2,0,2\n");
  EXPECT_THROW(load_csv(p, schema_xyz(), 0.5), SchemaError);
}

TEST(TrialData, NonNumericCellReportsRow) {
  const auto p = write_file("nan.csv", "cid,arm,y,x\nc1,1,1,0\nc2,0,abc,0\n");
  try {
    load_csv(p, schema_xyz(), 0.5);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
  const auto empty = write_file("empty_cell.csv", "cid,arm,y,x\nc1,1,1,\nc2,0,1,0\n");
  EXPECT_THROW(load_csv(empty, schema_xyz(), 0.5), ParseError);
}

TEST(TrialData, MissingFileIsIoError) {
  EXPECT_THROW(load_csv("/nonexistent/file.csv", schema_xyz(), 0.5), IoError);
}

TEST(TrialData, SingleArmFileIsRejected) {
  const auto p = write_file("onearm.csv", "cid,arm,y,x\nc1,1,1,0\nc2,1,2,0\n");
  EXPECT_THROW(load_csv(p, schema_xyz(), 0.5), ArmMissingError);
}

TEST(TrialData, InvalidPiIsDataError) {
  auto d = fixtures::random_dataset(1, 4, 1);
  EXPECT_THROW(TrialDataset(d.clusters(), 1.0, d.covariate_names()), DataError);
  EXPECT_THROW(TrialDataset(d.clusters(), 0.0, d.covariate_names()), DataError);
}

TEST(TrialData, ShapeMismatchIsDataError) {
  auto c = fixtures::make_cluster("a", 1, Eigen::MatrixXd::Zero(3, 1), Eigen::VectorXd::Zero(2));
  auto c0 = fixtures::make_cluster("b", 0, Eigen::MatrixXd::Zero(2, 1), Eigen::VectorXd::Zero(2));
  EXPECT_THROW(TrialDataset({c, c0}, 0.5, {"x"}), DataError);
}

TEST(TrialData, SummariesMatchPerRowAccumulation) {
  const auto d = fixtures::random_dataset(7, 3, 2);
  const auto s = cluster_summaries(d);
  ASSERT_EQ(s.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    double sum = 0.0;
    const auto& y = d.cluster(i).outcomes;
    for (Eigen::Index j = 0; j < y.size(); ++j) sum += y(j);
    EXPECT_EQ(s[i].sum_outcome, sum);
    EXPECT_EQ(s[i].size, static_cast<std::size_t>(y.size()));
    EXPECT_NEAR(s[i].mean_outcome * static_cast<double>(s[i].size), s[i].sum_outcome, 1e-12);
  }
}

TEST(TrialData, SummaryArithmetic) {
  Eigen::VectorXd y(2);
  y << 1, 3;
  const auto s = summarize_cluster(fixtures::make_cluster("a", 1, Eigen::MatrixXd::Zero(2, 0), y));
  EXPECT_EQ(s.mean_outcome, 2.0);
  EXPECT_EQ(s.sum_outcome, 4.0);
  Eigen::VectorXd one(1);
  one << 5;
  const auto s1 = summarize_cluster(fixtures::make_cluster("b", 0, Eigen::MatrixXd::Zero(1, 0), one));
  EXPECT_EQ(s1.mean_outcome, 5.0);
  EXPECT_EQ(s1.sum_outcome, 5.0);
}

TEST(TrialData, CsvRoundTripIsExact) {
  const auto d = fixtures::random_dataset(11, 9, 3, 1, 12);
  const auto p = std::filesystem::temp_directory_path() / "crtbayes_roundtrip.csv";
  write_csv(d, p);
  const auto r = load_csv(p, default_schema(d), d.assignment_probability());
  ASSERT_EQ(r.num_clusters(), d.num_clusters());
  std::size_t rows = 0;
  for (std::size_t i = 0; i < d.num_clusters(); ++i) {
    EXPECT_EQ(r.cluster(i).id, d.cluster(i).id);
    EXPECT_EQ(r.cluster(i).treatment, d.cluster(i).treatment);
    EXPECT_TRUE(r.cluster(i).outcomes == d.cluster(i).outcomes);
    EXPECT_TRUE(r.cluster(i).covariates == d.cluster(i).covariates);
    rows += r.cluster(i).size();
  }
  EXPECT_EQ(rows, d.num_individuals());
}

TEST(TrialData, QuotedFieldsAndSemicolonDelimiter) {
  const auto p = write_file("semi.csv", "cid;arm;y\n\"c;1\";1;1.5\nc2;0;2\n");
  const auto d = load_csv(p, {"cid", "arm", "y", {}, ';'}, 0.5);
  ASSERT_EQ(d.num_clusters(), 2u);
  EXPECT_EQ(d.cluster(0).id, "c;1");
}
