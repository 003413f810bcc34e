#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "causal_drf/io.hpp"
#include "fixtures.hpp"

using namespace causal_drf;
using io::json;

namespace {

io::DataSchema toy_schema(bool standardize = false) {
  io::DataSchema s;
  s.covariate_columns = {"x1", "x2"};
  s.treatment_column = "w";
  s.outcome_columns = {"y"};
  s.standardize_outcomes = standardize;
  return s;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("causal_drf_test_" + name)).string();
}

ForestConfig tiny_config() {
  ForestConfig c;
  c.num_trees = 4;
  c.num_groups = 2;
  c.min_leaf_per_arm = 3;
  return c;
}

}  // namespace

TEST(ReadCsv, ToyFile) {
  std::istringstream in("x1,w,x2,y\n0.1,1,0.2,3.5\n0.3,0,0.4,-1\n0.5,1,0.6,2\n");
  const auto loaded = io::read_csv(in, toy_schema());
  ASSERT_EQ(loaded.data.size(), 3);
  EXPECT_EQ(loaded.data.X(1, 1), 0.4);
  EXPECT_EQ(loaded.data.Y(0, 0), 3.5);
  EXPECT_EQ(loaded.data.W, (std::vector<std::uint8_t>{1, 0, 1}));
  EXPECT_FALSE(loaded.standardization.has_value());
}

TEST(ReadCsv, NonBinaryTreatmentReportsRow) {
  std::istringstream in("x1,x2,w,y\n0.1,0.2,1,3\n0.1,0.2,2,3\n");
  try {
    io::read_csv(in, toy_schema());
    FAIL() << "expected NonBinaryTreatment";
  } catch (const NonBinaryTreatment& e) {
    EXPECT_EQ(e.row, 2u);
  }
}

TEST(ReadCsv, MissingColumn) {
  std::istringstream in("x1,w,y\n0.1,1,3\n");
  try {
    io::read_csv(in, toy_schema());
    FAIL() << "expected MissingColumn";
  } catch (const MissingColumn& e) {
    EXPECT_EQ(e.column, "x2");
  }
}

TEST(ReadCsv, ParseErrorReportsRowAndColumn) {
  std::istringstream in("x1,x2,w,y\n0.1,0.2,1,3\n0.1,0.2,0,4\n0.1,abc,1,3\n");
  try {
    io::read_csv(in, toy_schema());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row, 3u);
    EXPECT_EQ(e.column, "x2");
  }
  std::istringstream ragged("x1,x2,w,y\n0.1,0.2,1\n");
  EXPECT_THROW(io::read_csv(ragged, toy_schema()), ParseError);
  std::istringstream nan("x1,x2,w,y\n0.1,nan,1,2\n");
  EXPECT_THROW(io::read_csv(nan, toy_schema()), ParseError);
}

TEST(ReadCsv, StandardizationMoments) {
  Rng rng(1);
  std::normal_distribution<double> z(5.0, 3.0);
  std::ostringstream csv;
  csv << "x1,x2,w,y\n";
  for (int i = 0; i < 500; ++i) csv << io::format_double(z(rng)) << ",0.5," << (i % 2) << ',' << io::format_double(z(rng)) << '\n';
  std::istringstream in(csv.str());
  const auto loaded = io::read_csv(in, toy_schema(true));
  const auto y = loaded.data.Y.col(0);
  const double mean = y.mean();
  const double sd = std::sqrt((y.array() - mean).square().sum() / (y.size() - 1));
  EXPECT_NEAR(mean, 0.0, 1e-10);
  EXPECT_NEAR(sd, 1.0, 1e-10);
  ASSERT_TRUE(loaded.standardization.has_value());
  // The inverse transform recovers the raw value of row 0.
  std::istringstream again(csv.str());
  const auto raw = io::read_csv(again, toy_schema());
  EXPECT_NEAR(loaded.standardization->inverse(0, y[0]), raw.data.Y(0, 0), 1e-12);
}

TEST(ReadCsv, SeventeenDigitsAreLossless) {
  Rng rng(2);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  std::ostringstream csv;
  csv << "x1,x2,w,y\n";
  std::vector<double> values;
  char buf[128];
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), b = u(rng) * 1e-9, c = u(rng);
    values.insert(values.end(), {a, b, c});
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d,%.17g\n", a, b, i % 2, c);
    csv << buf;
  }
  std::istringstream in(csv.str());
  const auto loaded = io::read_csv(in, toy_schema());
  for (int i = 0; i < 200; ++i) {
    EXPECT_EQ(loaded.data.X(i, 0), values[3 * i]);
    EXPECT_EQ(loaded.data.X(i, 1), values[3 * i + 1]);
    EXPECT_EQ(loaded.data.Y(i, 0), values[3 * i + 2]);
  }
}

TEST(Schema, FromJsonAndValidation) {
  const auto s = io::schema_from_json(json::parse(R"({"covariates":["a","b"],"treatment":"t","outcomes":["y"]})"));
  EXPECT_EQ(s.covariate_columns.size(), 2u);
  EXPECT_FALSE(s.standardize_outcomes);
  EXPECT_THROW(io::schema_from_json(json::parse(R"({"covariates":["a","t"],"treatment":"t","outcomes":["y"]})")),
               InvalidConfig);
  EXPECT_THROW(io::schema_from_json(json::parse(R"({"covariates":[],"treatment":"t","outcomes":["y"]})")),
               InvalidConfig);
}

TEST(Config, JsonRoundTripAndOverrides) {
  ForestConfig c;
  c.num_trees = 321;
  c.split_mode = SplitMode::PlainMmd;
  c.seed = 0xffffffffffffULL;
  c.plain_min_node_size = 7;
  const ForestConfig back = io::config_from_json(io::to_json(c));
  EXPECT_EQ(io::to_json(back), io::to_json(c));
  const ForestConfig partial = io::config_from_json(json::parse(R"({"num_groups": 10})"));
  EXPECT_EQ(partial.num_groups, 10);
  EXPECT_EQ(partial.num_trees, ForestConfig{}.num_trees);
  EXPECT_THROW(io::config_from_json(json::parse(R"({"trees": 10})")), InvalidConfig);
  EXPECT_THROW(io::config_from_json(json::parse(R"({"num_trees": "many"})")), InvalidConfig);
}

TEST(ModelFile, RoundTripIsBitExact) {
  Rng rng(3);
  const auto data = std::make_shared<const Dataset>(fixture::random_dataset(120, 3, 1, rng, 2.0));
  const auto model = fit(data, tiny_config());
  const std::string path = temp_path("roundtrip.json");
  io::save_model(path, model, {"a", "b", "c"}, {"y"});
  const io::ModelFile back = io::load_model(path);
  EXPECT_EQ(back.covariate_names, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(back.model.kernel().bandwidth, model.kernel().bandwidth);
  EXPECT_EQ(back.model.num_trees(), 4u);
  std::uniform_real_distribution<double> u(-0.1, 1.1);
  for (int q = 0; q < 100; ++q) {
    Eigen::VectorXd x(3);
    for (int j = 0; j < 3; ++j) x[j] = u(rng);
    const auto a = model.aggregate_weights(x);
    const auto b = back.model.aggregate_weights(x);
    EXPECT_EQ(a.aggregate, b.aggregate);
    for (std::size_t g = 0; g < a.groups.size(); ++g) EXPECT_EQ(a.groups[g], b.groups[g]);
  }
  // Saving the loaded model reproduces the file.
  const std::string again = temp_path("roundtrip2.json");
  io::save_model(again, back.model, back.covariate_names, back.outcome_names, back.standardization);
  std::ifstream f1(path), f2(again);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(s1, s2);
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST(ModelFile, TamperedContentIsCorrupt) {
  Rng rng(4);
  const auto model = fit(fixture::random_dataset(120, 2, 1, rng, 2.0), tiny_config());
  json doc = io::model_to_json(model);
  doc["model"]["data"]["Y"][0][0] = 123.0;
  EXPECT_THROW(io::model_from_json(doc), CorruptModel);
  json doc2 = io::model_to_json(model);
  doc2["content_hash"] = "0000000000000000";
  EXPECT_THROW(io::model_from_json(doc2), CorruptModel);
}

TEST(ModelFile, StructurallyBrokenIsCorrupt) {
  Rng rng(5);
  const auto model = fit(fixture::random_dataset(120, 2, 1, rng, 2.0), tiny_config());
  json doc = io::model_to_json(model);
  doc["model"]["groups"] = json::array();
  doc["content_hash"] = io::hex64(io::fnv1a(doc["model"].dump()));
  EXPECT_THROW(io::model_from_json(doc), CorruptModel);
  const std::string path = temp_path("garbage.json");
  std::ofstream(path) << "{not json";
  EXPECT_THROW(io::load_model(path), CorruptModel);
  std::filesystem::remove(path);
}

TEST(ModelFile, WrongSchemaTag) {
  Rng rng(6);
  const auto model = fit(fixture::random_dataset(120, 2, 1, rng, 2.0), tiny_config());
  json doc = io::model_to_json(model);
  doc["schema"] = "causal-drf-model/v0";
  EXPECT_THROW(io::model_from_json(doc), SchemaVersionMismatch);
  doc.erase("schema");
  EXPECT_THROW(io::model_from_json(doc), SchemaVersionMismatch);
}

TEST(ModelFile, ReloadedModelReproducesReplicationMae) {
  const auto regime = sim::Regime::Both;
  ForestConfig c = sim::desk_config();
  c.num_trees = 200;
  c.num_groups = 20;
  const auto seeds = sim::replication_seeds(11, 0);
  Rng data_rng(seeds.data);
  const auto data = std::make_shared<const Dataset>(sim::simulate_dataset(regime, 400, data_rng));
  c.seed = seeds.forest;
  const auto model = fit(data, c);
  const auto original = sim::evaluate_replication(model, regime, 0.05, seeds.truth);
  const std::string path = temp_path("replication.json");
  io::save_model(path, model);
  const auto reloaded = sim::evaluate_replication(io::load_model(path).model, regime, 0.05, seeds.truth);
  EXPECT_EQ(original.result.mae, reloaded.result.mae);
  EXPECT_EQ(original.result.covered, reloaded.result.covered);
  EXPECT_EQ(original.result.statistic, reloaded.result.statistic);
  std::filesystem::remove(path);
}

TEST(Writers, BandCsvLayout) {
  WitnessBand band;
  band.grid = linear_grid(0.0, 1.0, 3);
  band.estimate = Eigen::Vector3d(0.1, 0.2, 0.3);
  band.half_width = 0.5;
  band.lower = band.estimate.array() - 0.5;
  band.upper = band.estimate.array() + 0.5;
  TestResult t;
  t.statistic = 0.4;
  t.quantile = 0.25;
  std::ostringstream out;
  io::write_band_csv(out, band, t);
  std::istringstream lines(out.str());
  std::string header, columns, first;
  std::getline(lines, header);
  std::getline(lines, columns);
  std::getline(lines, first);
  ASSERT_EQ(header.rfind("# ", 0), 0u);
  const json meta = json::parse(header.substr(2));
  EXPECT_EQ(meta["q"], 0.25);
  EXPECT_EQ(meta["reject"], false);
  EXPECT_EQ(columns, "y_1,estimate,lower,upper");
  EXPECT_EQ(first, "0,0.1,-0.4,0.6");
}

TEST(Writers, BandCsvMapsGridToOriginalUnits) {
  WitnessBand band;
  band.grid = linear_grid(-1.0, 1.0, 2);
  band.estimate = band.lower = band.upper = Eigen::Vector2d(0.0, 0.0);
  io::Standardization s{{10.0}, {2.0}};
  std::ostringstream out;
  io::write_band_csv(out, band, TestResult{}, s);
  EXPECT_NE(out.str().find("\n8,0,0,0\n12,0,0,0\n"), std::string::npos);
}

TEST(Writers, StudyRow) {
  sim::StudyReport r;
  r.regime = sim::Regime::Both;
  r.n = 250;
  r.n_sims = 4;
  r.method = sim::Method::TwoDrf;
  r.mae_mean = 0.05;
  r.coverage_rate = 0.75;
  r.coverage_se = std::sqrt(0.75 * 0.25 / 4);
  r.rejection_rate = 1.0;
  std::ostringstream out;
  io::write_study_csv_header(out);
  io::write_study_csv_row(out, r);
  EXPECT_EQ(out.str(),
            "regime,n,method,n_sims,mae,coverage,coverage_se,rejection_rate\n"
            "4,250,two_drf,4,0.05,0.75,0.21650635094610965,1\n");
}

TEST(Writers, TestResultJson) {
  TestResult t;
  t.statistic = 2.0;
  t.quantile = 1.0;
  t.reject = true;
  t.resample_values = {0.5, 1.0};
  const json j = io::to_json(t);
  EXPECT_EQ(j["reject"], true);
  EXPECT_EQ(j["num_groups"], 2);
  EXPECT_EQ(j["q"], 1.0);
}
