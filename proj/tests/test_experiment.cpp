#include <aknn/experiment.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace {

using aknn::Command;
using aknn::Config;

Config configured(Command cmd, std::initializer_list<std::string> assignments) {
  auto c = aknn::default_config(cmd);
  for (const auto& a : assignments) c.apply_assignment(a);
  return c;
}

TEST(Config, ParseTextSkipsCommentsAndBlanks) {
  const auto kv = Config::parse_text("# header\n\n a = 1 \nb=x,y # trailing\n");
  EXPECT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "x,y");
  EXPECT_THROW(Config::parse_text("no equals sign"), aknn::ConfigError);
  EXPECT_THROW(Config::parse_text(" = 3"), aknn::ConfigError);
}

TEST(Config, TypedAccessAndRanges) {
  Config c({{"k", "1:9:4,20"}, {"r", "0.5, 2"}, {"f", "yes"}, {"bad", "1:0"}, {"s", "abc"}});
  EXPECT_EQ(c.integers("k"), (std::vector<std::uint64_t>{1, 5, 9, 20}));
  EXPECT_EQ(c.reals("r"), (std::vector<double>{0.5, 2.0}));
  EXPECT_TRUE(c.flag("f"));
  EXPECT_THROW(c.integers("bad"), aknn::ConfigError);
  EXPECT_THROW(c.real("s"), aknn::ConfigError);
  EXPECT_THROW(c.flag("s"), aknn::ConfigError);
  EXPECT_THROW(c.str("missing"), aknn::ConfigError);
  EXPECT_THROW(c.set("missing", "1"), aknn::ConfigError);
  EXPECT_THROW(c.apply_assignment("k"), aknn::ConfigError);
}

TEST(Config, HashIsStableAndIgnoresWorkers) {
  const auto a = aknn::default_config(Command::sweep_noise);
  auto b = a;
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 16u);
  b.set("workers", "8");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.canonical(), b.canonical());
  b.set("seed", "2");
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Config, EveryCommandHasDefaults) {
  for (auto name : {"sweep-noise", "sweep-k", "validate", "rates", "predict"}) {
    const auto c = aknn::default_config(aknn::parse_command(name));
    EXPECT_TRUE(c.has("seed")) << name;
    EXPECT_TRUE(c.has("workers")) << name;
  }
  EXPECT_THROW(aknn::parse_command("train"), aknn::ConfigError);
}

TEST(Config, DocumentedCalibration) {
  const auto v = aknn::default_config(Command::validate);
  EXPECT_EQ(v.real("c1"), aknn::kCalibratedC1);
  EXPECT_EQ(v.real("c_o"), aknn::kCalibratedCo);
}

TEST(RuleFromConfig, Variants) {
  auto c = configured(Command::predict, {"rule=practical", "A=0.7"});
  EXPECT_EQ(std::get<aknn::Practical>(aknn::rule_from_config(c)).A, 0.7);
  c.set("rule", "theory");
  EXPECT_TRUE(std::holds_alternative<aknn::TheoryDefault>(aknn::rule_from_config(c)));
  c.set("rule", "theory_vc");
  EXPECT_TRUE(std::holds_alternative<aknn::TheoryVC>(aknn::rule_from_config(c)));
  c.set("rule", "magic");
  EXPECT_THROW(aknn::rule_from_config(c), aknn::ConfigError);
}

Config small_sweep() {
  return configured(Command::sweep_noise,
                    {"n_train=400", "n_test=200", "noise=0,0.3", "k=1,5,11", "A=0,1"});
}

TEST(SweepNoise, RowLayoutAndDeterminism) {
  const auto c = small_sweep();
  const auto out = aknn::cmd_sweep_noise(c);
  const auto& t = out.table("sweep_noise");
  ASSERT_EQ(t.rows.size(), 2u * (3 + 2));
  EXPECT_EQ(t.cell(0, "method"), "aknn");
  EXPECT_EQ(t.cell(2, "method"), "knn");
  EXPECT_EQ(t.cell(0, "config_hash"), c.hash());
  for (std::size_t r = 0; r < t.rows.size(); ++r) EXPECT_EQ(t.cell(r, "n_queries"), "200");

  auto parallel = c;
  parallel.set("workers", "4");
  EXPECT_EQ(aknn::cmd_sweep_noise(parallel).table("sweep_noise").to_csv(), t.to_csv());
  auto other_seed = c;
  other_seed.set("seed", "9");
  EXPECT_NE(aknn::cmd_sweep_noise(other_seed).table("sweep_noise").to_csv(), t.to_csv());
  ASSERT_EQ(out.files.size(), 1u);
  EXPECT_NE(out.files[0].content.find("<svg"), std::string::npos);
}

TEST(SweepNoise, ZeroAMatchesOneNearestNeighbor) {
  const auto out = aknn::cmd_sweep_noise(small_sweep());
  const auto& t = out.table("sweep_noise");
  for (std::size_t base : {0u, 5u}) {
    ASSERT_EQ(t.cell(base, "param"), "0");
    ASSERT_EQ(t.cell(base + 2, "param"), "1");
    // Continuous draws have no ties, so A=0 stops at the nearest neighbor.
    EXPECT_EQ(t.cell(base, "accuracy"), t.cell(base + 2, "accuracy"));
    EXPECT_EQ(t.cell(base, "coverage"), "1");
    EXPECT_EQ(t.cell(base, "mean_k"), "1");
  }
}

TEST(SweepNoise, CleanStepIsEasy) {
  const auto out = aknn::cmd_sweep_noise(small_sweep());
  const auto& t = out.table("sweep_noise");
  for (std::size_t r = 0; r < 5; ++r) EXPECT_GT(t.number(r, "accuracy"), 0.95) << r;
}

TEST(SweepK, CoverageShapes) {
  const auto c = configured(Command::sweep_k, {"n_train=600", "n_test=300", "noise=0.2", "k=1,10",
                                                "caps=1,3,10,30,100,600", "A=0,1,2"});
  const auto out = aknn::cmd_sweep_k(c);
  const auto& t = out.table("sweep_k");
  ASSERT_EQ(t.rows.size(), 3u * 6 + 2);
  auto cov = [&](std::size_t a, std::size_t cap) { return t.number(a * 6 + cap, "coverage"); };
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t j = 1; j < 6; ++j) EXPECT_GE(cov(a, j), cov(a, j - 1)) << "A index " << a << " cap " << j;
  for (std::size_t j = 0; j < 6; ++j) {
    EXPECT_EQ(cov(0, j), 1.0);
    EXPECT_LE(cov(2, j), cov(1, j));
  }
  EXPECT_EQ(t.cell(18, "method"), "knn");
  EXPECT_EQ(t.cell(18, "A"), "NA");
  EXPECT_THROW(aknn::cmd_sweep_k(configured(Command::sweep_k, {"noise=0,0.1"})), aknn::ConfigError);
}

TEST(SweepNoise, InSampleUsesLeaveOneOut) {
  const auto c = configured(Command::sweep_noise,
                            {"n_train=300", "eval_mode=in_sample", "noise=0", "k=1", "A=1"});
  const auto out = aknn::cmd_sweep_noise(c);
  const auto& t = out.table("sweep_noise");
  EXPECT_EQ(t.cell(0, "n_queries"), "300");
  // Without leave-one-out, 1-NN would score exactly 1 on its own training set
  // and AKNN would always stop at the query itself.
  EXPECT_GT(t.number(1, "accuracy"), 0.9);
  EXPECT_GT(t.number(0, "mean_k"), 1.0);
}

TEST(SweepNoise, CsvDataSource) {
  const auto dir = std::filesystem::temp_directory_path() / "aknn_test_experiment";
  std::filesystem::create_directories(dir);
  const auto path = dir / "tiny.csv";
  {
    std::ofstream f(path);
    f << "x,label\n";
    for (int i = 0; i < 60; ++i) f << i << ',' << (i < 30 ? "left" : "right") << '\n';
  }
  const auto c = configured(Command::sweep_noise,
                            {"data=csv:" + path.string(), "noise=0", "k=1,3", "A=0.5", "test_fraction=0.25"});
  const auto out = aknn::cmd_sweep_noise(c);
  const auto& t = out.table("sweep_noise");
  EXPECT_EQ(t.cell(0, "bayes_agreement"), "NA");
  EXPECT_EQ(t.cell(0, "n_queries"), "15");
  EXPECT_GE(t.number(1, "accuracy"), 0.9);

  auto missing = c;
  missing.set("data", "csv:" + (dir / "absent.csv").string());
  EXPECT_THROW(aknn::cmd_sweep_noise(missing), aknn::DataError);
}

TEST(Rates, CleanStepConverges) {
  const auto c = configured(Command::rates, {"points=0.25,0.45", "n_values=8,64,512", "replicas=40", "risk_n=100,400",
                                              "risk_replicas=4", "risk_queries=200"});
  const auto out = aknn::cmd_rates(c);
  const auto& pw = out.table("rates_pointwise");
  ASSERT_EQ(pw.rows.size(), 6u);
  // Rows are x-major; the large-n error at x = 0.25 vanishes.
  EXPECT_EQ(pw.number(2, "error_rate"), 0.0);
  EXPECT_DOUBLE_EQ(pw.number(0, "advantage"), 0.5);
  EXPECT_NEAR(pw.number(3, "advantage"), 0.1, 1e-9);
  EXPECT_GE(pw.number(3, "error_rate"), pw.number(5, "error_rate"));
  const auto& rk = out.table("rates_risk");
  ASSERT_EQ(rk.rows.size(), 2u);
  EXPECT_EQ(rk.number(0, "bayes_risk"), 0.0);
  EXPECT_GE(rk.number(0, "risk"), rk.number(1, "risk"));
  EXPECT_EQ(out.files.size(), 2u);
}

TEST(Rates, ParallelMatchesSerial) {
  auto c = configured(Command::rates, {"dist=noisy_step:0.2", "n_values=16,128", "replicas=30", "risk_n=200",
                                        "risk_replicas=6", "risk_queries=100", "rule=practical"});
  const auto a = aknn::cmd_rates(c);
  c.set("workers", "3");
  const auto b = aknn::cmd_rates(c);
  EXPECT_EQ(a.table("rates_pointwise").to_csv(), b.table("rates_pointwise").to_csv());
  EXPECT_EQ(a.table("rates_risk").to_csv(), b.table("rates_risk").to_csv());
}

TEST(Rates, RejectsBadPoints) {
  EXPECT_THROW(aknn::cmd_rates(configured(Command::rates, {"points=1.5"})), aknn::ConfigError);
  EXPECT_THROW(aknn::cmd_rates(configured(Command::rates, {"replicas=0"})), aknn::ConfigError);
}

TEST(Validate, AllReportsAreWritten) {
  const auto c = configured(Command::validate, {"validator=all", "n=500", "trials=50", "m=8",
                                                 "counterexample_n=10,100"});
  const auto out = aknn::cmd_validate(c);
  std::vector<std::string> names;
  for (const auto& f : out.files) names.push_back(f.name);
  EXPECT_EQ(names, (std::vector<std::string>{"ucecm.json", "bias_lemma.json", "mass_lemma.json", "counterexample.svg"}));
  const auto j = nlohmann::json::parse(out.files[0].content);
  EXPECT_EQ(j["config_hash"], c.hash());
  EXPECT_EQ(j["trials"], 50);
  EXPECT_EQ(j["config"]["m"], 8);
  const auto& t = out.table("counterexample");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_LT(t.number(0, "median"), t.number(1, "median"));
  EXPECT_NE(out.console.find("bias_lemma: "), std::string::npos);
}

TEST(Validate, RejectsBadSettings) {
  EXPECT_THROW(aknn::cmd_validate(configured(Command::validate, {"validator=nope"})), aknn::ConfigError);
  EXPECT_THROW(aknn::cmd_validate(configured(Command::validate, {"m=3"})), std::invalid_argument);
  EXPECT_THROW(aknn::cmd_validate(configured(Command::validate, {"dist=triangle"})), aknn::DataError);
}

TEST(Predict, TraceStopsAtFirstSignificantGroup) {
  const auto c = configured(Command::predict, {"n_train=200", "query=0.1", "A=1"});
  const auto out = aknn::cmd_predict(c);
  const auto& t = out.table("predict_trace");
  ASSERT_FALSE(t.rows.empty());
  EXPECT_EQ(t.header.size(), 3u + 2 + 2 + 3);
  for (std::size_t r = 0; r + 1 < t.rows.size(); ++r) EXPECT_EQ(t.cell(r, "verdict"), "continue");
  EXPECT_EQ(t.cell(t.rows.size() - 1, "verdict"), "significant");
  const std::size_t last = t.rows.size() - 1;
  EXPECT_GT(t.number(last, "statistic"), t.number(last, "threshold"));
  EXPECT_NE(out.console.find("prediction: +1 (k=" + t.cell(last, "k") + ")"), std::string::npos);
}

TEST(Predict, AbstainsNearTheBoundary) {
  const auto out = aknn::cmd_predict(configured(Command::predict, {"n_train=50", "query=0.5", "A=3", "max_k=10"}));
  EXPECT_NE(out.console.find("prediction: ?"), std::string::npos);
  for (const auto& row : out.table("predict_trace").rows) EXPECT_EQ(row.back(), "continue");
}

TEST(Predict, QueryDimensionMustMatch) {
  EXPECT_THROW(aknn::cmd_predict(configured(Command::predict, {"query=0.1,0.2"})), aknn::ConfigError);
}

}  // namespace
