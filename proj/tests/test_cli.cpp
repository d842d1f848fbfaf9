#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "test_support.hpp"

namespace malkit {
namespace {

using testing::TempDir;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "malkit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class CliTest : public ::testing::Test {
 protected:
  TempDir dir{"cli"};
  std::string data;

  void SetUp() override {
    data = dir.file("synth.csv");
    const auto r = run_cli({"synth", "--families", "3", "--per-family", "40", "--features", "20", "--out", data});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  std::string trained_model() {
    const auto path = dir.file("model.json");
    const auto r = run_cli({"train", "--data", data, "--rounds", "10", "--out", path});
    EXPECT_EQ(r.code, 0) << r.err;
    return path;
  }
};

TEST_F(CliTest, ExtractPrintsSystemPermissions) {
  const auto xml = dir.write("m.xml", R"(<manifest xmlns:android="http://schemas.android.com/apk/res/android">
  <uses-permission android:name="android.permission.SEND_SMS"/>
  <uses-permission android:name="com.vendor.CUSTOM"/>
</manifest>)");
  const auto r = run_cli({"extract", xml});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, xml + ",android.permission.SEND_SMS\n");
}

TEST_F(CliTest, BuildVocabAndEncode) {
  const auto list = dir.write("a.txt", "android.permission.B\nandroid.permission.A\ncom.x.C\n");
  const auto vocab = dir.file("vocab.txt");
  ASSERT_EQ(run_cli({"build-vocab", "--input", list, "--out", vocab}).code, 0);
  EXPECT_EQ(slurp(vocab), "android.permission.A\nandroid.permission.B\n");

  const auto query = dir.write("q.txt", "android.permission.B\nandroid.permission.UNKNOWN\n");
  const auto r = run_cli({"encode", "--vocab", vocab, "--input", query});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, query + ",01,1\n");
}

TEST_F(CliTest, TrainIsDeterministic) {
  const auto a = trained_model();
  const auto first = slurp(a);
  const auto b = dir.file("again.json");
  ASSERT_EQ(run_cli({"train", "--data", data, "--rounds", "10", "--out", b}).code, 0);
  EXPECT_EQ(first, slurp(b));
  const auto j = nlohmann::json::parse(first);
  EXPECT_TRUE(j.contains("provenance"));
  EXPECT_EQ(j["provenance"]["model_hash"], model_hash(model_from_json(j)));
}

TEST_F(CliTest, CalibrateWithZeroFprUsesTheLowestMaxLogit) {
  const auto model = trained_model();
  // First 100 rows of the corpus form the calibration set.
  std::istringstream all(slurp(data));
  std::string line, head;
  for (int i = 0; i <= 100 && std::getline(all, line); ++i) head += line + "\n";
  const auto tt = dir.write("tt.csv", head);

  const auto r = run_cli({"calibrate", "--model", model, "--data", tt, "--fpr", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto k = classifier_from_json(read_json_file(model));
  const auto d = load_dataset(tt, DatasetFormat::Csv);
  ASSERT_EQ(d.size(), 100u);
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& s : d.samples()) lowest = std::min(lowest, max_logit(decision_values(k.model(), s.vector)));
  EXPECT_EQ(k.threshold().tau, lowest);
  EXPECT_EQ(k.threshold().calibration_size, 100u);
}

TEST_F(CliTest, PredictReturnsTrueFamilyForTrainingSamples) {
  const auto model = trained_model();
  ASSERT_EQ(run_cli({"calibrate", "--model", model, "--data", data, "--fpr", "0"}).code, 0);
  const auto r = run_cli({"predict", "--model", model, "--input", data});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(r.out), 120u);
  std::istringstream rows(r.out);
  std::string row;
  while (std::getline(rows, row)) {
    const auto id = row.substr(0, row.find(','));
    const auto label = row.substr(row.find(',') + 1, row.rfind(',') - row.find(',') - 1);
    EXPECT_EQ(label, id.substr(0, id.find('-'))) << row;
  }
}

TEST_F(CliTest, PredictNeedsACalibratedModel) {
  const auto model = trained_model();
  const auto r = run_cli({"predict", "--model", model, "--input", data});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("calibrate"), std::string::npos);
}

TEST_F(CliTest, EvaluateIsByteIdenticalAcrossRuns) {
  const auto a = dir.file("eval-a");
  const auto b = dir.file("eval-b");
  for (const auto& out : {a, b}) {
    const auto r = run_cli({"evaluate", "--data", data, "--mode", "loco", "--k", "3", "--rounds", "5", "--fpr",
                            "0.05", "--out-dir", out});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(slurp(a + "/metrics.json"), slurp(b + "/metrics.json"));
  EXPECT_EQ(slurp(a + "/roc_family00.csv"), slurp(b + "/roc_family00.csv"));
  const auto j = nlohmann::json::parse(slurp(a + "/metrics.json"));
  EXPECT_TRUE(j.contains("calibration_note"));
}

TEST_F(CliTest, BaselineOsnnWritesReport) {
  const auto out = dir.file("osnn");
  const auto r = run_cli({"baseline-osnn", "--data", data, "--mode", "loco", "--k", "3", "--fpr", "0.05", "--out-dir", out});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GT(lines(slurp(out + "/roc_family01.csv")), 2u);
}

TEST_F(CliTest, Errors) {
  EXPECT_NE(run_cli({"train", "--bogus"}).code, 0);
  EXPECT_NE(run_cli({"train", "--data", dir.file("missing.csv"), "--out", dir.file("m.json")}).code, 0);
  EXPECT_NE(run_cli({}).code, 0);

  auto j = read_json_file(trained_model());
  j["schema_version"] = 7;
  write_json_file(j, dir.file("future.json"));
  const auto r = run_cli({"calibrate", "--model", dir.file("future.json"), "--data", data});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("schema"), std::string::npos);
}

TEST_F(CliTest, VersionFlag) {
  const auto r = run_cli({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find(kToolVersion), std::string::npos);
}

}  // namespace
}  // namespace malkit
