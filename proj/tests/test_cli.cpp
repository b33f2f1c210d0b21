#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "t2lc/cli.hpp"
#include "t2lc/report.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "t2lc");
  std::ostringstream out, err;
  const int code = t2lc::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("t2lc_cli_" + std::to_string(::getpid()) + "_" + name);
}

// Strips the '#' header block.
std::string body(const std::string& text) {
  std::istringstream is(text);
  std::string line, rest;
  while (std::getline(is, line)) {
    if (!line.empty() && line.front() == '#') continue;
    rest += line + "\n";
  }
  return rest;
}

std::string header_value(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("# " + key + ": ", 0) == 0) return line.substr(key.size() + 4);
  }
  return {};
}

class SeedEnv : public ::testing::Test {
 protected:
  void SetUp() override { ::unsetenv("T2LC_SEED"); }
  void TearDown() override { ::unsetenv("T2LC_SEED"); }
};

}  // namespace

TEST_F(SeedEnv, NoArgumentsIsUsageError) {
  const Result r = call({});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Subcommands"), std::string::npos);
}

TEST_F(SeedEnv, HelpExitsZero) {
  EXPECT_EQ(call({"--help"}).code, 0);
  for (const char* sub : {"gradcheck", "verify", "paramcount", "simulate", "train", "compare"}) {
    const Result r = call({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("Usage"), std::string::npos) << sub;
  }
}

TEST_F(SeedEnv, VersionFlag) {
  const Result r = call({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "0.1.0\n");
}

TEST_F(SeedEnv, UsageErrors) {
  EXPECT_EQ(call({"verify", "--suite", "bogus"}).code, 2);
  EXPECT_EQ(call({"nonsense"}).code, 2);
  EXPECT_EQ(call({"paramcount", "--arch", "resnet"}).code, 2);
  EXPECT_EQ(call({"gradcheck", "--op", "nope"}).code, 2);
  EXPECT_EQ(call({"simulate", "--groups", "5", "--n", "16"}).code, 2);
  EXPECT_EQ(call({"verify", "--format", "xml"}).code, 2);
}

TEST_F(SeedEnv, VerifyAlgebraPasses) {
  const Result r = call({"verify", "--suite", "algebra", "--seed", "7"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(header_value(r.out, "seed"), "7");
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST_F(SeedEnv, GradcheckSingleOp) {
  const Result r = call({"gradcheck", "--op", "two_level", "--seed", "2"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("two_level"), std::string::npos);
}

TEST_F(SeedEnv, ParamcountWideResNet) {
  const Result r = call({"paramcount", "--arch", "wideresnet-28-10", "--variant", "sc"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("total parameters: 36.48M"), std::string::npos) << r.out;
}

TEST_F(SeedEnv, ParamcountCsvRoundTrip) {
  const fs::path path = temp_file("params.csv");
  const Result r = call({"paramcount", "--arch", "wideresnet-16-4", "--variant", "gc2l", "--groups",
                         "4", "--format", "csv", "--out", path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(path);
  const auto rows = t2lc::report::read_paramcount_csv(in);
  ASSERT_FALSE(rows.empty());
  std::uint64_t sum = 0;
  for (const auto& row : rows) sum += row.total;
  const Result direct = call({"paramcount", "--arch", "wideresnet-16-4", "--variant", "gc2l",
                              "--groups", "4", "--format", "csv"});
  std::istringstream stdout_csv(direct.out);
  const auto again = t2lc::report::read_paramcount_csv(stdout_csv);
  ASSERT_EQ(again.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(again[i].layer, rows[i].layer);
    EXPECT_EQ(again[i].total, rows[i].total);
    EXPECT_EQ(again[i].per_processor, rows[i].per_processor);
  }
  EXPECT_GT(sum, 0u);
  fs::remove(path);
}

TEST_F(SeedEnv, SimulateSendsNoParameters) {
  const Result r = call({"simulate", "--n", "16", "--m", "24", "--groups", "4", "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("messages,12"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("parameter_scalars,0"), std::string::npos);
}

TEST_F(SeedEnv, EnvironmentSeed) {
  ::setenv("T2LC_SEED", "42", 1);
  EXPECT_EQ(header_value(call({"verify", "--suite", "algebra"}).out, "seed"), "42");
  EXPECT_EQ(header_value(call({"verify", "--suite", "algebra", "--seed", "5"}).out, "seed"), "5");
  ::setenv("T2LC_SEED", "abc", 1);
  EXPECT_EQ(call({"verify", "--suite", "algebra"}).code, 2);
}

TEST_F(SeedEnv, ConfigFileAndPrecedence) {
  const fs::path cfg = temp_file("run.cfg");
  {
    std::ofstream os(cfg);
    os << "# toy run\nepochs = 1\nlr = 0.002\nvariant = gc\nseed = 9\n";
  }
  const Result r = call({"train", "--config", cfg.string(), "--lr", "0.001", "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string config = header_value(r.out, "config");
  EXPECT_NE(config.find("epochs=1"), std::string::npos) << config;
  EXPECT_NE(config.find("lr=0.001"), std::string::npos) << config;
  EXPECT_NE(config.find("variant=gc "), std::string::npos) << config;
  EXPECT_EQ(header_value(r.out, "seed"), "9");
  std::istringstream csv(body(r.out));
  const auto history = t2lc::report::read_history_csv(csv);
  ASSERT_EQ(history.size(), 1u);
  EXPECT_DOUBLE_EQ(history[0].lr, 0.001);

  {
    std::ofstream os(cfg);
    os << "learning_rate = 0.1\n";
  }
  EXPECT_EQ(call({"train", "--config", cfg.string()}).code, 2);
  EXPECT_EQ(call({"train", "--config", temp_file("missing.cfg").string()}).code, 2);
  fs::remove(cfg);
}

TEST_F(SeedEnv, TrainIsDeterministic) {
  const Result a = call({"train", "--epochs", "1", "--format", "csv", "--seed", "3"});
  const Result b = call({"train", "--epochs", "1", "--format", "csv", "--seed", "3"});
  ASSERT_EQ(a.code, 0);
  std::istringstream sa(body(a.out)), sb(body(b.out));
  const auto ha = t2lc::report::read_history_csv(sa);
  const auto hb = t2lc::report::read_history_csv(sb);
  ASSERT_EQ(ha.size(), 1u);
  EXPECT_EQ(ha[0].train_loss, hb[0].train_loss);
}

TEST_F(SeedEnv, CompareWritesRowsAndSummary) {
  const fs::path rows = temp_file("cmp.csv");
  const fs::path summary = temp_file("sum.csv");
  const Result r = call({"compare", "--epochs", "1", "--groups", "2", "--seeds", "1,2,3", "--variants",
                         "gc,gc2l", "--out", rows.string(), "--summary-out", summary.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(rows);
  const auto parsed = t2lc::report::read_compare_csv(in);
  EXPECT_EQ(parsed.size(), 6u);
  for (const auto& row : parsed) EXPECT_EQ(row.status, "ok");
  std::ifstream s(summary);
  std::string header;
  std::getline(s, header);
  EXPECT_EQ(header, "variant,groups,runs,mean_train_loss,mean_test_accuracy");
  fs::remove(rows);
  fs::remove(summary);
}
