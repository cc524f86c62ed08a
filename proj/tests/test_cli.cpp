#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lstmens/data.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(LSTMENS_CLI_PATH) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lstmens_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("synth --out " + path("x.csv")).code, 2);  // missing --t
  EXPECT_EQ(run("train --data /nonexistent.csv --out " + path("r")).code, 2);
}

TEST_F(Cli, SynthIsDeterministicAndImbalanced) {
  const std::string flags = "synth --d 6 --k 4 --t 20000 --regime imbalanced --seed 7 --out ";
  ASSERT_EQ(run(flags + path("a.csv")).code, 0);
  ASSERT_EQ(run(flags + path("b.csv")).code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_TRUE(fs::exists(path("a.csv.json")));
  const auto seq = lstmens::load_csv(path("a.csv")).sequence;
  EXPECT_EQ(seq.length(), 20000u);
  EXPECT_EQ(seq.dims(), 6u);
  EXPECT_GE(lstmens::class_distribution(seq).fractions[0], 0.5);
}

TEST_F(Cli, TrainFuseInferEval) {
  ASSERT_EQ(run("synth --t 2000 --seed 3 --out " + path("d.csv")).code, 0);
  const std::string train = "train --data " + path("d.csv") +
                            " --classwise --hidden 6 --max-epoch 3 --b-low 4 --b-high 8 --seed 5 --out ";
  const Result r1 = run(train + path("r1"));
  ASSERT_EQ(r1.code, 0);
  EXPECT_EQ(r1.out.rfind("# seed=5 cfg-hash=", 0), 0u);
  EXPECT_NE(r1.out.find("epoch,loss,train_loss,val_f1\n1,CE,"), std::string::npos);
  for (int e = 1; e <= 3; ++e) EXPECT_TRUE(fs::exists(path("r1/learner_e" + std::to_string(e) + "_ce.lstm")));
  EXPECT_FALSE(fs::exists(path("r1/learner_e4_ce.lstm")));

  ASSERT_EQ(run(train + path("r2")).code, 0);
  EXPECT_EQ(slurp(path("r1/manifest.csv")), slurp(path("r2/manifest.csv")));

  ASSERT_EQ(run(train + path("f1") + " --loss f1").code, 0);
  EXPECT_TRUE(fs::exists(path("f1/learner_e2_f1.lstm")));

  EXPECT_EQ(run("fuse --manifest " + path("r1/manifest.csv") + " --m 0 --out " + path("e.csv")).code, 2);
  EXPECT_EQ(run("fuse --manifest " + path("r1/manifest.csv") + " --m 4 --out " + path("e.csv")).code, 1);
  ASSERT_EQ(run("fuse --manifest " + path("r1/manifest.csv") + " --m 2 --out " + path("e.csv")).code, 0);
  ASSERT_EQ(run("fuse --mixed --m-each 1 --ce " + path("r1/manifest.csv") + " --f1 " +
                path("f1/manifest.csv") + " --out " + path("mixed.csv"))
                .code,
            0);
  EXPECT_NE(slurp(path("mixed.csv")).find(",F1,"), std::string::npos);

  const Result inf = run("infer --ensemble " + path("e.csv") + " --data " + path("d.csv") + " --run " +
                         path("r1") + " --out " + path("pred.csv"));
  ASSERT_EQ(inf.code, 0);
  const std::string pred = slurp(path("pred.csv"));
  EXPECT_EQ(pred.rfind("t,pred,label,p_0,p_1,p_2,p_3\n0,", 0), 0u);

  const Result ev = run("eval --pred " + path("pred.csv") + " --out-dir " + path("ev"));
  ASSERT_EQ(ev.code, 0);
  EXPECT_EQ(ev.out.rfind("mean_f1,", 0), 0u);
  EXPECT_TRUE(fs::exists(path("ev/confusion.csv")));
  EXPECT_TRUE(fs::exists(path("ev/per_class_f1.csv")));
}

TEST_F(Cli, TrainRejectsInconsistentConfig) {
  ASSERT_EQ(run("synth --t 300 --out " + path("d.csv")).code, 0);
  EXPECT_EQ(run("train --data " + path("d.csv") + " --b-low 9 --b-high 4 --out " + path("r")).code, 2);
  EXPECT_EQ(run("train --data " + path("d.csv") + " --loss mse --out " + path("r")).code, 2);
  // b_high larger than the training split is a runtime failure.
  EXPECT_EQ(run("train --data " + path("d.csv") + " --hidden 4 --max-epoch 1 --out " + path("r")).code, 1);
}

TEST_F(Cli, EvalOfPerfectPredictions) {
  std::ofstream(path("p.csv")) << "t,pred,label,p_0,p_1,p_2\n0,0,0,1,0,0\n1,2,2,0,0,1\n2,1,1,0,1,0\n";
  const Result r = run("eval --pred " + path("p.csv"));
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("mean_f1,1\n", 0), 0u);
}

TEST_F(Cli, GradcheckAndCoverage) {
  const Result g = run("gradcheck");
  EXPECT_EQ(g.code, 0);
  EXPECT_NE(g.out.find(" PASS"), std::string::npos);

  const Result c = run("coverage --t 100000 --epochs 200");
  ASSERT_EQ(c.code, 0);
  const auto line = c.out.substr(c.out.find("100000,200,"));
  std::istringstream ss(line);
  std::string t, e, mean;
  std::getline(ss, t, ',');
  std::getline(ss, e, ',');
  std::getline(ss, mean, ',');
  const double m = std::stod(mean);
  EXPECT_GE(m, 0.35);
  EXPECT_LE(m, 0.40);
}

TEST_F(Cli, TTestTextbookCase) {
  std::ofstream(path("a.csv")) << "trial,seed,mean_f1\n0,0,1\n1,1,2\n2,2,3\n3,3,4\n4,4,5\n";
  std::ofstream(path("b.csv")) << "trial,seed,mean_f1\n0,0,2\n1,1,3\n2,2,4\n3,3,5\n4,4,6\n";
  const Result r = run("ttest --a " + path("a.csv") + " --b " + path("b.csv"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("pair,t,p,stars\na-b,-1,0.3465"), std::string::npos);
}
