#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path& work() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "bct_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Result run(const std::string& args, const std::string& env = "NO_COLOR=1") {
  const fs::path out = work() / "stdout.txt", err = work() / "stderr.txt";
  const std::string cmd = env + " " + BCT_CLI_PATH + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

const std::string& data_root() {
  static const std::string root = [] {
    const auto r = (work() / "data").string();
    const Result res = run("synth --out " + r + " --per-class 8 --size 16");
    EXPECT_EQ(res.code, 0) << res.err;
    return r;
  }();
  return root;
}

std::string small_flags() { return " --data.root " + data_root() + " --data.height 16 --data.width 16 --train.max_epochs 2"; }

}  // namespace

TEST(Cli, HelpAndVersion) {
  EXPECT_EQ(run("--help").code, 0);
  const Result v = run("--version");
  EXPECT_EQ(v.code, 0);
  EXPECT_FALSE(v.out.empty());
  EXPECT_EQ(run("").code, 2);
}

TEST(Cli, UnknownOptionIsConfigError) {
  const Result r = run("train" + small_flags() + " --loss.gama 2");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("config error: unknown option --loss.gama (did you mean --loss.gamma?)"), std::string::npos)
      << r.err;
  EXPECT_EQ(r.err.find("\033["), std::string::npos);
  EXPECT_EQ(run("synth --out x --frobnicate").code, 2);
}

TEST(Cli, NoColorOnPipes) {
  const Result r = run("train --loss.kind hinge" + small_flags(), "");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.find("\033["), std::string::npos);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("train --data.root " + (work() / "missing").string()).code, 3);
  EXPECT_EQ(run("train" + small_flags() + " --train.batch_size 0").code, 2);
  EXPECT_EQ(run("inspect " + (work() / "nothing.bct1").string()).code, 3);
  EXPECT_EQ(run("synth --out " + (work() / "s").string() + " --noise 3").code, 2);
  // a huge learning rate drives the loss to a non-finite value
  const Result r = run("train" + small_flags() + " --loss.kind ce --optim.kind sgd --optim.lr 1e30");
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_NE(r.err.find("numeric error"), std::string::npos);
}

TEST(Cli, TrainEvaluatePlot) {
  const auto run_dir = (work() / "run").string();
  const Result t = run("train" + small_flags() + " --train.output_dir " + run_dir);
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("tp="), std::string::npos);
  EXPECT_TRUE(fs::exists(fs::path(run_dir) / "runlog.csv"));
  const auto cfg = work() / "eval.cfg";
  std::ofstream(cfg) << "data.root = " << data_root() << "\ndata.height = 16\ndata.width = 16\n";
  const auto jsonl = (work() / "eval.jsonl").string();
  const Result e = run("evaluate -c " + cfg.string() + " --checkpoint " + run_dir + "/final.bct1 --split test -o " +
                       jsonl);
  ASSERT_EQ(e.code, 0) << e.err;
  const std::string report = slurp(fs::path(run_dir) / "report.jsonl");
  const std::string line = slurp(jsonl);
  const auto counts = report.substr(report.find("\"test_counts\""));
  const auto inner = counts.substr(counts.find('{') + 1, counts.find('}') - counts.find('{') - 1);
  EXPECT_NE(line.find(inner), std::string::npos) << line << "\n" << inner;
  const Result p = run("plot " + run_dir + "/runlog.csv -o " + (work() / "plots").string());
  EXPECT_EQ(p.code, 0) << p.err;
  EXPECT_TRUE(fs::exists(work() / "plots" / "accuracy.svg"));
  const Result i = run("inspect " + data_root());
  EXPECT_EQ(i.code, 0);
  EXPECT_NE(i.out.find("16 images"), std::string::npos) << i.out;
}

TEST(Cli, RerunsAreByteIdentical) {
  for (const char* d : {"syn_a", "syn_b"}) {
    ASSERT_EQ(run("synth --out " + (work() / d).string() + " --per-class 4 --size 16 --seed 9").code, 0);
  }
  for (const char* f : {"synth.txt", "class0/00000.ppm", "class1/00003.ppm"}) {
    EXPECT_EQ(slurp(work() / "syn_a" / f), slurp(work() / "syn_b" / f)) << f;
  }
  for (const char* d : {"abl_a", "abl_b"}) {
    const Result r = run("ablate --suite loss --seeds 1 -o " + (work() / d).string() + small_flags());
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"ablation_loss.md", "ablation_loss.csv", "ablation_loss.jsonl", "focal_g2/seed_1/runlog.csv",
                        "ce/seed_1/final.bct1"}) {
    EXPECT_EQ(slurp(work() / "abl_a" / f), slurp(work() / "abl_b" / f)) << f;
  }
  for (const char* d : {"plot_a", "plot_b"}) {
    ASSERT_EQ(run("plot " + (work() / "abl_a" / "ce" / "seed_1" / "runlog.csv").string() + " " +
                  (work() / "abl_a" / "bce" / "seed_1" / "runlog.csv").string() + " -o " + (work() / d).string())
                  .code,
              0);
  }
  EXPECT_EQ(slurp(work() / "plot_a" / "loss.svg"), slurp(work() / "plot_b" / "loss.svg"));
  EXPECT_NE(slurp(work() / "plot_a" / "loss.svg").find("<polyline"), std::string::npos);
}
