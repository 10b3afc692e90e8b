#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kgtn/kgtn.hpp"

namespace fs = std::filesystem;
using namespace kgtn;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "kgtn_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Runs the CLI with output captured to a log; returns the exit status.
int run(const std::string& args, std::string* output = nullptr) {
  const auto log = work_dir() / "last.log";
  const std::string cmd = "cd '" + work_dir().string() + "' && '" + KGTN_CLI_PATH + "' " + args + " > '" +
                          log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(log);
    std::ostringstream ss;
    ss << in.rdbuf();
    *output = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shared small dataset for the training commands.
const fs::path& synth_dir() {
  static const fs::path dir = [] {
    EXPECT_EQ(run("gen-synth --seed 7 --out data"), 0);
    return work_dir() / "data";
  }();
  return dir;
}

}  // namespace

TEST(Cli, GenSynthIsDeterministic) {
  ASSERT_EQ(run("gen-synth --seed 7 --out g1"), 0);
  ASSERT_EQ(run("gen-synth --seed 7 --out g2"), 0);
  for (const char* f : {"ratings_final.txt", "kg_final.txt"}) {
    const auto a = slurp(work_dir() / "g1" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(work_dir() / "g2" / f)) << f;
  }
  ASSERT_EQ(run("gen-synth --seed 8 --out g3"), 0);
  EXPECT_NE(slurp(work_dir() / "g1" / "ratings_final.txt"), slurp(work_dir() / "g3" / "ratings_final.txt"));
}

TEST(Cli, GenSynthDefaultsMatchFixtureSizes) {
  ASSERT_EQ(run("gen-synth --seed 7 --out g4"), 0);
  auto ds = load_dataset(work_dir() / "g4", {}, 7);
  EXPECT_EQ(ds.n_users, 40u);
  EXPECT_EQ(ds.n_items, 30u);
  EXPECT_EQ(ds.kg.n_entities(), 50u);
  EXPECT_EQ(ds.kg.n_relations(), 3u);
}

TEST(Cli, ZeroEpochCheckpointEqualsInitialization) {
  const auto data = synth_dir().string();
  ASSERT_EQ(run("train --epochs 0 --seed 3 --intents 4 --data-dir '" + data + "' --out t0"), 0);
  auto cfg = parse_config_text("", {{"seed", "3"}, {"intents", "4"}});
  auto ds = load_dataset(synth_dir(), cfg.split, cfg.seed);
  std::mt19937_64 rng(cfg.seed);
  const auto init = init_parameters(model_shape(cfg, ds), rng);
  const auto saved = load_checkpoint(work_dir() / "t0" / "checkpoint.kgtn", init);
  std::vector<double> a, b;
  init.for_each([&](const std::string&, const Tensor& t) { a.insert(a.end(), t.values().begin(), t.values().end()); });
  saved.for_each([&](const std::string&, const Tensor& t) { b.insert(b.end(), t.values().begin(), t.values().end()); });
  EXPECT_EQ(a, b);
}

TEST(Cli, TrainWritesProvenanceAndReproducibleLog) {
  const auto data = synth_dir().string();
  const std::string args = " --epochs 3 --batch 256 --intents 4 --seed 5 --data-dir '" + data + "'";
  ASSERT_EQ(run("train" + args + " --out r1"), 0);
  ASSERT_EQ(run("train" + args + " --out r2"), 0);
  const auto log = slurp(work_dir() / "r1" / "metrics.csv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 4);
  EXPECT_EQ(log, slurp(work_dir() / "r2" / "metrics.csv"));

  auto resolved = parse_config(work_dir() / "r1" / "resolved_config.ini");
  EXPECT_EQ(resolved.epochs, 3u);
  EXPECT_EQ(resolved.intents, 4u);
  EXPECT_EQ(resolved.seed, 5u);
  EXPECT_EQ(resolved.data_dir, data);
}

TEST(Cli, FlagsOverrideConfigFile) {
  std::ofstream(work_dir() / "exp.ini") << "[train]\nalpha = 0.5\nepochs = 0\n";
  const auto data = synth_dir().string();
  ASSERT_EQ(run("train --config exp.ini --alpha 0.01 --data-dir '" + data + "' --out ov"), 0);
  auto resolved = parse_config(work_dir() / "ov" / "resolved_config.ini");
  EXPECT_EQ(resolved.alpha, 0.01);
  EXPECT_EQ(resolved.epochs, 0u);
}

TEST(Cli, DataDirFromEnvironment) {
  const std::string env = "KGTN_DATA_DIR='" + synth_dir().string() + "' ";
  const std::string cmd = "cd '" + work_dir().string() + "' && " + env + "'" + KGTN_CLI_PATH +
                          "' train --epochs 0 --out envrun > /dev/null 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(work_dir() / "envrun" / "checkpoint.kgtn"));
}

TEST(Cli, EvaluateReadsCheckpoint) {
  const auto data = synth_dir().string();
  const std::string args = " --epochs 2 --batch 256 --intents 4 --data-dir '" + data + "' --out ev";
  ASSERT_EQ(run("train" + args), 0);
  std::string out;
  ASSERT_EQ(run("evaluate" + args, &out), 0) << out;
  EXPECT_NE(out.find("R@20"), std::string::npos) << out;
  EXPECT_TRUE(fs::exists(work_dir() / "ev" / "report.csv"));
}

TEST(Cli, CorruptCheckpointFailsWithDiagnostic) {
  const auto data = synth_dir().string();
  const std::string args = " --epochs 0 --intents 4 --data-dir '" + data + "' --out bad";
  ASSERT_EQ(run("train" + args), 0);
  auto ckpt = work_dir() / "bad" / "checkpoint.kgtn";
  auto bytes = slurp(ckpt);
  bytes[0] = 'Z';
  std::ofstream(ckpt, std::ios::binary) << bytes;
  std::string out;
  EXPECT_NE(run("evaluate" + args, &out), 0);
  EXPECT_NE(out.find("magic"), std::string::npos) << out;

  bytes[0] = 'K';
  bytes[8] = 7;  // version field
  std::ofstream(ckpt, std::ios::binary) << bytes;
  EXPECT_NE(run("evaluate" + args, &out), 0);
  EXPECT_NE(out.find("version"), std::string::npos) << out;
}

TEST(Cli, MissingInputsFail) {
  std::string out;
  EXPECT_NE(run("train --data-dir no_such_dir --out m1", &out), 0);
  EXPECT_NE(out.find("no_such_dir"), std::string::npos) << out;
  EXPECT_NE(run("train --out m2", &out), 0);
  EXPECT_NE(out.find("KGTN_DATA_DIR"), std::string::npos) << out;
  EXPECT_NE(run("train --config missing.ini --out m3"), 0);
}

TEST(Cli, InvalidConfigNamesKey) {
  std::string out;
  EXPECT_NE(run("grad-check --heads 5 --out h5", &out), 0);
  EXPECT_NE(out.find("heads"), std::string::npos) << out;
  EXPECT_NE(run("grad-check --tau -1 --out h5", &out), 0);
  EXPECT_NE(out.find("tau"), std::string::npos) << out;
  EXPECT_NE(run("frobnicate"), 0);
}

TEST(Cli, GradCheckPasses) {
  std::string out;
  EXPECT_EQ(run("grad-check --out gc", &out), 0) << out;
  EXPECT_NE(out.find("max relative error"), std::string::npos) << out;
  EXPECT_NE(out.find(": ok"), std::string::npos) << out;
}

TEST(Cli, AblateAndNoiseTestProduceReports) {
  const auto data = synth_dir().string();
  const std::string args =
      " --epochs 1 --batch 256 --intents 4 --emit-plot-data --data-dir '" + data + "'";
  std::string out;
  ASSERT_EQ(run("noise-test" + args + " --out nt", &out), 0) << out;
  EXPECT_NE(out.find("%drop"), std::string::npos) << out;
  const auto series = slurp(work_dir() / "nt" / "noise_drop.csv");
  EXPECT_EQ(std::count(series.begin(), series.end(), '\n'), 6);

  ASSERT_EQ(run("ablate" + args + " --out ab", &out), 0) << out;
  for (const char* label : {"full", "w/o S", "w/o C", "w/o I"}) EXPECT_NE(out.find(label), std::string::npos);
  EXPECT_TRUE(fs::exists(work_dir() / "ab" / "intents_sweep.csv"));
  EXPECT_TRUE(fs::exists(work_dir() / "ab" / "alpha_sweep.csv"));
}
