#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "kgtn/config.hpp"

using namespace kgtn;

namespace {

std::string message_of(const std::string& text, const std::map<std::string, std::string>& ov = {}) {
  try {
    parse_config_text(text, ov);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  auto c = parse_config_text("");
  EXPECT_EQ(c.dim, 64u);
  EXPECT_EQ(c.intents, 32u);
  EXPECT_EQ(c.heads, 4u);
  EXPECT_EQ(c.depth, 1u);
  EXPECT_EQ(c.agg_depth, 2u);
  EXPECT_EQ(c.k_top, 8u);
  EXPECT_EQ(c.tau, 0.2);
  EXPECT_EQ(c.alpha, 0.1);
  EXPECT_EQ(c.split.train, 0.6);
  EXPECT_EQ(c.split.eval, 0.2);
  EXPECT_EQ(c.split.test, 0.2);
  EXPECT_EQ(c.recall_k, (std::vector<std::size_t>{10, 20}));
  EXPECT_EQ(c.noise_ratios, (std::vector<double>{0.0, 0.05, 0.10, 0.15, 0.20}));
  EXPECT_TRUE(c.sampling_enabled());
  EXPECT_TRUE(c.contrast_enabled());
}

TEST(Config, SectionsCommentsAndWhitespace) {
  auto c = parse_config_text(
      "# experiment\n"
      "[model]\n"
      "  dim = 32   ; smaller\n"
      "heads=8\n"
      "\n"
      "[train]\n"
      "alpha = 0.05\n"
      "seed = 99\n"
      "[eval]\n"
      "recall_k = 5, 10 ,50\n");
  EXPECT_EQ(c.dim, 32u);
  EXPECT_EQ(c.heads, 8u);
  EXPECT_EQ(c.alpha, 0.05);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.recall_k, (std::vector<std::size_t>{5, 10, 50}));
}

TEST(Config, OverridesBeatFileValues) {
  auto c = parse_config_text("[train]\nalpha = 0.5\n", {{"alpha", "0.01"}});
  EXPECT_EQ(c.alpha, 0.01);
}

TEST(Config, InfiniteKeepsWholeGraph) {
  auto c = parse_config_text("[model]\nk_top = inf\n");
  EXPECT_EQ(c.k_top, kKeepAll);
  EXPECT_FALSE(c.sampling_enabled());
  EXPECT_EQ(get_config_value(c, "k_top"), "inf");
}

TEST(Config, ContrastNeedsPositiveAlphaAndFullModel) {
  auto c = parse_config_text("", {{"alpha", "0"}});
  EXPECT_FALSE(c.contrast_enabled());
  c = parse_config_text("", {{"model", "bprmf"}});
  EXPECT_FALSE(c.contrast_enabled());
}

TEST(Config, HeadsMustDivideDimension) {
  const auto msg = message_of("[model]\ndim = 64\nheads = 5\n");
  EXPECT_NE(msg.find("heads"), std::string::npos) << msg;
  EXPECT_NE(msg.find("64"), std::string::npos) << msg;
}

TEST(Config, InvalidValuesNameTheirKey) {
  for (const auto& [key, value] : std::vector<std::pair<std::string, std::string>>{
           {"tau", "0"},
           {"tau", "-1"},
           {"alpha", "-0.1"},
           {"lr", "0"},
           {"k_top", "0"},
           {"intents", "0"},
           {"depth", "4"},
           {"f1_threshold", "1"},
           {"noise_ratio", "0.9"},
           {"recall_k", "10,0"},
           {"model", "gcn"},
           {"split", ""}}) {
    if (key == "split") {
      const auto msg = message_of("[data]\nsplit_train = 0.7\n");
      EXPECT_NE(msg.find("split"), std::string::npos) << msg;
      continue;
    }
    const auto msg = message_of("", {{key, value}});
    EXPECT_EQ(msg.rfind(key, 0), 0u) << key << "=" << value << " -> " << msg;
  }
}

TEST(Config, MalformedNumbersRejected) {
  EXPECT_NE(message_of("", {{"dim", "sixty"}}).find("dim"), std::string::npos);
  EXPECT_NE(message_of("", {{"tau", "0.2x"}}).find("tau"), std::string::npos);
  EXPECT_NE(message_of("", {{"dim", "-3"}}).find("dim"), std::string::npos);
  EXPECT_NE(message_of("", {{"share_transformer_weights", "maybe"}}).find("share"), std::string::npos);
}

TEST(Config, UnknownKeysAndSectionsRejected) {
  EXPECT_NE(message_of("[model]\nwidth = 3\n").find("width"), std::string::npos);
  EXPECT_NE(message_of("", {{"width", "3"}}).find("width"), std::string::npos);
  EXPECT_NE(message_of("[optim]\n").find("optim"), std::string::npos);
  EXPECT_NE(message_of("[train]\ndim = 8\n").find("dim"), std::string::npos);
  EXPECT_NE(message_of("[model\n").find("line 1"), std::string::npos);
  EXPECT_NE(message_of("dim 8\n").find("line 1"), std::string::npos);
}

TEST(Config, SerializeRoundTrip) {
  auto c = parse_config_text("", {{"alpha", "0.013"},
                                  {"k_top", "inf"},
                                  {"tau", "0.1"},
                                  {"lr", "0.0003"},
                                  {"seed", "18446744073709551615"},
                                  {"recall_k", "1,7"},
                                  {"alpha_grid", "0.3"},
                                  {"data_dir", "/tmp/x y"},
                                  {"share_transformer_weights", "true"}});
  const auto text = serialize_config(c);
  auto back = parse_config_text(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.alpha, 0.013);
  EXPECT_EQ(back.seed, 18446744073709551615ull);
  EXPECT_EQ(back.data_dir, "/tmp/x y");
  EXPECT_TRUE(back.share_transformer_weights);
}

TEST(Config, ReadsFileAndReportsMissingFile) {
  auto path = std::filesystem::temp_directory_path() / "kgtn_config_test.ini";
  std::ofstream(path) << "[model]\nintents = 4\n";
  EXPECT_EQ(parse_config(path).intents, 4u);
  EXPECT_EQ(parse_config("").intents, 32u);
  std::filesystem::remove(path);
  EXPECT_THROW(parse_config(path), ConfigError);
}
