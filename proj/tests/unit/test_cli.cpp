#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "bistnet/image_io.hpp"
#include "helpers.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(BISTNET_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bistnet::Tensor frame(double shift) {
  std::vector<double> v;
  for (std::size_t r = 0; r < 12; ++r)
    for (std::size_t c = 0; c < 16; ++c) v.insert(v.end(), {c / 16.0, 0.5 + 0.3 * std::sin(r * 0.5 + shift), 0.4});
  return bistnet::Tensor::from_values({12, 16, 3}, v);
}

fs::path make_clip(const std::string& name) {
  const auto dir = testutil::scratch_dir(name);
  fs::create_directories(dir / "frames");
  for (int t = 0; t < 5; ++t) bistnet::io::write_png(dir / "frames" / ("0" + std::to_string(t) + ".png"), frame(t));
  bistnet::io::write_png(dir / "ref0.png", frame(0));
  bistnet::io::write_png(dir / "ref1.png", frame(4));
  std::ofstream(dir / "small.cfg") << "msrb.base_channels = 8\nmsrb.unet_depth = 2\nc_seg = 3\n";
  return dir;
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("paint"), 2);
  EXPECT_EQ(run("colorize --frames x"), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, BadConfigExitsTwo) {
  const auto dir = make_clip("cli_badcfg");
  std::ofstream(dir / "bad.cfg") << "colourfulness = 11\n";
  EXPECT_EQ(run("colorize --frames " + (dir / "frames").string() + " --ref-first " + (dir / "ref0.png").string() +
                " --out " + (dir / "out").string() + " --config " + (dir / "bad.cfg").string()),
            2);
}

TEST(Cli, MissingInputExitsOne) {
  const auto dir = testutil::scratch_dir("cli_missing");
  EXPECT_EQ(run("colorize --frames " + (dir / "nothing").string() + " --ref-first " + (dir / "r.png").string() +
                " --out " + (dir / "out").string()),
            1);
}

TEST(Cli, ColorizeThenEvaluate) {
  const auto dir = make_clip("cli_run");
  const std::string common = " --frames " + (dir / "frames").string() + " --ref-first " +
                             (dir / "ref0.png").string() + " --config " + (dir / "small.cfg").string();
  ASSERT_EQ(run("colorize" + common + " --ref-last " + (dir / "ref1.png").string() + " --out " +
                (dir / "out").string()),
            0);
  for (int t = 0; t < 5; ++t) EXPECT_TRUE(fs::exists(dir / "out" / ("0" + std::to_string(t) + ".png")));
  ASSERT_EQ(run("colorize" + common + " --out " + (dir / "single").string()), 0);

  ASSERT_EQ(run("eval --pred " + (dir / "out").string() + " --gt " + (dir / "frames").string() + " --report " +
                (dir / "report.json").string()),
            0);
  std::ifstream in(dir / "report.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["frame_count"], 5);
  EXPECT_TRUE(j.contains("ssim_mean"));
  EXPECT_TRUE(j["cdc"].is_number());
}

TEST(Cli, TrainWritesCheckpoint) {
  const auto dir = testutil::scratch_dir("cli_train");
  fs::create_directories(dir / "data" / "gt");
  for (int t = 0; t < 3; ++t) bistnet::io::write_png(dir / "data" / "gt" / ("0" + std::to_string(t) + ".png"), frame(t));
  std::ofstream(dir / "t.cfg") << "msrb.base_channels = 8\nmsrb.unet_depth = 2\nc_seg = 3\nepochs = 1\n";
  ASSERT_EQ(run("train --data " + (dir / "data").string() + " --out " + (dir / "out").string() + " --config " +
                (dir / "t.cfg").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "out" / "loss.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "checkpoint" / "config.txt"));
}
