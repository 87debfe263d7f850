#include "test_util.hpp"

#include "splatprobe/cli.hpp"
#include "splatprobe/evaluate.hpp"
#include "splatprobe/io.hpp"

#include <gtest/gtest.h>
#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <sys/wait.h>

using namespace splatprobe;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "splatprobe");
  std::ostringstream out, err;
  Result r;
  r.code = run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

int shell_exit(const std::string& args) {
  const std::string cmd = std::string(SPLATPROBE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return out;
}

std::vector<std::string> synth_args(const fs::path& out) {
  return {"synth", "--out", out.string(), "--seed", "5", "--gaussians", "24", "--train", "2", "--test", "1",
          "--size", "16"};
}

}  // namespace

TEST(Cli, GradcheckPrintsMaxError) {
  const Result r = call({"gradcheck", "--seed", "7"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("max relative error"), std::string::npos);
  EXPECT_NE(r.out.find("pass"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  const Result bad_mode = call({"probe", "--scene", "x", "--out", "y", "--mode", "X"});
  EXPECT_EQ(bad_mode.code, kExitUsage);
  EXPECT_NE(bad_mode.err.find("Usage"), std::string::npos);
  EXPECT_NE(bad_mode.err.find("--mode"), std::string::npos);
  EXPECT_EQ(call({"synth", "--out", "z", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(call({"nothing"}).code, kExitUsage);
  EXPECT_EQ(call({}).code, kExitUsage);
  EXPECT_EQ(call({"--help"}).code, kExitOk);
}

TEST(Cli, MissingSceneIsDataError) {
  const fs::path none = testutil::temp_dir("cli_none") / "absent";
  const Result r = call({"probe", "--scene", none.string(), "--out", (none / "s").string()});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("absent"), std::string::npos);
}

TEST(Cli, SynthIsDeterministicAndWritesManifest) {
  const fs::path a = testutil::temp_dir("cli_synth_a"), b = testutil::temp_dir("cli_synth_b");
  ASSERT_EQ(call(synth_args(a)).code, kExitOk);
  ASSERT_EQ(call(synth_args(b)).code, kExitOk);
  EXPECT_EQ(dir_contents(a), dir_contents(b));
  const auto manifest = nlohmann::json::parse(read_file(a / "manifest.json"));
  EXPECT_EQ(manifest["command"], "synth");
  for (const auto& f : manifest["outputs"]) EXPECT_TRUE(fs::exists(a / f.get<std::string>())) << f;
}

TEST(Cli, EndToEndPipeline) {
  const fs::path root = testutil::temp_dir("cli_e2e");
  const fs::path scene = root / "scene", state = root / "state", ev = root / "eval", rep = root / "report";
  ASSERT_EQ(call(synth_args(scene)).code, kExitOk);
  Result r = call({"features", "--scene", scene.string(), "--name", "IUVRGB", "--iuvrgb"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(load_scene(scene).feature_files.count("IUVRGB"), 1u);

  r = call({"probe", "--scene", scene.string(), "--out", state.string(), "--features", "IUVRGB", "--warm-iters", "300",
            "--main-iters", "10", "--hidden", "16"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const TrainedState st = load_state(state);
  EXPECT_EQ(st.config.main_iters, 10);
  EXPECT_TRUE(fs::exists(state / "manifest.json"));

  r = call({"render", "--state", state.string(), "--scene", scene.string(), "--view", "test_000", "--out",
            (root / "render").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(root / "render")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 3u);
  EXPECT_EQ(call({"render", "--state", state.string(), "--scene", scene.string(), "--view", "nope", "--out",
                  (root / "render").string()})
                .code,
            kExitUsage);

  r = call({"eval", "--state", state.string(), "--scene", scene.string(), "--out", ev.string(), "--refine-iters", "3"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const std::string csv = read_file(ev / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "scene,feature,mode,view,psnr_db,ssim,lpips,mask_coverage");
  EXPECT_EQ(parse_report_csv(csv).size(), 1u);

  r = call({"report", "--runs", ev.string(), "--out", rep.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"table.csv", "ranks.csv", "correlation.csv", "spider.csv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(rep / f)) << f;
  }
}

TEST(Cli, BinaryExitCodes) {
  EXPECT_EQ(shell_exit("gradcheck --seed 3"), 0);
  EXPECT_EQ(shell_exit("probe --scene a --out b --mode X"), 1);
  EXPECT_EQ(shell_exit("eval --state /nonexistent --scene /nonexistent --out /tmp/x"), 2);
}
