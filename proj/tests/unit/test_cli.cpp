#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(MTK_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mtk_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("cli exit codes") {
  const auto dir = scratch("codes");
  write(dir / "ok.json", R"({"mode": "online", "horizon": 10, "seeds": 2,
    "env": {"dim": 2, "n_tasks": 2, "pool_size": 50}, "policies": [{"kind": "mt-ucb"}]})");
  write(dir / "bad.json", R"({"mode": "online", "horizon": 0, "policies": [{"kind": "mt-ucb"}]})");
  write(dir / "nodata.json", R"({"mode": "online", "policies": [{"kind": "mt-ucb"}],
    "env": {"type": "dataset", "path": "missing.csv"}, "problem": {"eps": 0.3}})");

  CHECK(run("online --config " + (dir / "ok.json").string() + " --out " + (dir / "out").string() + " --plot") == 0);
  CHECK(fs::exists(dir / "out" / "results.csv"));
  CHECK(fs::exists(dir / "out" / "regret_online.svg"));

  CHECK(run("online --config " + (dir / "bad.json").string() + " --out " + (dir / "bad").string()) == 1);
  CHECK_FALSE(fs::exists(dir / "bad"));
  CHECK(run("active --config " + (dir / "ok.json").string() + " --out " + (dir / "x").string()) == 1);
  CHECK(run("online --config " + (dir / "nodata.json").string() + " --out " + (dir / "nd").string()) == 3);
  CHECK_FALSE(fs::exists(dir / "nd"));
  CHECK(run("online --config " + (dir / "missing.json").string()) == 3);
  CHECK(run("online") == 1);
  CHECK(run("online --config " + (dir / "ok.json").string() + " --seeds x") == 1);
}

TEST_CASE("cli output directory precedence and the widths alias") {
  const auto dir = scratch("outdir");
  CHECK(run("bench-widths --out " + (dir / "w").string()) == 0);
  CHECK(fs::exists(dir / "w" / "widths.csv"));
  const std::string env_cmd = "MTK_OUTPUT_DIR=" + (dir / "env").string() + " " + MTK_CLI_PATH + " widths-bench >/dev/null 2>&1";
  CHECK(std::system(env_cmd.c_str()) == 0);
  CHECK(fs::exists(dir / "env" / "widths.csv"));
}
