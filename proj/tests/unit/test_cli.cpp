#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(H2LO_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli exit codes") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("train --out-dir /tmp/x --data /nonexistent/manifest.json") == 2);
  CHECK(run("--version") == 0);
}

TEST_CASE("cli pipeline composes") {
  const fs::path dir = fs::temp_directory_path() / "h2lo_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  nlohmann::json cfg = {
      {"train",
       {{"epochs", 2},
        {"loss", {{"n_coords", 100}, {"subvol_size", 8}}},
        {"model", {{"branch_channels", {2, 2, 4, 4, 8}}, {"trunk_width", 16}}}}},
      {"eval", {{"bins", 64}}}};
  std::ofstream(dir / "cfg.json") << cfg.dump();
  const std::string c = "--config " + (dir / "cfg.json").string();
  const std::string data = (dir / "data" / "manifest.json").string();

  REQUIRE(run("gen-phantom --out-dir " + (dir / "data").string() + " --seed 3 --n-subjects 4 --n-val 1 --n-test 1 --dims 12 12 12") == 0);
  CHECK(fs::exists(dir / "data" / "run.json"));
  REQUIRE(run("train " + c + " --data " + data + " --out-dir " + (dir / "run").string() + " --quiet") == 0);
  CHECK(fs::exists(dir / "run" / "checkpoint.h2lo"));
  CHECK(slurp(dir / "run" / "history.csv").rfind("epoch,loss,val_psnr,val_ssim,lr", 0) == 0);
  const auto run_json = nlohmann::json::parse(slurp(dir / "run" / "run.json"));
  CHECK(run_json["config"]["epochs"] == 2);
  CHECK(run_json.contains("version"));

  REQUIRE(run("synthesize --checkpoint " + (dir / "run" / "checkpoint.h2lo").string() + " --data " + data +
              " --out-dir " + (dir / "pred").string()) == 0);
  CHECK(fs::exists(dir / "pred" / "pred_003.vol"));
  REQUIRE(run("evaluate " + c + " --data " + data + " --pred-dir " + (dir / "pred").string() + " --out-dir " +
              (dir / "eval").string()) == 0);
  const std::string csv = slurp(dir / "eval" / "metrics.csv");
  CHECK(csv.find("pred_003.vol,lf_003.vol") != std::string::npos);
  CHECK(csv.find("mean±std") != std::string::npos);

  // pred = ref gives perfect rows
  const std::string lf = (dir / "data" / "subject_003_lf.vol").string();
  const std::string hf = (dir / "data" / "subject_003_hf.vol").string();
  REQUIRE(run("evaluate --pred " + lf + " --ref " + lf + " --hf " + hf + " --out-dir " + (dir / "perfect").string()) == 0);
  const auto pj = nlohmann::json::parse(slurp(dir / "perfect" / "metrics.json"));
  CHECK(pj["rows"][0]["psnr"] == 100.0);
  CHECK(pj["rows"][0]["ssim"] == 100.0);
  CHECK(pj["rows"][0]["wass"] == 0.0);

  // dims mismatch is a data error
  REQUIRE(run("gen-phantom --out-dir " + (dir / "small").string() + " --n-subjects 2 --n-val 0 --n-test 1 --dims 8 8 8") == 0);
  CHECK(run("evaluate --pred " + (dir / "small" / "subject_000_lf.vol").string() + " --ref " + lf + " --hf " + hf) == 3);

  REQUIRE(run("fit-baseline " + c + " --data " + data + " --out-dir " + (dir / "base").string()) == 0);
  const auto bj = nlohmann::json::parse(slurp(dir / "base" / "baseline.json"));
  CHECK(bj.size() == 5);
  REQUIRE(run("report " + c + " --data " + data + " --checkpoint " + (dir / "run" / "checkpoint.h2lo").string() +
              " --baseline " + (dir / "base" / "baseline.json").string() + " --out-dir " + (dir / "report").string()) == 0);
  const std::string table = slurp(dir / "report" / "report.csv");
  CHECK(table.find("HF Image,") != std::string::npos);
  CHECK(table.find("Baseline,") != std::string::npos);
  CHECK(table.find("H2LO,") != std::string::npos);
  CHECK(fs::exists(dir / "report" / "slices" / "subject_003_diff_h2lo.pgm"));
  fs::remove_all(dir);
}
