#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "omad/cli.hpp"
#include "omad/model.hpp"
#include "omad/trainer.hpp"
#include "test_util.hpp"

using namespace omad;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "omad");
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

// Small dataset: 6 train identities, 2 test identities, 16x16 pixels.
CliResult gen_small(const fs::path& dir) {
  return run_cli({"gen", "--out", dir.string(), "--identities", "8", "--per-id", "4", "--morphs", "16", "--size",
                  "16"});
}

std::string tree_digest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, dir).string() + "\n" + testing::read_file(f) + "\n";
  return all;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
}

}  // namespace

TEST_CASE("cli: help and missing subcommand") {
  auto help = run_cli({"--help"});
  CHECK(help.code == cli::kExitOk);
  CHECK(contains(help.out, "gradcheck"));

  auto none = run_cli({});
  CHECK(none.code == cli::kExitUsage);
  CHECK(contains(none.err, "error:"));

  auto unknown = run_cli({"frobnicate"});
  CHECK(unknown.code == cli::kExitUsage);
  CHECK(contains(unknown.err, "error:"));
}

TEST_CASE("cli gen: defaults, validation and determinism") {
  testing::TempDir tmp("cli_gen");
  auto r = run_cli({"gen", "--out", (tmp / "a").string()});
  CHECK(r.code == cli::kExitOk);
  CHECK(contains(r.out, "wrote 700 samples"));
  CHECK(fs::exists(tmp / "a" / "manifest.tsv"));

  auto again = run_cli({"gen", "--out", (tmp / "b").string()});
  REQUIRE(again.code == cli::kExitOk);
  CHECK(tree_digest(tmp / "a") == tree_digest(tmp / "b"));

  auto bad = run_cli({"gen", "--out", (tmp / "c").string(), "--identities", "2", "--morphs", "100"});
  CHECK(bad.code == cli::kExitUsage);
  CHECK(contains(bad.err, "too few identities"));
  CHECK_FALSE(fs::exists(tmp / "c"));

  auto no_out = run_cli({"gen"});
  CHECK(no_out.code == cli::kExitUsage);
}

TEST_CASE("cli train: smoke, alpha 0 and validation") {
  testing::TempDir tmp("cli_train");
  REQUIRE(gen_small(tmp / "data").code == cli::kExitOk);
  const std::string data = (tmp / "data").string();

  auto r = run_cli({"train", "--data", data, "--out", (tmp / "run").string(), "--epochs", "2"});
  CHECK(r.code == cli::kExitOk);
  CHECK(contains(r.out, "final step"));
  CHECK(contains(r.out, "alpha 100"));
  CHECK(fs::exists(tmp / "run" / "final.omad"));
  CHECK(fs::exists(tmp / "run" / "best.omad"));

  auto zero = run_cli({"train", "--data", data, "--out", (tmp / "zero").string(), "--epochs", "2", "--alpha", "0",
                       "--precision", "f64"});
  REQUIRE(zero.code == cli::kExitOk);
  const auto log = read_train_log(tmp / "zero" / "train_log.csv");
  REQUIRE_FALSE(log.empty());
  for (const auto& row : log) CHECK(row.total == row.bce);

  auto batch0 = run_cli({"train", "--data", data, "--out", (tmp / "b0").string(), "--batch", "0"});
  CHECK(batch0.code == cli::kExitUsage);
  CHECK(contains(batch0.err, "error:"));
  CHECK_FALSE(fs::exists(tmp / "b0"));

  auto bad_precision = run_cli({"train", "--data", data, "--out", (tmp / "bp").string(), "--precision", "f16"});
  CHECK(bad_precision.code == cli::kExitUsage);
  CHECK_FALSE(fs::exists(tmp / "bp"));

  auto missing = run_cli({"train", "--data", (tmp / "nope").string(), "--out", (tmp / "m").string()});
  CHECK(missing.code == cli::kExitRuntime);
  CHECK(contains(missing.err, "error:"));
}

TEST_CASE("cli eval: report keys, missing model and corrupt model") {
  testing::TempDir tmp("cli_eval");
  REQUIRE(gen_small(tmp / "data").code == cli::kExitOk);
  const std::string data = (tmp / "data").string();
  REQUIRE(run_cli({"train", "--data", data, "--out", (tmp / "run").string(), "--epochs", "1"}).code == cli::kExitOk);

  auto r = run_cli({"eval", "--model", (tmp / "run" / "final.omad").string(), "--data", data, "--scores",
                    (tmp / "scores.csv").string(), "--report", (tmp / "report.json").string()});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(contains(r.out, "test split:"));
  CHECK(contains(r.out, "BPCER@APCER=20%"));
  const auto report = nlohmann::json::parse(testing::read_file(tmp / "report.json"));
  CHECK(report.contains("eer"));
  CHECK(report.contains("bpcer_at_apcer"));
  CHECK(report["bpcer_at_apcer"].contains("0.01"));
  CHECK(report["bpcer_at_apcer"].contains("0.20"));
  CHECK(fs::exists(tmp / "scores.csv"));

  auto no_model = run_cli({"eval", "--data", data});
  CHECK(no_model.code == cli::kExitUsage);

  auto bad_split = run_cli({"eval", "--model", (tmp / "run" / "final.omad").string(), "--data", data, "--split",
                            "valid", "--scores", (tmp / "s2.csv").string()});
  CHECK(bad_split.code == cli::kExitUsage);
  CHECK_FALSE(fs::exists(tmp / "s2.csv"));

  write_text(tmp / "corrupt.omad", "not a model\n");
  auto corrupt = run_cli({"eval", "--model", (tmp / "corrupt.omad").string(), "--data", data});
  CHECK(corrupt.code == cli::kExitRuntime);
  CHECK(contains(corrupt.err, "error:"));
}

TEST_CASE("cli eval: untrained model on balanced data scores near chance") {
  // Default identities with 400 attacks: 100 bona fide and 100 attacks in the
  // test split. Measured test EER for seeds 1..5: 0.41 0.48 0.41 0.40 0.50.
  testing::TempDir tmp("cli_chance");
  const std::string data = (tmp / "data").string();
  REQUIRE(run_cli({"gen", "--out", data, "--morphs", "400"})
              .code == cli::kExitOk);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    const fs::path model = tmp / ("init_" + std::to_string(seed) + ".omad");
    save_model(init_model<float>(ModelConfig{}, seed), model);
    const fs::path report = tmp / ("report_" + std::to_string(seed) + ".json");
    auto r = run_cli({"eval", "--model", model.string(), "--data", data, "--report", report.string()});
    REQUIRE(r.code == cli::kExitOk);
    const auto j = nlohmann::json::parse(testing::read_file(report));
    REQUIRE(j["counts"]["attack"] == j["counts"]["bona_fide"]);
    const double eer = j["eer"].get<double>();
    CHECK(eer >= 0.35);
    CHECK(eer <= 0.65);
  }
}

TEST_CASE("cli det: separable scores, malformed CSV") {
  testing::TempDir tmp("cli_det");
  write_text(tmp / "sep.csv", "sample_id,label,score\na0,0,0.1\na1,0,0.2\nb0,1,0.8\nb1,1,0.9\n");
  auto r = run_cli({"det", "--scores", (tmp / "sep.csv").string(), "--out", (tmp / "det.csv").string()});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(contains(r.out, "EER 0.00%"));
  bool origin = false;
  std::istringstream lines(testing::read_file(tmp / "det.csv"));
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (std::stod(line.substr(c1 + 1, c2 - c1 - 1)) == 0.0 && std::stod(line.substr(c2 + 1)) == 0.0) origin = true;
  }
  CHECK(origin);

  write_text(tmp / "bad.csv", "sample_id,label,score\na0,0,0.1\na1,zero,0.2\n");
  auto bad = run_cli({"det", "--scores", (tmp / "bad.csv").string(), "--out", (tmp / "bad_det.csv").string()});
  CHECK(bad.code == cli::kExitRuntime);
  CHECK(contains(bad.err, "line 3"));
  CHECK_FALSE(fs::exists(tmp / "bad_det.csv"));

  auto missing = run_cli({"det", "--scores", (tmp / "sep.csv").string()});
  CHECK(missing.code == cli::kExitUsage);
}

TEST_CASE("cli gradcheck: default passes, impossible tolerance fails") {
  auto r = run_cli({"gradcheck"});
  CHECK(r.code == cli::kExitOk);
  CHECK(contains(r.out, "PASS"));
  CHECK(contains(r.out, "checked 200 of"));

  auto strict = run_cli({"gradcheck", "--tolerance", "1e-12"});
  CHECK(strict.code == cli::kExitRuntime);
  CHECK(contains(strict.out, "FAIL"));
  CHECK(contains(strict.err, "error: gradient check failed"));

  auto bad = run_cli({"gradcheck", "--tolerance", "-1"});
  CHECK(bad.code == cli::kExitUsage);
}
