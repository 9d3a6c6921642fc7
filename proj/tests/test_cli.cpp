#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "rct/checkpoint.hpp"
#include "rct/cli.hpp"

using namespace rct;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "rct");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string value_after(const std::string& text, const std::string& key) {
  const auto p = text.find(key);
  REQUIRE(p != std::string::npos);
  const auto start = p + key.size();
  return text.substr(start, text.find('\n', start) - start);
}

// A generated dataset plus a small run config pointing at it.
struct Workspace {
  testing::TempDir dir{"cli"};
  std::string data = dir.file("data.jsonl");
  std::string config = dir.file("run.json");

  Workspace() {
    REQUIRE(cli({"generate", "--out", data, "--records", "600", "--seed", "5"}).code == kExitOk);
    nlohmann::json j;
    j["schema"] = "synth-std";
    j["data"] = {{"path", data}, {"split_seed", 2}};
    j["model"] = {{"kind", "rct"}, {"d_model", 8}, {"layers", 1}, {"heads", 2}, {"ff_width", 16}};
    j["train"] = {{"batch_size", 64}, {"max_epochs", 2}, {"eval_every", 4}, {"seed", 1}};
    j["output"] = dir.file("run");
    std::ofstream(config) << j.dump(2);
  }

  std::string train(const std::string& out) {
    const CliResult r = cli({"train", "--config", config, "--out", out, "--quiet"});
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
    return out;
  }
};

}  // namespace

TEST_CASE("generate is deterministic and writes sidecars") {
  testing::TempDir dir("cli_gen");
  const CliResult a = cli({"generate", "--out", dir.file("a.jsonl"), "--records", "200"});
  const CliResult b = cli({"generate", "--out", dir.file("b.jsonl"), "--records", "200"});
  REQUIRE(a.code == kExitOk);
  REQUIRE(b.code == kExitOk);
  CHECK(testing::read_file(dir.file("a.jsonl")) == testing::read_file(dir.file("b.jsonl")));
  CHECK(std::filesystem::exists(dir.file("a.schema.json")));
  CHECK(std::filesystem::exists(dir.file("a.genconfig.json")));
  CHECK(a.out.find("MAE% of heuristic cost: 100.00") != std::string::npos);
  CHECK(a.out.find("MAE% of actual cost: 0.00") != std::string::npos);
  const Dataset ds = load_dataset(dir.file("a.jsonl"), FeatureSchema::load(dir.file("a.schema.json")));
  CHECK(ds.size() == 200);
}

TEST_CASE("usage errors exit with 2") {
  testing::TempDir dir("cli_usage");
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"generate"}).code == kExitUsage);
  CHECK(cli({"generate", "--out", dir.file("x.jsonl"), "--preset", "nope"}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"train", "--config", dir.file("missing.json")}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("invalid model configuration is rejected before training") {
  Workspace w;
  nlohmann::json j = nlohmann::json::parse(testing::read_file(w.config));
  j["model"]["heads"] = 5;
  std::ofstream(w.config) << j.dump();
  const CliResult r = cli({"train", "--config", w.config, "--quiet"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("heads") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(w.dir.file("run")));

  j["model"]["heads"] = 2;
  j["model"]["colour"] = "red";
  std::ofstream(w.config) << j.dump();
  CHECK(cli({"train", "--config", w.config, "--quiet"}).code == kExitUsage);
}

TEST_CASE("train, eval, analyze and export work together") {
  Workspace w;
  const std::string run = w.train(w.dir.file("run"));
  for (const char* f : {"model.ckpt", "history.csv", "summary.json"}) {
    CHECK(std::filesystem::exists(run + "/" + f));
  }
  const nlohmann::json summary = nlohmann::json::parse(testing::read_file(run + "/summary.json"));
  for (const char* key : {"model", "test_mae_percent", "best_val_mae_percent", "params_count", "steps", "wall_time"}) {
    CHECK(summary.contains(key));
  }

  SUBCASE("eval on the test split reproduces the summary exactly") {
    const CliResult r = cli({"eval", "--model", run + "/model.ckpt", "--data", w.data, "--split", "test"});
    REQUIRE(r.code == kExitOk);
    CHECK(std::stod(value_after(r.out, "mae_percent: ")) == summary["test_mae_percent"].get<double>());
    CHECK(value_after(r.out, "records: ") == "60");
    const CliResult all = cli({"eval", "--model", run + "/model.ckpt", "--data", w.data});
    CHECK(value_after(all.out, "records: ") == "600");
  }

  SUBCASE("analyze needs a single stratum") {
    const std::string csv = w.dir.file("heat.csv");
    const CliResult mixed = cli({"analyze", "--model", run + "/model.ckpt", "--data", w.data, "--out", csv});
    CHECK(mixed.code == kExitUsage);
    CHECK(mixed.err.find("--stratum") != std::string::npos);
    const CliResult ok =
        cli({"analyze", "--model", run + "/model.ckpt", "--data", w.data, "--stratum", "2,1", "--out", csv});
    REQUIRE_MESSAGE(ok.code == kExitOk, ok.err);
    std::istringstream in(testing::read_file(csv));
    std::string line;
    std::getline(in, line);
    CHECK(line == "token,head_0,head_1");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 4 + 3 + 3 + 2 + 1 + 1);
  }

  SUBCASE("export writes one row per record") {
    const std::string csv = w.dir.file("emb.csv");
    const CliResult r = cli({"export", "--model", run + "/model.ckpt", "--data", w.data, "--out", csv});
    REQUIRE(r.code == kExitOk);
    std::istringstream in(testing::read_file(csv));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 601);
  }

  SUBCASE("a different schema is a compatibility error") {
    FeatureSchema other = synth_std_schema();
    other.group(GroupId::service)[0].cardinality += 1;
    other.save(w.dir.file("other.json"));
    const CliResult r =
        cli({"eval", "--model", run + "/model.ckpt", "--data", w.data, "--schema", w.dir.file("other.json")});
    CHECK(r.code == kExitCompatibility);
  }

  SUBCASE("a corrupt checkpoint is reported") {
    std::string bytes = testing::read_file(run + "/model.ckpt");
    bytes.resize(bytes.size() / 2);
    std::ofstream(w.dir.file("cut.ckpt"), std::ios::binary) << bytes;
    CHECK(cli({"eval", "--model", w.dir.file("cut.ckpt"), "--data", w.data}).code == kExitUsage);
  }
}

TEST_CASE("repeated training runs are byte-identical") {
  Workspace w;
  const std::string a = w.train(w.dir.file("a"));
  const std::string b = w.train(w.dir.file("b"));
  CHECK(testing::read_file(a + "/model.ckpt") == testing::read_file(b + "/model.ckpt"));
  CHECK(testing::read_file(a + "/history.csv") == testing::read_file(b + "/history.csv"));
  nlohmann::json sa = nlohmann::json::parse(testing::read_file(a + "/summary.json"));
  nlohmann::json sb = nlohmann::json::parse(testing::read_file(b + "/summary.json"));
  sa.erase("wall_time");
  sb.erase("wall_time");
  CHECK(sa == sb);
}

TEST_CASE("sweep writes per-seed rows and summaries") {
  Workspace w;
  const std::string csv = w.dir.file("sweep.csv");
  const CliResult r =
      cli({"sweep", "--config", w.config, "--kind", "layers", "--values", "1,2", "--seeds", "0,1", "--out", csv,
           "--threads", "1"});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  std::istringstream in(testing::read_file(csv));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 1 + 4 + 2);
  CHECK(cli({"sweep", "--config", w.config, "--kind", "heads", "--values", "3", "--out", csv}).code == kExitUsage);
  CHECK(cli({"sweep", "--config", w.config, "--kind", "layers", "--values", "1,x", "--out", csv}).code ==
        kExitUsage);
}

TEST_CASE("the installed binary reports exit codes") {
  const std::string bin = RCT_CLI_PATH;
  const auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  CHECK(status(bin + " --help") == kExitOk);
  CHECK(status(bin + " generate") == kExitUsage);
  testing::TempDir dir("cli_bin");
  CHECK(status(bin + " generate --records 10 --out " + dir.file("d.jsonl")) == kExitOk);
}
