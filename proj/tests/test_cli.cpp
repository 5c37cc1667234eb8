#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>

#include "doctest.h"
#include "json.hpp"
#include "ragtune/pipeline.hpp"
#include "support.hpp"

using namespace ragtune;
using testing::TempDir;

namespace {

struct Run {
  int status;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(RAGTUNE_CLI) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::string out;
  char buf[4096];
  while (const auto n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int raw = ::pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

const char* kSmall = "--set feat_dim=4096 --set emb_dim=32 --set train.batch_size=16";

}  // namespace

TEST_CASE("pipeline, search and evaluation from the command line") {
  TempDir dir;
  REQUIRE(cli("synth-corpus --n 30 --out " + q(dir / "c.jsonl")).status == 0);
  const auto run = cli("pipeline --corpus " + q(dir / "c.jsonl") + " --out-dir " + q(dir / "run") + " " + kSmall + " --epochs 2");
  INFO(run.out);
  REQUIRE(run.status == 0);
  CHECK(run.out.find("dense") != std::string::npos);

  const auto manifest = nlohmann::json::parse(testing::read_text(dir / "run" / "manifest.json"));
  CHECK(manifest["config"]["emb_dim"] == 32);
  CHECK(manifest["config"]["train"]["epochs"] == 2);

  const auto model = q(dir / "run" / "model.bin"), index = q(dir / "run" / "index.bin");
  const auto hits = cli("search --model " + model + " --index " + index + " --query 'patent renewal fee' --k 2");
  CHECK(hits.status == 0);
  CHECK(hits.out.find("ipfaq-") != std::string::npos);

  const auto original = cli("eval-retrieval --model " + model + " --index " + index + " --original-questions " +
                            q(dir / "c.jsonl") + " --k 1,3 --out " + q(dir / "orig.jsonl"));
  CHECK(original.status == 0);
  const auto record = nlohmann::json::parse(testing::read_text(dir / "orig.jsonl"));
  CHECK(record["queries"] == 30);

  const auto held = cli("eval-retrieval --model " + model + " --index " + index + " --eval-queries " +
                        q(dir / "run" / "eval_queries.jsonl"));
  CHECK(held.status == 0);
  CHECK(cli("eval-retrieval --model " + model + " --index " + index).status == 2);
}

TEST_CASE("config file with command-line overrides") {
  TempDir dir;
  PipelineConfig c;
  c.seed = 5;
  c.k_per_type = 2;
  save_pipeline_config(c, dir / "c.json");
  const auto printed = cli("ablate --config " + q(dir / "c.json") + " --seed 9 --set rag_k=2 --print-config");
  REQUIRE(printed.status == 0);
  const auto resolved = PipelineConfig::from_json(printed.out);
  CHECK(resolved.seed == 9);
  CHECK(resolved.k_per_type == 2);
  CHECK(resolved.rag_k == 2);

  CHECK(cli("pipeline --set no_such_key=1 --print-config").status != 0);
  CHECK(cli("no-such-command").status != 0);
}

TEST_CASE("ablation from the command line") {
  TempDir dir;
  REQUIRE(cli("synth-corpus --n 30 --out " + q(dir / "c.jsonl")).status == 0);
  const auto run =
      cli("ablate --corpus " + q(dir / "c.jsonl") + " --out-dir " + q(dir / "abl") + " " + kSmall + " --epochs 0");
  INFO(run.out);
  // Identical arms cannot meet the improvement thresholds.
  CHECK(run.status == 3);
  CHECK(run.out.find("not met") != std::string::npos);
  const auto text = testing::read_text(dir / "abl" / "ablation.jsonl");
  CHECK(text.find("\"untrained\"") != std::string::npos);
  CHECK(text.find("\"finetuned\"") != std::string::npos);
  CHECK(text.find("\"delta\"") != std::string::npos);
}

TEST_CASE("missing corpus reports the failing stage") {
  TempDir dir;
  const auto run = cli("pipeline --corpus " + q(dir / "none.jsonl") + " --out-dir " + q(dir / "run"));
  CHECK(run.status == 2);
  CHECK(run.out.find("ingest") != std::string::npos);
  CHECK(run.out.find("FileNotFound") != std::string::npos);
}
