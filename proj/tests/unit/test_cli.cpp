#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "cli_app.hpp"
#include "fixtures.hpp"

using namespace pvcrack;
using namespace pvcrack::cli;
namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

std::string s(const fs::path& p) { return p.string(); }

struct Workspace {
  fixtures::TempDir dir{"cli"};
  fs::path data = dir.path() / "data";
  Workspace() { fixtures::write_elpv(data, fixtures::synthetic_set(30)); }
};

}  // namespace

TEST_CASE("config files") {
  fixtures::TempDir dir("cfg");
  const auto kv = dir.path() / "a.cfg";
  write_text_file(kv, "# comment\n\nepochs = 3\nsplit_seed=9\n");
  const auto entries = read_config_file(kv, "train");
  REQUIRE(entries.size() == 2);
  CHECK(entries[0] == std::pair<std::string, std::string>{"epochs", "3"});
  CHECK(entries[1].first == "split-seed");

  write_text_file(kv, "no equals sign\n");
  CHECK_THROWS_AS(read_config_file(kv, "train"), UsageError);
  CHECK_THROWS_AS(read_config_file(dir.path() / "missing.cfg", "train"), LoadError);

  const auto js = dir.path() / "m.run.json";
  write_text_file(js, R"({"command":"train","config":{"epochs":"4","lr":"0.01"}})");
  const auto from_json = read_config_file(js, "train");
  CHECK(from_json.size() == 2);
  CHECK_THROWS_AS(read_config_file(js, "quantize"), UsageError);
}

TEST_CASE("help and usage exit codes") {
  CHECK(dispatch({"--help"}) == kExitOk);
  for (const char* sub : {"prepare", "train", "finetune", "evaluate", "quantize", "export", "infer",
                          "benchmark", "search", "gate"})
    CHECK(dispatch({sub, "--help"}) == kExitOk);
  CHECK(dispatch({}) == kExitUsage);
  CHECK(dispatch({"nonsense"}) == kExitUsage);
  CHECK(dispatch({"train", "--no-such-flag"}) == kExitUsage);
  CHECK(dispatch({"train", "--epochs", "abc"}) == kExitUsage);
  CHECK(dispatch({"gate", "--profile", "Z", "--candidates", "."}) == kExitUsage);
}

TEST_CASE("data and model errors exit 2") {
  fixtures::TempDir dir("err");
  CHECK(dispatch({"prepare", "--data", s(dir.path() / "nowhere"), "--out", s(dir.path() / "x.tsv")}) == kExitData);
  CHECK(dispatch({"evaluate", "--model", s(dir.path() / "missing.pvtm"), "--data", s(dir.path())}) == kExitData);
  write_text_file(dir.path() / "junk.pvtm", "not a model");
  CHECK(dispatch({"benchmark", "--model", s(dir.path() / "junk.pvtm"), "--out", s(dir.path() / "b.json")}) ==
        kExitData);
}

TEST_CASE("pipeline on a synthetic dataset") {
  Workspace w;
  const auto out = w.dir.path();
  const auto data = s(w.data);

  REQUIRE(dispatch({"prepare", "--data", data, "--out", s(out / "split.tsv")}) == kExitOk);
  CHECK(fs::exists(out / "split.tsv"));
  const auto pm = read_json(out / "split.tsv.run.json");
  CHECK(pm["command"] == "prepare");
  CHECK(pm["config"].contains("split-seed"));
  CHECK(pm["outputs"][0]["bytes"].get<std::uintmax_t>() == fs::file_size(out / "split.tsv"));

  const std::vector<std::string> train_args = {"train", "--data", data, "--input-side", "32", "--epochs", "2",
                                               "--batch", "8", "--deterministic", "--out", s(out / "m.pvtm")};
  REQUIRE(dispatch(train_args) == kExitOk);
  const auto tm = read_json(out / "m.pvtm.run.json");
  CHECK(tm["deterministic"] == true);
  CHECK(tm["config"]["epochs"] == "2");
  CHECK(tm["seeds"].contains("seed"));

  // Rerunning from the manifest reproduces the checkpoint byte for byte.
  REQUIRE(dispatch({"train", "--config", s(out / "m.pvtm.run.json"), "--out", s(out / "again.pvtm")}) == kExitOk);
  CHECK(read_file_bytes(out / "m.pvtm") == read_file_bytes(out / "again.pvtm"));

  // Explicit flags override the config file.
  write_text_file(out / "t.cfg", "epochs=5\ninput-side=32\nbatch=8\n");
  REQUIRE(dispatch({"train", "--data", data, "--config", s(out / "t.cfg"), "--epochs", "1", "--out",
                    s(out / "o.pvtm")}) == kExitOk);
  CHECK(read_json(out / "o.pvtm.run.json")["config"]["epochs"] == "1");

  REQUIRE(dispatch({"finetune", "--data", data, "--base", s(out / "m.pvtm"), "--epochs", "1", "--batch", "8",
                    "--out", s(out / "ft.pvtm")}) == kExitOk);
  REQUIRE(dispatch({"quantize", "--data", data, "--model", s(out / "m.pvtm"), "--calib-samples", "16", "--out",
                    s(out / "cands" / "m8.pvtm")}) == kExitOk);
  REQUIRE(dispatch({"quantize", "--data", data, "--model", s(out / "m.pvtm"), "--scheme", "fp16", "--out",
                    s(out / "cands" / "m16.pvtm")}) == kExitOk);
  REQUIRE(dispatch({"evaluate", "--data", data, "--model", s(out / "cands" / "m8.pvtm"), "--out",
                    s(out / "ev.json")}) == kExitOk);
  const auto ev = read_json(out / "ev.json");
  CHECK(ev["accuracy"].get<double>() >= 0.0);
  CHECK(ev["sample_count"].get<long>() == 6);

  REQUIRE(dispatch({"infer", "--model", s(out / "cands" / "m8.pvtm"), "--image", s(w.data / "images/cell0.png"),
                    "--out", s(out / "inf.json")}) == kExitOk);
  CHECK(read_json(out / "inf.json").contains("class_index"));
  REQUIRE(dispatch({"benchmark", "--model", s(out / "cands" / "m8.pvtm"), "--runs", "3", "--warmup", "1",
                    "--out", s(out / "bench.json")}) == kExitOk);
  REQUIRE(dispatch({"export", "--arch", "model2", "--input-side", "32", "--out", s(out / "cands" / "e.pvtm")}) ==
          kExitOk);
  CHECK(dispatch({"export", "--arch", "model2", "--scheme", "int8", "--out", s(out / "x.pvtm")}) == kExitUsage);

  REQUIRE(dispatch({"gate", "--candidates", s(out / "cands"), "--out", s(out / "sel.json")}) == kExitOk);
  const auto sel = read_json(out / "sel.json");
  CHECK(sel["status"] == "selected");
  CHECK(sel["ranking"][0] == "m8.pvtm");
  CHECK(sel["candidates"].size() == 3);
  REQUIRE(dispatch({"gate", "--profile", "A", "--candidates", s(out / "cands"), "--out", s(out / "selA.json")}) ==
          kExitOk);
  CHECK(read_json(out / "selA.json")["ranking"].size() == 3);
}

TEST_CASE("data root from the environment") {
  Workspace w;
  ::setenv(kDataEnv, w.data.c_str(), 1);
  const int rc = dispatch({"prepare", "--variant", "06", "--out", s(w.dir.path() / "split.tsv")});
  ::unsetenv(kDataEnv);
  CHECK(rc == kExitOk);
  const auto m = read_json(w.dir.path() / "split.tsv.run.json");
  CHECK(m["config"]["data"] == w.data.string());
}
