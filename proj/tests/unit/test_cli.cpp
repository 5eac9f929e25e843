#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "cli/commands.hpp"

namespace fs = std::filesystem;
using segopt::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("segopt_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

// Small training set shared by the tests below.
const fs::path& dataset() {
  static const fs::path dir = [] {
    const auto d = scratch("data");
    const auto r = cli({"synth", "--out", d.string(), "--grid", "10x10", "--subgroups",
                        "common:6,rare:2", "--seed", "3"});
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"train", "--epochs", "many"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("synth") {
  const auto d = scratch("synth");
  const auto r = cli({"synth", "--out", d.string(), "--grid", "16x16", "--subgroups",
                      "common:3,rare:1", "--no-et-frac", "0.1", "--sigma", "0.3", "--seed", "4"});
  CHECK(r.code == 0);
  CHECK(fs::exists(d / "manifest.json"));
  const auto doc = nlohmann::json::parse(slurp(d / "manifest.json"));
  CHECK(doc["cases"].size() == 4);

  const auto again = scratch("synth2");
  CHECK(cli({"--seed", "4", "synth", "--out", again.string(), "--grid", "16x16", "--subgroups",
             "common:3,rare:1"})
            .code == 0);
  for (const auto& e : fs::recursive_directory_iterator(d)) {
    if (e.is_regular_file()) CHECK(slurp(e.path()) == slurp(again / fs::relative(e.path(), d)));
  }

  const auto bad = cli({"synth", "--out", scratch("bad").string(), "--grid", "16x"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("cannot parse grid") != std::string::npos);
  CHECK(cli({"synth", "--out", scratch("bad").string(), "--grid", "4x4"}).code == 2);
  CHECK(cli({"synth", "--grid", "16x16"}).code == 2);
  fs::remove_all(d);
  fs::remove_all(again);
}

TEST_CASE("train writes model, log and resolved config") {
  const auto out = scratch("train");
  const auto r = cli({"train", "--data", dataset().string(), "--out", out.string(), "--loss",
                      "dice_ce", "--population", "erm", "--optimizer", "sgd", "--epochs", "5",
                      "--seed", "2"});
  REQUIRE(r.code == 0);
  for (const char* f : {"model.json", "model.bin", "train_log.csv", "config.json"}) {
    CHECK(fs::exists(out / f));
  }
  CHECK_FALSE(fs::exists(out / "sampler_state.json"));
  const auto cfg = nlohmann::json::parse(slurp(out / "config.json"));
  CHECK(cfg["loss"] == "dice_ce");
  CHECK(cfg["optimizer"] == "sgd");
  CHECK(cfg["lr"] == 1e-2);
  CHECK(cfg["seed"] == 2);
  const auto log = slurp(out / "train_log.csv");
  CHECK(log.rfind("epoch,loss,lr,sampler_entropy\n", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 6);

  SUBCASE("rerun is byte-identical") {
    const auto again = scratch("train_again");
    REQUIRE(cli({"train", "--data", dataset().string(), "--out", again.string(), "--loss",
                 "dice_ce", "--population", "erm", "--optimizer", "sgd", "--epochs", "5",
                 "--seed", "2"})
                .code == 0);
    for (const char* f : {"model.json", "model.bin", "train_log.csv", "config.json"}) {
      CHECK(slurp(out / f) == slurp(again / f));
    }
    fs::remove_all(again);
  }
  SUBCASE("config replay reproduces the run") {
    const auto replay = scratch("train_replay");
    REQUIRE(cli({"train", "--config", (out / "config.json").string(), "--out", replay.string()})
                .code == 0);
    for (const char* f : {"model.json", "model.bin", "train_log.csv", "config.json"}) {
      CHECK(slurp(out / f) == slurp(replay / f));
    }
    fs::remove_all(replay);
  }
  fs::remove_all(out);
}

TEST_CASE("train presets") {
  const auto out = scratch("presets");
  for (const char* preset : {"baseline", "ranger", "gwdl", "dro"}) {
    const auto dir = out / preset;
    REQUIRE(cli({"train", "--data", dataset().string(), "--out", dir.string(), "--preset", preset,
                 "--epochs", "3"})
                .code == 0);
    const auto cfg = nlohmann::json::parse(slurp(dir / "config.json"));
    INFO(preset);
    CHECK(cfg["preset"] == preset);
    if (std::string(preset) == "baseline") {
      CHECK(cfg["loss"] == "dice_ce");
      CHECK(cfg["population"] == "erm");
      CHECK(cfg["optimizer"] == "sgd");
    } else if (std::string(preset) == "ranger") {
      CHECK(cfg["optimizer"] == "ranger");
      CHECK(cfg["lr"] == 3e-3);
    } else if (std::string(preset) == "gwdl") {
      CHECK(cfg["loss"] == "gwdl_ce");
    } else {
      CHECK(cfg["population"] == "dro");
      CHECK(cfg["beta"] == 100.0);
      CHECK(fs::exists(dir / "sampler_state.json"));
    }
  }
  REQUIRE(cli({"train", "--data", dataset().string(), "--out", (out / "ens").string(),
               "--preset", "ensemble", "--epochs", "2"})
              .code == 0);
  for (const char* arm : {"ranger", "gwdl", "dro"}) CHECK(fs::exists(out / "ens" / arm / "model.json"));
  CHECK(cli({"train", "--data", dataset().string(), "--out", out.string(), "--preset", "nope"})
            .code == 2);
  fs::remove_all(out);
}

TEST_CASE("train error exits") {
  const auto out = scratch("train_err");
  CHECK(cli({"train", "--data", "/nonexistent/data", "--out", out.string()}).code == 2);
  CHECK(cli({"train", "--data", dataset().string(), "--out", out.string(), "--loss", "hinge"})
            .code == 2);
  CHECK(cli({"train", "--data", dataset().string(), "--out", out.string(), "--optimizer",
             "lbfgs"})
            .code == 2);
  const auto div = cli({"train", "--data", dataset().string(), "--out", out.string(), "--lr",
                        "1e308", "--epochs", "3"});
  CHECK(div.code == 3);
  CHECK(div.err.find("divergence at epoch") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("evaluate") {
  const auto out = scratch("eval");
  REQUIRE(cli({"train", "--data", dataset().string(), "--out", (out / "m").string(), "--epochs",
               "20", "--seed", "1"})
              .code == 0);
  const auto model = (out / "m" / "model.json").string();

  const auto single = cli({"evaluate", "--data", dataset().string(), "--models", model, "--out",
                           (out / "one").string()});
  REQUIRE(single.code == 0);
  CHECK(single.out.find("Dice Score (%)") != std::string::npos);
  for (const char* f :
       {"metrics.csv", "aggregate.csv", "aggregate.txt", "aggregate_by_subgroup.csv",
        "config.json"}) {
    CHECK(fs::exists(out / "one" / f));
  }
  const auto metrics = slurp(out / "one" / "metrics.csv");
  CHECK(metrics.rfind("case_id,region,dice,hd95,hd95_defined\n", 0) == 0);
  CHECK(slurp(out / "one" / "aggregate_by_subgroup.csv").find("\nrare,dice,WT,") !=
        std::string::npos);

  SUBCASE("three identical models match one") {
    REQUIRE(cli({"evaluate", "--data", dataset().string(), "--out", (out / "three").string(),
                 model, model, model})
                .code == 0);
    CHECK(slurp(out / "three" / "metrics.csv") == metrics);
    CHECK(slurp(out / "three" / "aggregate.csv") == slurp(out / "one" / "aggregate.csv"));
  }
  SUBCASE("tta on a per-voxel model matches plain evaluation") {
    REQUIRE(cli({"evaluate", "--data", dataset().string(), "--models", model, "--tta", "--out",
                 (out / "tta").string()})
                .code == 0);
    CHECK(slurp(out / "tta" / "metrics.csv") == metrics);
  }
  SUBCASE("thread count does not change results") {
    REQUIRE(cli({"evaluate", "--data", dataset().string(), "--models", model, "--jobs", "4",
                 "--out", (out / "jobs").string()})
                .code == 0);
    CHECK(slurp(out / "jobs" / "metrics.csv") == metrics);
  }
  SUBCASE("incompatible model exits 2") {
    const auto other = scratch("eval_3d");
    REQUIRE(cli({"synth", "--out", other.string(), "--grid", "8x8", "--subgroups", "a:1"}).code ==
            0);
    // Rewrite the model spec with a different feature width.
    auto doc = nlohmann::json::parse(slurp(model));
    doc["spec"]["input_features"] = 3;
    doc["param_count"] = 16;
    std::ofstream(out / "m" / "narrow.json") << doc.dump();
    fs::resize_file(out / "m" / "model.bin", 16 * 8);
    CHECK(cli({"evaluate", "--data", other.string(), "--models",
               (out / "m" / "narrow.json").string(), "--out", (out / "bad").string()})
              .code == 2);
    fs::remove_all(other);
  }
  CHECK(cli({"evaluate", "--data", dataset().string(), "--out", (out / "none").string()}).code ==
        2);
  fs::remove_all(out);
}

TEST_CASE("noiseless data is segmented almost perfectly") {
  const auto out = scratch("noiseless");
  REQUIRE(cli({"synth", "--out", (out / "d").string(), "--grid", "12x12", "--subgroups",
               "common:6", "--sigma", "0", "--no-et-frac", "0", "--seed", "5"})
              .code == 0);
  REQUIRE(cli({"train", "--data", (out / "d").string(), "--out", (out / "m").string(), "--loss",
               "ce", "--lr", "0.1", "--epochs", "300", "--seed", "5"})
              .code == 0);
  REQUIRE(cli({"evaluate", "--data", (out / "d").string(), "--models",
               (out / "m" / "model.json").string(), "--min-et-voxels", "0", "--out",
               (out / "e").string()})
              .code == 0);
  std::istringstream agg(slurp(out / "e" / "aggregate.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(agg, line)) {
    if (line.rfind("dice,", 0) != 0) continue;
    // metric,region,count,excluded,mean,...
    std::stringstream ss(line);
    std::string cell;
    for (int k = 0; k < 5; ++k) std::getline(ss, cell, ',');
    INFO(line);
    CHECK(std::stod(cell) > 0.99);
    ++rows;
  }
  CHECK(rows == 3);
  fs::remove_all(out);
}

TEST_CASE("gradcheck") {
  const auto all = cli({"gradcheck", "--trials", "20"});
  CHECK(all.code == 0);
  for (const char* kind : {"ce ", "dice ", "gwdl ", "dice_ce ", "gwdl_ce "}) {
    CHECK(all.out.find(kind) != std::string::npos);
  }
  CHECK(all.out.find("FAIL") == std::string::npos);

  const auto one = cli({"gradcheck", "--loss", "gwdl", "--trials", "100"});
  CHECK(one.code == 0);
  CHECK(one.out.find("trials=100") != std::string::npos);

  const auto faulty = cli({"gradcheck", "--loss", "dice", "--trials", "5", "--inject-fault",
                           "1e-3"});
  CHECK(faulty.code == 3);
  CHECK(faulty.out.find("FAIL") != std::string::npos);
  CHECK(cli({"gradcheck", "--loss", "hinge"}).code == 2);
}
