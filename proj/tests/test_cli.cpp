// Copyright 2026 The MFM Mapper Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <doctest.h>

#include <sstream>

#include "mfm/cli.hpp"
#include "mfm/dataset.hpp"
#include "mfm/tensor.hpp"
#include "mfm/trainer.hpp"
#include "support.hpp"

using namespace mfm;
using mfm::testing::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kTinyModel = {"--d-model", "8", "--n-layers", "1", "--n-heads", "2"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("generate, train, infer and evaluate end to end") {
  TempDir dir("cli");
  const std::string data = (dir / "data").string();
  Result r = run({"gen-data", "--n-train", "64", "--n-test", "64", "--out", data});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("gen-data: 64 train / 64 test") != std::string::npos);
  CHECK(load_dataset(data).test.size() == 64);

  const std::string run_dir = (dir / "run").string();
  r = run(with({"train", "--data", data, "--out", run_dir, "--epochs", "2", "--batch-size", "32"}, kTinyModel));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(std::filesystem::exists(dir / "run" / "final.mfmc"));
  CHECK(std::filesystem::exists(dir / "run" / "loss_log.csv"));
  const auto cfg = nlohmann::json::parse(read_file(dir / "run" / "config.json"));
  CHECK(cfg.at("train").at("epochs") == 2);
  CHECK(cfg.at("mapper").at("d_model") == 8);

  const std::string pred = (dir / "pred.mfmt").string();
  r = run({"infer", "--model", run_dir + "/final.mfmc", "--data", data, "--out", pred});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(read_tensor(pred).dims == std::vector<std::uint32_t>{64, 8, 32});

  r = run({"eval", "--pred", pred, "--data", data, "--out", (dir / "eval").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.rfind("eval: n=64", 0) == 0);
  CHECK(std::filesystem::exists(dir / "eval" / "report.json"));
  CHECK(std::filesystem::exists(dir / "eval" / "report.csv"));

  SUBCASE("resume continues to more epochs") {
    r = run(with({"train", "--data", data, "--out", (dir / "run2").string(), "--epochs", "3", "--batch-size", "32",
                  "--resume", run_dir + "/final.mfmc"},
                 kTinyModel));
    CHECK_MESSAGE(r.code == 0, r.err);
    const std::string log = read_file(dir / "run2" / "loss_log.csv");
    CHECK(std::count(log.begin(), log.end(), '\n') == 4);
  }
  SUBCASE("diffusion mapper trains and samples") {
    r = run(with({"train", "--data", data, "--out", (dir / "diff").string(), "--mapper", "diff", "--epochs", "1",
                  "--diff-steps", "20", "--diff-sample-steps", "4"},
                 kTinyModel));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    r = run({"infer", "--model", (dir / "diff" / "final.mfmc").string(), "--data", data, "--out", pred,
             "--diff-sample-steps", "4"});
    CHECK_MESSAGE(r.code == 0, r.err);
    CHECK(load_model(dir / "diff" / "final.mfmc").diff_steps == 20);
    r = run({"infer", "--model", (dir / "diff" / "final.mfmc").string(), "--data", data, "--out", pred,
             "--diff-sample-steps", "21"});
    CHECK(r.code == 2);
  }
}

TEST_CASE("error exit codes") {
  TempDir dir("cli");
  Result r = run({"train", "--data", (dir / "nope").string(), "--out", (dir / "x").string(), "--fusion", "bogus"});
  CHECK(r.code == 2);
  CHECK(r.err.find("fusion") != std::string::npos);

  r = run({"train", "--data", (dir / "nope").string(), "--out", (dir / "x").string()});
  CHECK(r.code == 3);

  r = run({"gen-data", "--n-train", "0", "--out", (dir / "d").string()});
  CHECK(r.code == 2);

  r = run({"frobnicate"});
  CHECK(r.code == 2);

  r = run({"train", "--epochs", "many"});
  CHECK(r.code == 2);

  write_file_atomic(dir / "garbage.mfmt", "not a tensor");
  run({"gen-data", "--n-train", "8", "--n-test", "4", "--out", (dir / "d").string()});
  r = run({"eval", "--pred", (dir / "garbage.mfmt").string(), "--data", (dir / "d").string(), "--out",
           (dir / "e").string()});
  CHECK(r.code == 3);
}

TEST_CASE("config file sections feed options and flags win") {
  TempDir dir("cli");
  write_file_atomic(dir / "cfg.json", R"({"gen-data": {"n-train": 12, "n-test": 6, "seed": 5}})");
  const std::string cfg = (dir / "cfg.json").string();
  Result r = run({"gen-data", "--config", cfg, "--out", (dir / "a").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  Dataset d = load_dataset(dir / "a");
  CHECK(d.train.size() == 12);
  CHECK(d.world().seed == 5);

  r = run({"gen-data", "--config", cfg, "--n-train", "10", "--out", (dir / "b").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(load_dataset(dir / "b").train.size() == 10);

  write_file_atomic(dir / "bad.json", R"({"gen-data": {"n-trian": 12}})");
  r = run({"gen-data", "--config", (dir / "bad.json").string(), "--out", (dir / "c").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("n-trian") != std::string::npos);

  write_file_atomic(dir / "sec.json", R"({"warp": {}})");
  r = run({"gen-data", "--config", (dir / "sec.json").string(), "--out", (dir / "c").string()});
  CHECK(r.code == 2);
}

TEST_CASE("ablation command writes its tables") {
  TempDir dir("cli");
  const std::string data = (dir / "data").string();
  REQUIRE(run({"gen-data", "--n-train", "48", "--n-test", "64", "--out", data}).code == 0);
  const Result r = run(with({"ablate", "--suite", "fusion", "--data", data, "--out", (dir / "abl").string(),
                             "--seeds", "17,18", "--epochs", "1", "--batch-size", "48"},
                            kTinyModel));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string csv = read_file(dir / "abl" / "ablation.csv");
  CHECK(csv.rfind("suite,variant,seed,final_train_mse,", 0) == 0);
  // 3 variants x 2 seeds + 3 mean rows + header.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);
  CHECK(csv.find("fusion,time_cat,mean,") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "abl" / "curves.csv"));
}
