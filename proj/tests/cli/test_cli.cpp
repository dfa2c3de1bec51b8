// Runs the installed-shape `aio` binary as a subprocess.

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path& scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "aio_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Result aio(const std::string& args, const std::string& env = "") {
  const auto out = scratch() / "stdout.txt", err = scratch() / "stderr.txt";
  const std::string cmd =
      env + " " + AIO_EXE + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::size_t lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

void expect_one_line_error(const Result& r, const std::string& kind) {
  CHECK(r.code != 0);
  CHECK(lines(r.err) == 1);
  CHECK(r.err.rfind("error: " + kind + ": ", 0) == 0);
}

// Small dataset and an untrained checkpoint shared by the tests below.
const fs::path& dataset() {
  static const fs::path d = [] {
    auto p = scratch() / "data";
    REQUIRE(aio("generate --out " + p.string() + " --seed 3 --train 2 --eval 1 --frames 6 --twin-suite 1").code == 0);
    return p;
  }();
  return d;
}

const fs::path& checkpoint() {
  static const fs::path c = [] {
    auto run = scratch() / "run";
    REQUIRE(aio("train --out " + run.string() + " --iters 0 data_root=" + dataset().string()).code == 0);
    return run / "final.aio";
  }();
  return c;
}

}  // namespace

TEST_CASE("usage errors are one line") {
  expect_one_line_error(aio(""), "usage");
  expect_one_line_error(aio("frobnicate"), "usage");
  expect_one_line_error(aio("track --checkpoint x.aio"), "usage");
}

TEST_CASE("config errors") {
  auto r = aio("train --out " + (scratch() / "bad").string() + " bogus_key=1");
  expect_one_line_error(r, "config");
  CHECK(r.err.find("bogus_key") != std::string::npos);
  expect_one_line_error(aio("train --config " + (scratch() / "absent.cfg").string()), "io");
  expect_one_line_error(aio("train --out " + (scratch() / "bad").string() + " batch=1"), "config");
}

TEST_CASE("missing checkpoint exits with code 2") {
  const auto missing = (scratch() / "nope.aio").string();
  for (const auto& cmd : {"eval --checkpoint " + missing,
                          "track --checkpoint " + missing + " --sequence " + (dataset() / "eval_000").string()}) {
    auto r = aio(cmd);
    CHECK(r.code == 2);
    CHECK(lines(r.err) == 1);
    CHECK(r.err.rfind("error: ", 0) == 0);
  }
}

TEST_CASE("generate honours AIO_SEED and refuses to overwrite") {
  const auto a = scratch() / "seed_env", b = scratch() / "seed_flag";
  auto ra = aio("generate --out " + a.string() + " --train 1 --eval 1 --frames 4", "AIO_SEED=9");
  auto rb = aio("generate --out " + b.string() + " --train 1 --eval 1 --frames 4 --seed 9");
  REQUIRE(ra.code == 0);
  REQUIRE(rb.code == 0);
  CHECK(ra.out == rb.out);
  CHECK(ra.out.find("dataset ") != std::string::npos);
  expect_one_line_error(aio("generate --out " + a.string() + " --train 1 --eval 1 --frames 4"), "io");
  CHECK(aio("generate --out " + a.string() + " --train 1 --eval 1 --frames 4 --force").code == 0);
}

TEST_CASE("train with zero iterations writes the run artifacts") {
  const auto run = checkpoint().parent_path();
  CHECK(fs::exists(run / "final.aio"));
  CHECK(fs::exists(run / "config.txt"));
  CHECK(slurp(run / "loss_log.csv") == "iter,L_total,L_cls,L_giou,L_1,L_cma,L_ima\n");
  auto summary = nlohmann::json::parse(slurp(run / "summary.json"));
  CHECK(summary["iterations"] == 0);
}

TEST_CASE("track writes one line per frame starting at the init box") {
  const auto seq = dataset() / "eval_000";
  const auto out = scratch() / "pred.txt";
  auto r = aio("track --checkpoint " + checkpoint().string() + " --sequence " + seq.string() + " --out " + out.string());
  REQUIRE(r.code == 0);
  const auto pred = slurp(out), gt = slurp(seq / "groundtruth.txt");
  CHECK(lines(pred) == lines(gt));
  CHECK(lines(pred) == 6);

  r = aio("track --checkpoint " + checkpoint().string() + " --sequence " + seq.string() + " --out " + out.string() +
          " --init-box 10,12,20,16 --prompt 'red circle'");
  REQUIRE(r.code == 0);
  CHECK(slurp(out).rfind("10.000,12.000,20.000,16.000\n", 0) == 0);
  expect_one_line_error(aio("track --checkpoint " + checkpoint().string() + " --sequence " + seq.string() +
                            " --init-box 1,2,3"),
                        "parse");
}

TEST_CASE("eval against the ground truth scores one") {
  const auto out = scratch() / "oracle_eval";
  auto r = aio("eval --oracle-gt --out " + out.string() + " data_root=" + dataset().string());
  REQUIRE(r.code == 0);
  auto m = nlohmann::json::parse(slurp(out / "metrics.json"));
  for (const char* k : {"P", "P_norm", "AUC", "cAUC", "ACC"}) CHECK(m["average"][k].get<double>() == 1.0);
  for (const char* f : {"success.csv", "precision.csv", "norm_precision.csv", "per_sequence.csv"})
    CHECK(fs::exists(out / f));
}

TEST_CASE("eval of a checkpoint writes boxes and the twin report") {
  const auto out = scratch() / "eval";
  auto r = aio("eval --checkpoint " + checkpoint().string() + " --out " + out.string());
  REQUIRE(r.code == 0);
  CHECK(fs::exists(out / "boxes" / "eval_000.txt"));
  auto twins = nlohmann::json::parse(slurp(out / "twins.json"));
  CHECK(twins.contains("correct_rate"));
  CHECK(twins.contains("flip_rate"));
}

TEST_CASE("grad-check rejects a bad step") {
  expect_one_line_error(aio("grad-check --step -1"), "config");
}
