// One pass/fail line per acceptance criterion. Each criterion is checked by
// the single recipe that declares it; recipe output goes to <work>/acceptance.log.

#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "recipe.hpp"

namespace fs = std::filesystem;
using namespace aio::recipe;

namespace {

const std::map<int, std::string> kCriteria = {
    {1, "gradient fidelity"},      {2, "contrastive oracle equivalence"},
    {3, "mixup identity"},         {4, "loss hand-values"},
    {5, "metric oracle"},          {6, "overfit smoke test"},
    {7, "language disambiguation"}, {8, "determinism"},
};

std::string summarize(const Outcome& o) {
  std::string s;
  if (!o.error.empty()) s = o.error;
  for (const auto& c : o.checks)
    if (!c.passed || o.passed) s += (s.empty() ? "" : "; ") + c.detail;
  for (const auto& r : o.reports) s += (s.empty() ? "" : "; ") + r;
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Acceptance criteria"};
  std::vector<int> only;
  std::string work = "acceptance", junit, recipes = AIO_RECIPE_DIR, golden = AIO_GOLDEN_DIR, bin = AIO_BIN_DIR;
  bool verbose = false;
  cli.add_option("--criterion", only, "criteria to check (default all)")->check(CLI::Range(1, 8));
  cli.add_option("--work", work, "scratch directory")->capture_default_str();
  cli.add_option("--junit", junit, "write JUnit XML here");
  cli.add_option("--recipes", recipes, "recipe directory")->capture_default_str();
  cli.add_option("--golden", golden, "golden file directory")->capture_default_str();
  cli.add_option("--bin", bin, "directory holding aio and aio_probe")->capture_default_str();
  cli.add_flag("--verbose", verbose, "echo recipe output");
  CLI11_PARSE(cli, argc, argv);

  std::vector<Recipe> all;
  try {
    all = load_recipes(recipes);
  } catch (const std::exception& e) {
    std::cerr << "error: recipe: " << e.what() << '\n';
    return 1;
  }
  fs::create_directories(work);
  std::ofstream log_file(fs::path(work) / "acceptance.log");
  std::ostream& log = verbose ? std::cout : log_file;

  RunOptions opt;
  opt.work_root = work;
  opt.prepare = true;
  opt.vars = {{"aio", bin + "/aio"},
              {"probe", bin + "/aio_probe"},
              {"probe_f64", bin + "/aio_probe_f64"},
              {"golden", golden},
              {"data", (fs::path(work) / "data").string()}};

  std::vector<Outcome> outcomes;
  bool ok = true;
  for (const auto& [n, title] : kCriteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) continue;
    std::vector<const Recipe*> covering;
    for (const auto& r : all)
      if (r.criterion == n) covering.push_back(&r);
    std::cout << "criterion " << n << " " << title;
    if (covering.size() != 1) {
      std::cout << ": FAIL (covered by " << covering.size() << " recipes, expected exactly one)" << std::endl;
      ok = false;
      continue;
    }
    std::cout << " [" << covering[0]->name << "]" << std::flush;
    auto o = run(*covering[0], opt, log);
    log.flush();
    std::cout << ": " << (o.passed ? "PASS" : "FAIL") << " (" << summarize(o) << ")" << std::endl;
    ok = ok && o.passed;
    outcomes.push_back(std::move(o));
  }
  if (!junit.empty()) std::ofstream(junit) << junit_xml(outcomes, "acceptance");
  return ok ? 0 : 1;
}
