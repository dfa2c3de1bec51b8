// Runs experiment recipes and reports to stdout and JUnit XML.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "recipe.hpp"

#ifndef AIO_RECIPE_DIR
#define AIO_RECIPE_DIR "recipes"
#endif
#ifndef AIO_GOLDEN_DIR
#define AIO_GOLDEN_DIR "tests/golden"
#endif
#ifndef AIO_BIN_DIR
#define AIO_BIN_DIR "."
#endif

namespace fs = std::filesystem;
using namespace aio::recipe;

int main(int argc, char** argv) {
  CLI::App cli{"Run experiment recipes"};
  std::vector<std::string> names;
  std::string recipes = AIO_RECIPE_DIR, golden = AIO_GOLDEN_DIR, data = "data", work = "recipe-runs", junit;
  std::string aio = std::string(AIO_BIN_DIR) + "/aio", probe = std::string(AIO_BIN_DIR) + "/aio_probe";
  bool all = false, list = false, prepare = false;
  cli.add_option("names", names, "recipes to run");
  cli.add_flag("--all", all, "run every recipe");
  cli.add_flag("--list", list, "list recipes and exit");
  cli.add_option("--recipes", recipes, "recipe directory")->capture_default_str();
  cli.add_option("--golden", golden, "golden file directory")->capture_default_str();
  cli.add_option("--data", data, "dataset root")->capture_default_str();
  cli.add_option("--work", work, "scratch directory")->capture_default_str();
  cli.add_option("--aio", aio, "aio executable")->capture_default_str();
  cli.add_option("--probe", probe, "aio_probe executable")->capture_default_str();
  cli.add_option("--junit", junit, "write JUnit XML here");
  cli.add_flag("--prepare", prepare, "create missing prerequisites instead of failing");
  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return cli.exit(e);
    std::cerr << "error: usage: " << e.what() << '\n';
    return 1;
  }

  try {
    const auto available = load_recipes(recipes);
    if (list) {
      for (const auto& r : available)
        std::cout << r.name << "\tcriterion " << r.criterion << "\t~" << r.runtime << "\t" << r.expect << '\n';
      return 0;
    }
    std::vector<Recipe> chosen;
    if (all) chosen = available;
    for (const auto& n : names) {
      auto it = std::find_if(available.begin(), available.end(), [&](const Recipe& r) { return r.name == n; });
      if (it == available.end()) throw RecipeError("no recipe named '" + n + "' in " + recipes);
      chosen.push_back(*it);
    }
    if (chosen.empty()) throw RecipeError("nothing to run; name recipes or pass --all");

    RunOptions opt;
    opt.work_root = work;
    opt.prepare = prepare;
    opt.vars = {{"aio", aio},
                {"probe", probe},
                {"probe_f64", probe + "_f64"},
                {"golden", golden},
                {"data", data}};
    std::vector<Outcome> outcomes;
    for (const auto& r : chosen) outcomes.push_back(run(r, opt, std::cout));

    std::size_t failed = 0;
    std::cout << "\nsummary\n";
    for (const auto& o : outcomes) {
      failed += !o.passed;
      std::cout << (o.passed ? "  PASS " : "  FAIL ") << o.name << '\n';
    }
    if (!junit.empty()) std::ofstream(junit) << junit_xml(outcomes);
    return failed ? 1 : 0;
  } catch (const std::exception& e) {
    std::cerr << "error: recipe: " << e.what() << '\n';
    return 1;
  }
}
