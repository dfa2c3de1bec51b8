#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace aio::recipe {

struct RecipeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A prerequisite path with the command that produces it.
struct Requirement {
  std::string path, hint;
};

/// One line of a recipe file after its keyword, split on whitespace.
struct Step {
  std::vector<std::string> words;
  std::string text() const;
};

/// Parsed recipe file. Keys:
///   name, criterion, runtime, expect   metadata
///   requires = <path> [: <command>]    checked before anything runs
///   run = <shell command>              executed in order; non-zero exit fails
///   check = <kind> <args...>           outcome checks
///   report = <label> <file> <path>     values printed with the result
///   trend = <label> <path> <file>...   a value across runs, in order
struct Recipe {
  std::string name, runtime, expect;
  int criterion = 0;
  std::vector<Requirement> prerequisites;
  std::vector<std::string> commands;
  std::vector<Step> checks, reports, trends;
  std::filesystem::path file;
};

Recipe parse_recipe(const std::string& text, const std::filesystem::path& file = "<recipe>");
Recipe load_recipe(const std::filesystem::path& file);
/// All *.recipe files in `dir`, sorted by name.
std::vector<Recipe> load_recipes(const std::filesystem::path& dir);

/// Placeholder values substituted as {key} in every recipe line. `work` is
/// the per-recipe scratch directory.
using Vars = std::map<std::string, std::string>;
std::string substitute(const std::string& line, const Vars& vars);

struct CheckResult {
  std::string text;
  bool passed = false;
  std::string detail;
};

struct Outcome {
  std::string name;
  int criterion = 0;
  bool passed = false;
  double seconds = 0;
  std::string error;  // set when a command or prerequisite failed
  std::vector<CheckResult> checks;
  std::vector<std::string> reports;
  std::string output;  // combined command output
};

struct RunOptions {
  Vars vars;
  std::filesystem::path work_root = "recipe-runs";
  /// Run a missing prerequisite's command instead of failing.
  bool prepare = false;
};

Outcome run(const Recipe& r, const RunOptions& opt, std::ostream& log);

/// One testcase per outcome.
std::string junit_xml(const std::vector<Outcome>& outcomes, const std::string& suite = "recipes");

/// Value at a dotted path ("average.AUC", "terms.0.passed") of a JSON file,
/// rendered as text.
std::string json_value(const std::filesystem::path& file, const std::string& path);

}  // namespace aio::recipe
