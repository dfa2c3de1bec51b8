#include "recipe.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace aio::recipe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw RecipeError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json(const fs::path& file) {
  try {
    return json::parse(read_text(file));
  } catch (const json::exception& e) {
    throw RecipeError(file.string() + ": " + e.what());
  }
}

const json& at_path(const json& root, const std::string& path, const fs::path& file) {
  const json* node = &root;
  std::istringstream in(path);
  for (std::string part; std::getline(in, part, '.');) {
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(part);
      } catch (...) {
        throw RecipeError(file.string() + ": '" + part + "' is not an array index in " + path);
      }
      if (idx >= node->size()) throw RecipeError(file.string() + ": index " + part + " out of range in " + path);
      node = &(*node)[idx];
    } else if (node->is_object() && node->contains(part)) {
      node = &(*node)[part];
    } else {
      throw RecipeError(file.string() + ": no key '" + path + "'");
    }
  }
  return *node;
}

std::string render(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v.get<double>());
    return buf;
  }
  return v.dump();
}

bool compare(const json& v, const std::string& op, const std::string& rhs) {
  if (v.is_boolean()) {
    const bool want = rhs == "true";
    if (op == "==") return v.get<bool>() == want;
    if (op == "!=") return v.get<bool>() != want;
    throw RecipeError("operator " + op + " does not apply to booleans");
  }
  if (!v.is_number()) throw RecipeError("value " + v.dump() + " is not a number");
  const double a = v.get<double>(), b = std::stod(rhs);
  if (op == ">=") return a >= b;
  if (op == "<=") return a <= b;
  if (op == ">") return a > b;
  if (op == "<") return a < b;
  if (op == "==") return a == b;
  if (op == "!=") return a != b;
  throw RecipeError("unknown operator " + op);
}

// Every numeric leaf of `golden` must match `actual` within tol.
void golden_diff(const json& actual, const json& golden, const std::string& where, double tol,
                 std::vector<std::string>& bad) {
  if (golden.is_object()) {
    for (const auto& [k, g] : golden.items()) {
      const auto name = where.empty() ? k : where + "." + k;
      if (!actual.is_object() || !actual.contains(k)) {
        bad.push_back(name + " missing");
        continue;
      }
      golden_diff(actual[k], g, name, tol, bad);
    }
    return;
  }
  if (golden.is_number()) {
    if (!actual.is_number()) {
      bad.push_back(where + " not a number");
      return;
    }
    const double a = actual.get<double>(), g = golden.get<double>();
    if (!(std::abs(a - g) <= tol)) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%s = %.17g, golden %.17g", where.c_str(), a, g);
      bad.push_back(buf);
    }
    return;
  }
  if (actual != golden) bad.push_back(where + " = " + actual.dump() + ", golden " + golden.dump());
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

std::string same_content(const fs::path& a, const fs::path& b) {
  if (!fs::exists(a)) return a.string() + " missing";
  if (!fs::exists(b)) return b.string() + " missing";
  if (fs::is_directory(a) != fs::is_directory(b)) return "one of the two is a directory";
  if (!fs::is_directory(a)) return read_text(a) == read_text(b) ? "" : a.filename().string() + " differs";
  const auto fa = files_under(a), fb = files_under(b);
  if (fa != fb) return "file lists differ";
  for (const auto& f : fa)
    if (read_text(a / f) != read_text(b / f)) return f.string() + " differs";
  return "identical (" + std::to_string(fa.size()) + " files)";
}

CheckResult evaluate_check(const Step& s) {
  CheckResult r{s.text(), false, ""};
  const auto& w = s.words;
  auto need = [&](std::size_t n) {
    if (w.size() != n) throw RecipeError("check '" + s.text() + "' expects " + std::to_string(n - 1) + " arguments");
  };
  try {
    if (w.empty()) throw RecipeError("empty check");
    if (w[0] == "json") {
      need(5);
      const auto doc = load_json(w[1]);
      const auto& v = at_path(doc, w[2], w[1]);
      r.passed = compare(v, w[3], w[4]);
      r.detail = w[2] + " = " + render(v);
    } else if (w[0] == "all") {
      need(6);
      const auto doc = load_json(w[1]);
      const auto& arr = at_path(doc, w[2], w[1]);
      if (!arr.is_array() || arr.empty()) throw RecipeError(w[2] + " is not a non-empty array");
      r.passed = true;
      std::string failing;
      for (const auto& item : arr) {
        const auto& v = at_path(item, w[3], w[1]);
        if (!compare(v, w[4], w[5])) {
          r.passed = false;
          failing += (failing.empty() ? "" : ", ") + render(v);
        }
      }
      r.detail = r.passed ? std::to_string(arr.size()) + " entries" : "failing " + w[3] + ": " + failing;
    } else if (w[0] == "golden") {
      need(5);
      const auto doc = load_json(w[1]);
      const auto& actual = at_path(doc, w[2], w[1]);
      std::vector<std::string> bad;
      golden_diff(actual, load_json(w[3]), "", std::stod(w[4]), bad);
      r.passed = bad.empty();
      std::ostringstream d;
      for (std::size_t i = 0; i < bad.size(); ++i) d << (i ? "; " : "") << bad[i];
      r.detail = r.passed ? "matches " + fs::path(w[3]).filename().string() : d.str();
    } else if (w[0] == "same") {
      need(3);
      r.detail = same_content(w[1], w[2]);
      r.passed = r.detail.rfind("identical", 0) == 0 || r.detail.empty();
      if (r.detail.empty()) r.detail = "identical";
    } else {
      throw RecipeError("unknown check kind '" + w[0] + "'");
    }
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = e.what();
  }
  return r;
}

std::string shell_quote(const std::string& s) {
  if (s.find_first_of(" \t'\"$\\") == std::string::npos) return s;
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

// Runs through /bin/sh, echoing output as it arrives. Returns the exit code.
int run_command(const std::string& cmd, std::ostream& log, std::string& captured) {
  FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) throw RecipeError("cannot start: " + cmd);
  std::array<char, 4096> buf;
  while (std::fgets(buf.data(), int(buf.size()), pipe)) {
    log << "  | " << buf.data();
    log.flush();
    captured += buf.data();
  }
  const int status = ::pclose(pipe);
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20 && c != '\n' && c != '\t') out += ' ';
        else out += c;
    }
  }
  return out;
}

}  // namespace

std::string Step::text() const {
  std::string out;
  for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
  return out;
}

Recipe parse_recipe(const std::string& text, const fs::path& file) {
  Recipe r;
  r.file = file;
  std::istringstream in(text);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    const auto where = file.string() + ":" + std::to_string(n);
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw RecipeError(where + ": expected key = value");
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (value.empty()) throw RecipeError(where + ": empty value for '" + key + "'");
    if (key == "name") r.name = value;
    else if (key == "runtime") r.runtime = value;
    else if (key == "expect") r.expect = value;
    else if (key == "criterion") {
      try {
        r.criterion = std::stoi(value);
      } catch (...) {
        throw RecipeError(where + ": criterion must be an integer");
      }
    } else if (key == "requires") {
      const auto colon = value.find(" : ");
      r.prerequisites.push_back(colon == std::string::npos
                               ? Requirement{value, ""}
                               : Requirement{trim(value.substr(0, colon)), trim(value.substr(colon + 3))});
    } else if (key == "run") r.commands.push_back(value);
    else if (key == "check") r.checks.push_back({split_words(value)});
    else if (key == "report") {
      r.reports.push_back({split_words(value)});
      if (r.reports.back().words.size() != 3) throw RecipeError(where + ": report = <label> <file> <path>");
    } else if (key == "trend") {
      r.trends.push_back({split_words(value)});
      if (r.trends.back().words.size() < 4) throw RecipeError(where + ": trend = <label> <path> <file> <file>...");
    } else throw RecipeError(where + ": unknown key '" + key + "'");
  }
  if (r.name.empty()) throw RecipeError(file.string() + ": recipe has no name");
  if (r.expect.empty()) throw RecipeError(file.string() + ": recipe '" + r.name + "' states no expected outcome");
  if (r.checks.empty()) throw RecipeError(file.string() + ": recipe '" + r.name + "' has no checks");
  return r;
}

Recipe load_recipe(const fs::path& file) { return parse_recipe(read_text(file), file); }

std::vector<Recipe> load_recipes(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw RecipeError("recipe directory " + dir.string() + " not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".recipe") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Recipe> out;
  for (const auto& f : files) out.push_back(load_recipe(f));
  return out;
}

std::string substitute(const std::string& line, const Vars& vars) {
  std::string out;
  for (std::size_t i = 0; i < line.size();) {
    if (line[i] == '{') {
      const auto close = line.find('}', i);
      if (close != std::string::npos) {
        const auto key = line.substr(i + 1, close - i - 1);
        const auto it = vars.find(key);
        if (it == vars.end()) throw RecipeError("unknown placeholder {" + key + "} in: " + line);
        out += shell_quote(it->second);
        i = close + 1;
        continue;
      }
    }
    out += line[i++];
  }
  return out;
}

std::string json_value(const fs::path& file, const std::string& path) {
  const auto doc = load_json(file);
  return render(at_path(doc, path, file));
}

Outcome run(const Recipe& r, const RunOptions& opt, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  o.name = r.name;
  o.criterion = r.criterion;
  Vars vars = opt.vars;
  const auto work = opt.work_root / r.name;
  vars["work"] = work.string();
  auto sub = [&](const std::string& s) { return substitute(s, vars); };
  auto sub_words = [&](Step s) {
    for (auto& w : s.words) w = sub(w);
    // Unquote single-word substitutions for file access.
    for (auto& w : s.words)
      if (w.size() >= 2 && w.front() == '\'' && w.back() == '\'') w = w.substr(1, w.size() - 2);
    return s;
  };

  log << "== " << r.name;
  if (r.criterion) log << " (criterion " << r.criterion << ")";
  log << ": " << r.expect;
  if (!r.runtime.empty()) log << " [~" << r.runtime << "]";
  log << '\n';

  try {
    for (const auto& req : r.prerequisites) {
      const auto path = sub_words({{req.path}}).words[0];
      if (fs::exists(path)) continue;
      if (!opt.prepare || req.hint.empty()) {
        throw RecipeError("missing prerequisite " + path +
                          (req.hint.empty() ? "" : "; create it with: " + sub(req.hint)));
      }
      log << "$ " << sub(req.hint) << '\n';
      if (const int rc = run_command(sub(req.hint), log, o.output); rc != 0)
        throw RecipeError("prerequisite command failed with exit code " + std::to_string(rc));
    }
    fs::remove_all(work);
    fs::create_directories(work);
    for (const auto& c : r.commands) {
      const auto cmd = sub(c);
      log << "$ " << cmd << '\n';
      if (const int rc = run_command(cmd, log, o.output); rc != 0)
        throw RecipeError("command exited with code " + std::to_string(rc) + ": " + cmd);
    }
    o.passed = true;
    for (const auto& c : r.checks) {
      auto res = evaluate_check(sub_words(c));
      res.text = c.text();
      log << (res.passed ? "  ok   " : "  FAIL ") << res.text << "  [" << res.detail << "]\n";
      o.passed = o.passed && res.passed;
      o.checks.push_back(std::move(res));
    }
    for (const auto& rep : r.reports) {
      const auto s = sub_words(rep);
      std::string line;
      try {
        line = rep.words[0] + " = " + json_value(s.words[1], s.words[2]);
      } catch (const std::exception& e) {
        line = rep.words[0] + " unavailable: " + e.what();
      }
      log << "  report " << line << '\n';
      o.reports.push_back(line);
    }
    for (const auto& tr : r.trends) {
      const auto s = sub_words(tr);
      std::string line = tr.words[0] + ":";
      try {
        std::vector<double> v;
        for (std::size_t i = 2; i < s.words.size(); ++i) {
          const auto doc = load_json(s.words[i]);
          v.push_back(at_path(doc, s.words[1], s.words[i]).get<double>());
          char buf[32];
          std::snprintf(buf, sizeof buf, "%s%.4f", i == 2 ? " " : " -> ", v.back());
          line += buf;
        }
        line += v.back() > v.front() ? " (improves)" : v.back() < v.front() ? " (degrades)" : " (unchanged)";
      } catch (const std::exception& e) {
        line += std::string(" unavailable: ") + e.what();
      }
      log << "  report " << line << '\n';
      o.reports.push_back(line);
    }
  } catch (const std::exception& e) {
    o.passed = false;
    o.error = e.what();
    log << "  error: " << o.error << '\n';
  }
  o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  log << (o.passed ? "PASS " : "FAIL ") << r.name << " (" << static_cast<long>(std::lround(o.seconds)) << " s)\n";
  return o;
}

std::string junit_xml(const std::vector<Outcome>& outcomes, const std::string& suite) {
  std::size_t failures = 0;
  double total = 0;
  for (const auto& o : outcomes) {
    failures += !o.passed;
    total += o.seconds;
  }
  std::ostringstream x;
  x << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  x << "<testsuites tests=\"" << outcomes.size() << "\" failures=\"" << failures << "\" time=\"" << total << "\">\n";
  x << "  <testsuite name=\"" << xml_escape(suite) << "\" tests=\"" << outcomes.size() << "\" failures=\"" << failures
    << "\" time=\"" << total << "\">\n";
  for (const auto& o : outcomes) {
    x << "    <testcase classname=\"" << xml_escape(suite) << "\" name=\"" << xml_escape(o.name) << "\" time=\""
      << o.seconds << "\">\n";
    if (!o.passed) {
      std::string msg = o.error;
      for (const auto& c : o.checks)
        if (!c.passed) msg += (msg.empty() ? "" : "; ") + c.text + " [" + c.detail + "]";
      x << "      <failure message=\"" << xml_escape(msg) << "\"/>\n";
    }
    std::string out;
    for (const auto& c : o.checks) out += (c.passed ? "ok   " : "FAIL ") + c.text + "  [" + c.detail + "]\n";
    for (const auto& rep : o.reports) out += "report " + rep + "\n";
    x << "      <system-out>" << xml_escape(out) << "</system-out>\n";
    x << "    </testcase>\n";
  }
  x << "  </testsuite>\n</testsuites>\n";
  return x.str();
}

}  // namespace aio::recipe
