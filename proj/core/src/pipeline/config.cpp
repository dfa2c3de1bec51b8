#include "aio/pipeline/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "aio/numcore/errors.hpp"

namespace aio::inline AIO_ABI {

namespace {

enum class Kind { integer, u64, real, boolean, text, sizes, choice };

struct Key {
  const char* name;
  Kind kind;
  const char* fallback;
  const char* help;
  const char* choices = "";  // '|' separated for Kind::choice
  bool architecture = false;
};

// clang-format off
const std::vector<Key>& keys() {
  static const std::vector<Key> k{
      {"seed", Kind::u64, "0", "master seed (AIO_SEED overrides)"},
      {"data_root", Kind::text, "data", "dataset directory"},
      {"vocab", Kind::text, "", "vocab file; empty uses <data_root>/vocab.txt or the grammar"},
      {"patch", Kind::integer, "8", "patch size P", "", true},
      {"search_size", Kind::integer, "64", "search crop side", "", true},
      {"template_size", Kind::integer, "32", "template crop side", "", true},
      {"dim", Kind::integer, "96", "embedding dim D", "", true},
      {"layers", Kind::integer, "4", "encoder layers L", "", true},
      {"heads", Kind::integer, "4", "attention heads h", "", true},
      {"ffn_ratio", Kind::integer, "4", "FFN width multiple", "", true},
      {"norm", Kind::choice, "post", "layernorm placement", "post|pre", true},
      {"mixup_shared", Kind::boolean, "true", "one mixup projection for both streams", "", true},
      {"language", Kind::boolean, "true", "inject language through modal mixup", "", true},
      {"text_len", Kind::integer, "16", "prompt length N_t", "", true},
      {"reduction", Kind::choice, "mean", "language token reduction", "mean|cls", true},
      {"mean_includes_cls", Kind::boolean, "true", "mean reduction includes the [CLS] row", "", true},
      {"head_channels", Kind::sizes, "64,64,32,16", "head conv widths", "", true},
      {"align_dim", Kind::integer, "64", "alignment space C", "", true},
      {"align_language_pool", Kind::choice, "mean", "language pooling for alignment", "mean|cls", true},
      {"tau", Kind::real, "0.5", "contrastive temperature"},
      {"denominator", Kind::choice, "standard", "InfoNCE denominator", "standard|literal"},
      {"lambda_giou", Kind::real, "2", "GIoU loss weight"},
      {"lambda_l1", Kind::real, "5", "L1 loss weight"},
      {"lambda_cma", Kind::real, "1", "cross-modal alignment weight"},
      {"lambda_ima", Kind::real, "1", "intra-modal alignment weight"},
      {"lr", Kind::real, "4e-4", "peak learning rate"},
      {"warmup", Kind::integer, "0", "linear warmup iterations"},
      {"weight_decay", Kind::real, "1e-4", "AdamW decoupled weight decay"},
      {"beta1", Kind::real, "0.9", "AdamW beta1"},
      {"beta2", Kind::real, "0.999", "AdamW beta2"},
      {"eps", Kind::real, "1e-8", "AdamW epsilon"},
      {"clip_norm", Kind::real, "1.0", "global gradient norm clip (0 disables)"},
      {"iters", Kind::integer, "2000", "training iterations"},
      {"batch", Kind::integer, "8", "videos per batch"},
      {"log_every", Kind::integer, "10", "loss log cadence"},
      {"checkpoint_every", Kind::integer, "500", "checkpoint cadence"},
      {"train_split", Kind::text, "train_", "comma-separated sequence prefixes used for training"},
      {"train_limit", Kind::integer, "0", "use only the first N training sequences (0 = all)"},
      {"eval_split", Kind::text, "eval_,twin_", "comma-separated sequence prefixes evaluated"},
      {"eval_limit", Kind::integer, "0", "evaluate only the first N matching sequences (0 = all)"},
      {"train_prompt", Kind::choice, "sentence", "training prompt mode", "sentence|class"},
      {"eval_prompt", Kind::choice, "sentence", "evaluation prompt mode", "sentence|class"},
      {"template_factor", Kind::real, "2", "template crop side over sqrt(w h)"},
      {"search_factor", Kind::real, "4", "search crop side over sqrt(w h)"},
      {"jitter", Kind::real, "0.25", "search centre jitter as a fraction of box size"},
      {"twin_centre", Kind::real, "1.0", "probability of centring a twin video's search crop between the twins"},
      {"permute_template", Kind::boolean, "true", "random RGB channel permutation of training templates"},
      {"twin_views", Kind::boolean, "true", "also train on twin sequences with the twin as target"},
      {"window", Kind::boolean, "true", "Hann window at decode"},
      {"window_weight", Kind::real, "0.49", "Hann window blend"},
  };
  return k;
}
// clang-format on

const Key& lookup(const std::string& name) {
  for (const auto& k : keys())
    if (name == k.name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  return std::string(s.substr(b, s.find_last_not_of(" \t\r") - b + 1));
}

template <class T>
bool parse_number(const std::string& s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

void check_value(const Key& k, const std::string& v) {
  const auto bad = [&](const std::string& what) {
    return ConfigError("config key '" + std::string(k.name) + "': " + what + ", got '" + v + "'");
  };
  switch (k.kind) {
    case Kind::integer: {
      std::int64_t x;
      if (!parse_number(v, x) || x < 0) throw bad("expected a non-negative integer");
      break;
    }
    case Kind::u64: {
      std::uint64_t x;
      if (!parse_number(v, x)) throw bad("expected an unsigned integer");
      break;
    }
    case Kind::real: {
      double x;
      if (!parse_number(v, x) || !std::isfinite(x)) throw bad("expected a finite number");
      break;
    }
    case Kind::boolean:
      if (v != "true" && v != "false") throw bad("expected true or false");
      break;
    case Kind::sizes: {
      std::stringstream ss(v);
      std::string part;
      std::size_t n = 0;
      while (std::getline(ss, part, ',')) {
        std::size_t x;
        if (!parse_number(trim(part), x) || x == 0) throw bad("expected comma-separated positive integers");
        ++n;
      }
      if (n == 0) throw bad("expected at least one value");
      break;
    }
    case Kind::choice: {
      std::stringstream ss(k.choices);
      std::string opt;
      while (std::getline(ss, opt, '|'))
        if (opt == v) return;
      throw bad(std::string("expected one of ") + k.choices);
    }
    case Kind::text: break;
  }
}

}  // namespace

Config::Config() {
  for (const auto& k : keys()) values_[k.name] = k.fallback;
}

Config Config::parse(std::string_view text, const std::string& source) {
  Config c;
  std::size_t line_no = 0;
  std::string line;
  std::istringstream in{std::string(text)};
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      c.set(trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

Config Config::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), file.string());
}

void Config::set(const std::string& key, const std::string& value) {
  const auto& k = lookup(key);
  check_value(k, value);
  values_[key] = value;
}

void Config::apply_environment() {
  if (const char* s = std::getenv("AIO_SEED"); s && *s) {
    try {
      set("seed", s);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("AIO_SEED: ") + e.what());
    }
  }
}

const std::string& Config::get(const std::string& key) const {
  lookup(key);
  return values_.at(key);
}

std::int64_t Config::get_int(const std::string& key) const {
  std::int64_t x = 0;
  parse_number(get(key), x);
  return x;
}

std::uint64_t Config::get_u64(const std::string& key) const {
  std::uint64_t x = 0;
  parse_number(get(key), x);
  return x;
}

double Config::get_real(const std::string& key) const {
  double x = 0;
  parse_number(get(key), x);
  return x;
}

bool Config::get_bool(const std::string& key) const { return get(key) == "true"; }

std::vector<std::size_t> Config::get_sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  std::stringstream ss(get(key));
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t x = 0;
    parse_number(trim(part), x);
    out.push_back(x);
  }
  return out;
}

std::string Config::dump() const {
  std::string s;
  for (const auto& k : keys()) s += std::string(k.name) + "=" + values_.at(k.name) + "\n";
  return s;
}

const std::vector<std::string>& Config::architecture_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& k : keys())
      if (k.architecture) v.emplace_back(k.name);
    return v;
  }();
  return names;
}

bool Config::known(const std::string& key) {
  return std::any_of(keys().begin(), keys().end(), [&](const Key& k) { return key == k.name; });
}

std::string Config::describe() {
  std::string s;
  for (const auto& k : keys()) s += std::string(k.name) + "=" + k.fallback + "  # " + k.help + "\n";
  return s;
}

}  // namespace aio::inline AIO_ABI
