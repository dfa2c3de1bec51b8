#include "aio/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace aio::inline AIO_ABI {

namespace {

constexpr std::array<NamedColor, 8> kPalette{{{"red", 220, 40, 40},
                                              {"green", 40, 200, 60},
                                              {"blue", 50, 90, 230},
                                              {"yellow", 230, 210, 40},
                                              {"cyan", 40, 210, 210},
                                              {"magenta", 210, 50, 210},
                                              {"orange", 240, 140, 30},
                                              {"white", 235, 235, 235}}};

constexpr std::uint64_t kScenarioStream = 1;
constexpr std::uint64_t kClutterStream = 2;
constexpr std::uint64_t kNoiseStream = 1000;

double tri(double u) { return 1 - 4 * std::abs(u + 0.25 - std::floor(u + 0.25) - 0.5); }

double round3(double v) { return std::round(v * 1000) / 1000; }

BBox rounded(const BBox& b) { return BBox::from_xywh(round3(b.x0()), round3(b.y0()), round3(b.w), round3(b.h)); }

bool inside(const ObjectSpec& o, std::size_t frames, double canvas) {
  for (std::size_t t = 0; t < frames; ++t) {
    const auto b = o.box_at(t);
    if (b.x0() < 0 || b.y0() < 0 || b.x1() > canvas || b.y1() > canvas) return false;
  }
  return true;
}

bool horizontal(Motion m) { return m == Motion::left || m == Motion::right || m == Motion::zigzag; }

ObjectSpec random_object(Rng& rng, double canvas) {
  ObjectSpec o;
  o.shape = static_cast<ShapeKind>(rng.below(3));
  o.color = rng.below(kPalette.size());
  o.motion = static_cast<Motion>(rng.below(5));
  o.size = std::round(rng.uniform(12, 20));
  const double speed = rng.uniform(0.6, 1.8);
  switch (o.motion) {
    case Motion::left: o.vx = -speed; break;
    case Motion::right: o.vx = speed; break;
    case Motion::up: o.vy = -speed; break;
    case Motion::down: o.vy = speed; break;
    case Motion::zigzag:
      o.vx = rng.bernoulli(0.5) ? speed : -speed;
      o.zigzag_amplitude = rng.uniform(6, 14);
      o.zigzag_period = rng.uniform(10, 20);
      break;
  }
  o.x0 = rng.uniform(0, canvas);
  o.y0 = rng.uniform(0, canvas);
  return o;
}

struct Rect {
  std::size_t x, y, w, h;
  std::array<std::uint8_t, 3> rgb;
};

double overlap(const Rect& r, const BBox& b) {
  const double iw = std::max(0.0, std::min(double(r.x + r.w), b.x1()) - std::max(double(r.x), b.x0()));
  const double ih = std::max(0.0, std::min(double(r.y + r.h), b.y1()) - std::max(double(r.y), b.y0()));
  return iw * ih;
}

std::vector<Rect> clutter_rects(const Scenario& s) {
  Rng rng(s.seed, kClutterStream);
  const auto count = static_cast<std::size_t>(std::lround(s.clutter * 10));
  const auto first = s.target.box_at(0);
  std::vector<Rect> out;
  for (std::size_t k = 0; k < count; ++k) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      Rect r;
      r.w = 6 + rng.below(25);
      r.h = 6 + rng.below(25);
      r.x = rng.below(s.canvas - r.w + 1);
      r.y = rng.below(s.canvas - r.h + 1);
      for (auto& c : r.rgb) c = std::uint8_t(30 + rng.below(60));
      if (overlap(r, first) <= 0.3 * first.area()) {
        out.push_back(r);
        break;
      }
    }
  }
  return out;
}

bool covers(const ObjectSpec& o, const BBox& b, double px, double py) {
  switch (o.shape) {
    case ShapeKind::square: return px >= b.x0() && px < b.x1() && py >= b.y0() && py < b.y1();
    case ShapeKind::circle: {
      const double dx = px - b.cx, dy = py - b.cy, r = o.size / 2;
      return dx * dx + dy * dy <= r * r;
    }
    case ShapeKind::triangle:
      return py >= b.y0() && py < b.y1() && std::abs(px - b.cx) <= (py - b.y0()) / 2;
  }
  return false;
}

void draw(Image& img, const ObjectSpec& o, std::size_t frame) {
  const auto b = o.box_at(frame);
  const auto& c = kPalette[o.color];
  const long x_lo = std::max(0L, long(std::floor(b.x0()))), x_hi = std::min(long(img.width), long(std::ceil(b.x1())));
  const long y_lo = std::max(0L, long(std::floor(b.y0()))), y_hi = std::min(long(img.height), long(std::ceil(b.y1())));
  for (long y = y_lo; y < y_hi; ++y)
    for (long x = x_lo; x < x_hi; ++x)
      if (covers(o, b, double(x) + 0.5, double(y) + 0.5)) {
        auto* p = img.pixel(std::size_t(x), std::size_t(y));
        p[0] = c.r, p[1] = c.g, p[2] = c.b;
      }
}

nlohmann::json object_json(const ObjectSpec& o) {
  return {{"shape", shape_name(o.shape)}, {"color", kPalette[o.color].name}, {"motion", motion_name(o.motion)},
          {"size", o.size},          {"x0", round3(o.x0)},                {"y0", round3(o.y0)},
          {"vx", round3(o.vx)},      {"vy", round3(o.vy)},                {"zigzag_amplitude", round3(o.zigzag_amplitude)},
          {"zigzag_period", round3(o.zigzag_period)}, {"twin", o.twin}};
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("short write to " + file.string());
}

std::string box_lines(const std::vector<BBox>& boxes) {
  std::string s;
  char line[128];
  for (const auto& b : boxes) {
    std::snprintf(line, sizeof line, "%.3f,%.3f,%.3f,%.3f\n", b.x0(), b.y0(), b.w, b.h);
    s += line;
  }
  return s;
}

}  // namespace

std::span<const NamedColor> palette() { return kPalette; }

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
  }
  return "?";
}

const char* motion_name(Motion m) {
  switch (m) {
    case Motion::left: return "left";
    case Motion::right: return "right";
    case Motion::up: return "up";
    case Motion::down: return "down";
    case Motion::zigzag: return "zigzag";
  }
  return "?";
}

BBox ObjectSpec::box_at(std::size_t frame) const {
  const double t = double(frame);
  const double cy = y0 + vy * t + zigzag_amplitude * tri(t / zigzag_period);
  return {x0 + vx * t, cy, size, size, Frame::image};
}

std::string sentence_prompt(const ObjectSpec& o) {
  return std::string(kPalette[o.color].name) + " " + shape_name(o.shape) + " moving " + motion_name(o.motion);
}

std::string class_prompt(const ObjectSpec& o) { return shape_name(o.shape); }

std::vector<std::string> grammar_words() {
  std::vector<std::string> w{"moving"};
  for (const auto& c : kPalette) w.emplace_back(c.name);
  for (int s = 0; s < 3; ++s) w.emplace_back(shape_name(static_cast<ShapeKind>(s)));
  for (int m = 0; m < 5; ++m) w.emplace_back(motion_name(static_cast<Motion>(m)));
  std::sort(w.begin(), w.end());
  return w;
}

Vocab grammar_vocab() { return Vocab(grammar_words()); }

void Scenario::validate() const {
  if (frames < 2 || canvas < 16) throw ConfigError("scenario needs at least 2 frames and a 16 px canvas");
  if (!(clutter >= 0 && clutter <= 1)) throw ConfigError("clutter level must lie in [0, 1]");
  if (!inside(target, frames, double(canvas))) throw ConfigError("target leaves the canvas in scenario " + id);
  if (distractors.size() > 4) throw ConfigError("at most 4 distractors");
  for (const auto& d : distractors) {
    if (!inside(d, frames, double(canvas))) throw ConfigError("distractor leaves the canvas in scenario " + id);
    if (d.twin && (d.shape != target.shape || d.size != target.size || d.color == target.color ||
                   d.motion != target.motion)) {
      throw ConfigError("twin must differ from the target in color only");
    }
  }
}

const ObjectSpec* Scenario::twin() const {
  for (const auto& d : distractors)
    if (d.twin) return &d;
  return nullptr;
}

Scenario random_scenario(const std::string& id, std::uint64_t seed, const ScenarioOptions& opt) {
  Rng rng(seed, kScenarioStream);
  const double canvas = double(opt.canvas);
  Scenario s;
  s.id = id;
  s.seed = seed;
  s.frames = opt.frames;
  s.canvas = opt.canvas;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 100000) throw ConfigError("could not place objects for scenario " + id);
    s.distractors.clear();
    s.target = random_object(rng, canvas);
    if (!inside(s.target, s.frames, canvas)) continue;
    if (opt.twin) {
      ObjectSpec twin = s.target;
      twin.twin = true;
      twin.color = (s.target.color + 1 + rng.below(kPalette.size() - 1)) % kPalette.size();
      // Integer offset keeps the rasterised masks identical.
      const double offset = std::round(1.6 * s.target.size) * (rng.bernoulli(0.5) ? 1 : -1);
      (horizontal(s.target.motion) ? twin.y0 : twin.x0) += offset;
      if (!inside(twin, s.frames, canvas)) continue;
      s.distractors.push_back(twin);
    }
    break;
  }
  const auto extra = rng.below(opt.max_extra_distractors + 1);
  for (std::size_t k = 0; k < extra && s.distractors.size() < 4; ++k) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      auto d = random_object(rng, canvas);
      const bool same_as_target = d.shape == s.target.shape && d.color == s.target.color;
      const auto* tw = s.twin();
      const bool same_as_twin = tw && d.shape == tw->shape && d.color == tw->color;
      if (same_as_target || same_as_twin || !inside(d, s.frames, canvas)) continue;
      s.distractors.push_back(d);
      break;
    }
  }
  s.clutter = rng.uniform(0, opt.max_clutter);
  s.validate();
  return s;
}

Image render_frame(const Scenario& s, std::size_t frame) {
  Image img(s.canvas, s.canvas);
  Rng noise(s.seed, kNoiseStream + frame);
  for (auto& v : img.rgb) v = std::uint8_t(18 + noise.below(10));
  for (const auto& r : clutter_rects(s))
    for (std::size_t y = r.y; y < r.y + r.h; ++y)
      for (std::size_t x = r.x; x < r.x + r.w; ++x) std::copy(r.rgb.begin(), r.rgb.end(), img.pixel(x, y));
  for (const auto& d : s.distractors) draw(img, d, frame);
  draw(img, s.target, frame);
  return img;
}

SequenceRecord SequenceRecord::twin_view() const {
  if (!has_twin()) throw ContractError("sequence " + id + " has no twin");
  SequenceRecord r = *this;
  r.id = id + "#twin";
  std::swap(r.boxes, r.twin_boxes);
  std::swap(r.prompt, r.twin_prompt);
  return r;
}

SequenceRecord scenario_record(const Scenario& s) {
  SequenceRecord rec;
  rec.id = s.id;
  rec.prompt = sentence_prompt(s.target);
  rec.class_name = class_prompt(s.target);
  const auto* twin = s.twin();
  if (twin) rec.twin_prompt = sentence_prompt(*twin);
  for (std::size_t t = 0; t < s.frames; ++t) {
    rec.boxes.push_back(rounded(s.target.box_at(t)));
    if (twin) rec.twin_boxes.push_back(rounded(twin->box_at(t)));
  }
  return rec;
}

SequenceRecord generate(const Scenario& s, const std::filesystem::path& dir) {
  s.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir / "img", ec);
  if (ec) throw IoError("cannot create " + (dir / "img").string() + ": " + ec.message());

  SequenceRecord rec = scenario_record(s);
  rec.dir = dir;
  const auto* twin = s.twin();
  for (std::size_t t = 0; t < s.frames; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.ppm", t + 1);
    rec.frames.push_back(dir / "img" / name);
    write_ppm(rec.frames.back(), render_frame(s, t));
  }
  write_text(dir / "groundtruth.txt", box_lines(rec.boxes));
  write_text(dir / "nlp.txt", rec.prompt + "\n");

  nlohmann::json meta{{"id", s.id},          {"seed", s.seed},       {"frames", s.frames},
                      {"canvas", s.canvas},  {"clutter", round3(s.clutter)}, {"prompt", rec.prompt},
                      {"class_name", rec.class_name}, {"target", object_json(s.target)}};
  meta["distractors"] = nlohmann::json::array();
  for (const auto& d : s.distractors) meta["distractors"].push_back(object_json(d));
  if (twin) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : rec.twin_boxes) boxes.push_back({b.x0(), b.y0(), b.w, b.h});
    meta["twin"] = {{"prompt", rec.twin_prompt}, {"boxes", boxes}};
  }
  write_text(dir / "meta.json", meta.dump(2) + "\n");
  return rec;
}

std::vector<SequenceRecord> generate_dataset(const std::filesystem::path& root, const DatasetOptions& opt) {
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  grammar_vocab().save(root / "vocab.txt");

  struct Split {
    const char* prefix;
    std::size_t count;
    std::uint64_t tag;
    bool always_twin;
  };
  const Split splits[] = {{"train", opt.train, 1, false}, {"eval", opt.eval, 2, false}, {"twin", opt.twin, 3, true}};
  std::vector<SequenceRecord> out;
  for (const auto& sp : splits) {
    for (std::size_t i = 0; i < sp.count; ++i) {
      const auto seed = mix_seed(opt.seed, (sp.tag << 32) | i);
      ScenarioOptions so;
      so.frames = opt.frames;
      so.canvas = opt.canvas;
      so.twin = sp.always_twin || Rng(seed, 0).bernoulli(0.5);
      so.max_extra_distractors = sp.always_twin ? 0 : 2;
      char id[64];
      std::snprintf(id, sizeof id, "%s_%03zu", sp.prefix, i);
      out.push_back(generate(random_scenario(id, seed, so), root / id));
    }
  }
  return out;
}

}  // namespace aio::inline AIO_ABI
