#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "aio/data/dataset.hpp"
#include "aio/data/hash.hpp"
#include "aio/data/synth.hpp"
#include "doctest.h"

using namespace aio;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

Scenario red_circle_right() {
  Scenario s;
  s.id = "manual";
  s.seed = 3;
  s.frames = 20;
  s.target.shape = ShapeKind::circle;
  s.target.color = 0;
  s.target.motion = Motion::right;
  s.target.size = 14;
  s.target.x0 = 20;
  s.target.y0 = 60;
  s.target.vx = 1.5;
  s.clutter = 0;
  return s;
}

}  // namespace

TEST_CASE("grammar") {
  auto words = grammar_words();
  CHECK(words.size() == 17);
  CHECK(std::is_sorted(words.begin(), words.end()));
  auto vocab = grammar_vocab();
  auto s = red_circle_right();
  CHECK(sentence_prompt(s.target) == "red circle moving right");
  CHECK(class_prompt(s.target) == "circle");
  auto tp = tokenize(sentence_prompt(s.target), vocab, 16);
  for (std::size_t i = 1; i < 5; ++i) CHECK(tp.ids[i] >= Vocab::kFirstWord);
}

TEST_CASE("motion model") {
  auto s = red_circle_right();
  s.validate();
  double prev = -1;
  for (std::size_t t = 0; t < 20; ++t) {
    const auto b = s.target.box_at(t);
    CHECK(b.cx > prev);
    prev = b.cx;
  }
  s.target.vx = 10;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("random scenarios stay valid") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    ScenarioOptions opt;
    opt.twin = seed % 2 == 0;
    auto s = random_scenario("s", seed, opt);
    CHECK_NOTHROW(s.validate());
    CHECK((s.twin() != nullptr) == opt.twin);
    for (std::size_t t = 0; t < s.frames; ++t) {
      const auto b = s.target.box_at(t);
      CHECK(b.w >= 4);
      CHECK(b.h >= 4);
    }
    if (const auto* tw = s.twin()) {
      CHECK(tw->shape == s.target.shape);
      CHECK(tw->color != s.target.color);
      for (const auto& d : s.distractors)
        if (!d.twin) CHECK_FALSE((d.shape == s.target.shape && d.color == s.target.color));
    }
  }
}

TEST_CASE("twin objects share their mask") {
  ScenarioOptions opt;
  opt.twin = true;
  opt.max_extra_distractors = 0;
  auto s = random_scenario("t", 11, opt);
  s.clutter = 0;
  const auto* tw = s.twin();
  REQUIRE(tw);
  auto img = render_frame(s, 5);
  const auto& pal = palette();
  auto mask = [&](std::size_t color, const BBox& b) {
    std::vector<int> m;
    const auto& c = pal[color];
    for (long y = long(std::floor(b.y0())); y < long(std::ceil(b.y1())); ++y)
      for (long x = long(std::floor(b.x0())); x < long(std::ceil(b.x1())); ++x) {
        const auto* p = img.pixel(std::size_t(x), std::size_t(y));
        m.push_back(p[0] == c.r && p[1] == c.g && p[2] == c.b);
      }
    return m;
  };
  const auto a = mask(s.target.color, s.target.box_at(5)), b = mask(tw->color, tw->box_at(5));
  CHECK(a == b);
  CHECK(std::count(a.begin(), a.end(), 1) > 20);
}

TEST_CASE("generation is a pure function of the seed") {
  TempDir one("aio_gen_a"), two("aio_gen_b");
  DatasetOptions opt;
  opt.seed = 5;
  opt.train = 2;
  opt.eval = 1;
  opt.twin = 1;
  opt.frames = 6;
  auto recs = generate_dataset(one.path, opt);
  generate_dataset(two.path, opt);
  CHECK(tree_digest(one.path) == tree_digest(two.path));
  CHECK(sha256_file(one.path / "twin_000" / "img" / "000001.ppm") ==
        sha256_file(two.path / "twin_000" / "img" / "000001.ppm"));
  opt.seed = 6;
  generate_dataset(two.path, opt);
  CHECK(tree_digest(one.path) != tree_digest(two.path));

  REQUIRE(recs.size() == 4);
  CHECK(recs[3].id == "twin_000");
  CHECK(recs[3].has_twin());
  CHECK(fs::exists(one.path / "train_000" / "img" / "000001.ppm"));
  CHECK(fs::exists(one.path / "vocab.txt"));
  auto back = read_lasot_format(one.path / "twin_000");
  CHECK(back.prompt == recs[3].prompt);
  CHECK(back.twin_prompt == recs[3].twin_prompt);
  REQUIRE(back.boxes.size() == 6);
  for (std::size_t t = 0; t < 6; ++t) {
    CHECK(back.boxes[t].cx == doctest::Approx(recs[3].boxes[t].cx).epsilon(1e-9));
    CHECK(back.twin_boxes[t].cy == doctest::Approx(recs[3].twin_boxes[t].cy).epsilon(1e-9));
  }
  auto view = back.twin_view();
  CHECK(view.prompt == back.twin_prompt);
  CHECK(list_sequences(one.path, {"train_"}).size() == 2);
  CHECK(list_sequences(one.path).size() == 4);
  CHECK(read_ppm(back.frames[0]).width == 128);
}

TEST_CASE("generate reports unwritable directories") {
  TempDir tmp("aio_gen_blocked");
  write(tmp.path / "file", "x");
  CHECK_THROWS_AS(generate(red_circle_right(), tmp.path / "file" / "seq"), IoError);
}

TEST_CASE("read_lasot_format") {
  TempDir tmp("aio_lasot");
  const auto seq = tmp.path / "seq";
  fs::create_directories(seq / "img");
  write_ppm(seq / "img" / "000001.ppm", Image(4, 4));
  write(seq / "groundtruth.txt", "10,20,30,40\n");
  SUBCASE("corner to centre") {
    auto rec = read_lasot_format(seq);
    CHECK(rec.boxes[0].cx == 25);
    CHECK(rec.boxes[0].cy == 40);
    CHECK(rec.boxes[0].w == 30);
    CHECK(rec.boxes[0].h == 40);
    CHECK(rec.prompt.empty());
  }
  SUBCASE("empty groundtruth") {
    write(seq / "groundtruth.txt", "");
    CHECK_THROWS_AS(read_lasot_format(seq), ParseError);
  }
  SUBCASE("malformed line names the line") {
    write_ppm(seq / "img" / "000002.ppm", Image(4, 4));
    write(seq / "groundtruth.txt", "1,2,3,4\n5,6,seven,8\n");
    try {
      read_lasot_format(seq);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("groundtruth.txt:2") != std::string::npos);
    }
  }
  SUBCASE("prompt") {
    write(seq / "nlp.txt", "a white square\n");
    CHECK(read_lasot_format(seq).prompt == "a white square");
  }
}

TEST_CASE("crops") {
  Image img(40, 40);
  for (std::size_t y = 15; y < 25; ++y)
    for (std::size_t x = 15; x < 25; ++x) std::fill_n(img.pixel(x, y), 3, 255);
  const BBox box = BBox::from_xywh(15, 15, 10, 10);

  SUBCASE("template side is twice the box") {
    PairConfig cfg;
    auto t = template_crop(img, box, cfg);
    // 10 px of white at 32/20 magnification covers 16 x 16 output pixels.
    double white = 0;
    for (std::size_t i = 0; i < 32 * 32; ++i) white += (double(t[i]) + 1) / 2;
    CHECK(white == doctest::Approx(256).epsilon(0.02));
  }
  SUBCASE("identity resampling copies pixels") {
    CropMeta meta;
    auto c = crop_resize(img, 20, 20, 10, 10, &meta);
    CHECK(meta.origin_x == 15);
    for (auto v : c) CHECK(v == normalize_pixel(255));
    auto pad = crop_resize(img, 0, 0, 4, 4, nullptr);
    CHECK(pad[0] == normalize_pixel(0));
  }
  SUBCASE("pairs") {
    LoadedSequence seq;
    seq.record.boxes = {box, BBox::from_xywh(12, 14, 10, 10)};
    seq.record.prompt = "white square";
    seq.frames = {img, img};
    PairConfig cfg;
    auto p = make_pair(seq, 0, 0, 0, 0, cfg);
    CHECK(p.search_box.cx == doctest::Approx(32));
    CHECK(p.search_box.cy == doctest::Approx(32));
    CHECK(p.search_box.w == doctest::Approx(16));

    Rng rng(3);
    for (int k = 0; k < 20; ++k) {
      auto q = sample_pair(seq, rng, cfg);
      CHECK(q.template_frame != q.search_frame);
      CHECK(std::abs(q.search_box.cx - 32) <= 0.25 * 16 + 1e-9);
      const auto back = q.search_meta.to_image(q.search_box);
      const auto& gt = seq.record.boxes[q.search_frame];
      CHECK(std::abs(back.cx - gt.cx) <= 1e-5);
      CHECK(std::abs(back.cy - gt.cy) <= 1e-5);
      CHECK(std::abs(back.w - gt.w) <= 1e-5);
    }
  }
}
