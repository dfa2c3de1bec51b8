#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aio/data/dataset.hpp"
#include "aio/numcore/ops.hpp"
#include "aio/pipeline/checkpoint.hpp"
#include "aio/pipeline/track.hpp"
#include "aio/pipeline/train.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace aio;
namespace fs = std::filesystem;

namespace {

Config tiny_config() {
  Config c;
  c.set("dim", "16");
  c.set("layers", "1");
  c.set("heads", "2");
  c.set("ffn_ratio", "2");
  c.set("head_channels", "8,8,8,8");
  c.set("search_size", "32");
  c.set("template_size", "16");
  c.set("align_dim", "8");
  c.set("batch", "3");
  return c;
}

std::vector<LoadedSequence> videos(std::size_t n, std::uint64_t seed, bool twin = false) {
  ScenarioOptions so;
  so.frames = 6;
  so.twin = twin;
  std::vector<LoadedSequence> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(LoadedSequence::render(random_scenario("v" + std::to_string(i), seed + i, so)));
  return out;
}

struct Fixture {
  Config cfg = tiny_config();
  Vocab vocab = grammar_vocab();
  ModelConfig mc = ModelConfig::from(cfg, vocab.size());
  TrainOptions opt = TrainOptions::from(cfg);
  TrainingSet data = TrainingSet::from(videos(4, 100), true);

  Model model(std::uint64_t seed = 1) const {
    Rng rng(seed);
    return Model::create(mc, rng);
  }
  Batch batch(std::uint64_t seed = 5) const {
    Rng rng(seed);
    return sample_batch(data, vocab, mc, opt, rng);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("aio_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("total loss weighting") {
  LossWeights w;
  auto s = [](double v) { return Tensor::scalar(Real(v)); };
  CHECK(total_loss({s(0), s(0), s(0), s(0), s(0)}, w).item() == 0);
  const auto t = total_loss({s(0.1), s(0.2), s(0.04), s(1.0), s(0.5)}, w);
  CHECK(t.item() == doctest::Approx(2.2).epsilon(1e-6));
  LossWeights none{2, 5, 0, 0};
  CHECK(total_loss({s(0.1), s(0.2), s(0.04), s(1.0), s(0.5)}, none).item() == doctest::Approx(0.7).epsilon(1e-6));
  // Alignment terms left undefined contribute nothing.
  CHECK(total_loss({s(0.1), s(0.2), s(0.04), {}, {}}, w).item() == doctest::Approx(0.7).epsilon(1e-6));
}

TEST_CASE("config parsing") {
  auto c = Config::parse("# desk run\nseed = 7\nlr=1e-3  # peak\n\niters=5\n");
  CHECK(c.get_u64("seed") == 7);
  CHECK(c.get_real("lr") == 1e-3);
  CHECK(c.get_int("dim") == 96);
  CHECK_THROWS_AS(Config::parse("bogus=1\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse("dim=abc\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse("norm=middle\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse("seed\n"), ConfigError);
  try {
    Config::parse("seed=1\nunknown_key=2\n", "run.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("run.cfg:2") != std::string::npos);
  }
  CHECK(Config::parse(c.dump()) == c);
}

TEST_CASE("AIO_SEED overrides the configured seed") {
  auto c = Config::parse("seed=3\n");
  ::setenv("AIO_SEED", "99", 1);
  c.apply_environment();
  ::unsetenv("AIO_SEED");
  CHECK(c.get_u64("seed") == 99);
  ::setenv("AIO_SEED", "x", 1);
  CHECK_THROWS_AS(c.apply_environment(), ConfigError);
  ::unsetenv("AIO_SEED");
}

TEST_CASE("training needs contrastive negatives") {
  auto c = tiny_config();
  c.set("batch", "1");
  CHECK_THROWS_AS(TrainOptions::from(c), ConfigError);
}

TEST_CASE("batches draw distinct videos") {
  Fixture f;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto b = f.batch(s);
    CHECK(b.input.batch() == 3);
    CHECK(b.input.templates.shape() == Shape{3, 3, 16, 16});
    CHECK(b.input.searches.shape() == Shape{3, 3, 32, 32});
    CHECK(b.targets.heatmaps.shape() == Shape{3, 1, 4, 4});
  }
  // Twin views share their video; four videos always fill a batch of three.
  auto twins = TrainingSet::from(videos(2, 300, true), true);
  CHECK(twins.videos == 2);
  CHECK(twins.views.size() == 4);
  CHECK(twins.views[0].record.prompt == twins.views[1].record.twin_prompt);
}

TEST_CASE("AdamW descends a quadratic monotonically") {
  ParamStore store;
  Rng rng(4);
  std::vector<Real> start(10, 3), centre(10);
  for (auto& c : centre) c = Real(rng.uniform(-1, 1));
  auto x = store.add("x", Tensor({10}, start));
  const Tensor c({10}, centre);
  AdamWConfig cfg;
  cfg.weight_decay = 0;
  cfg.clip_norm = 0;
  AdamW opt(store, cfg);
  double prev = 1e300;
  for (int step = 0; step < 50; ++step) {
    store.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    const auto d = sub(x, c);
    const auto loss = sum(mul(d, d));
    CHECK(loss.item() < prev);
    prev = loss.item();
    tape.backward(loss);
    opt.step(store, 1e-2);
  }
  CHECK(opt.steps() == 50);
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(4e-4, 0, 100) == doctest::Approx(4e-4));
  CHECK(cosine_lr(4e-4, 50, 100) == doctest::Approx(2e-4));
  CHECK(cosine_lr(4e-4, 100, 100) == doctest::Approx(0).epsilon(1e-12));
  CHECK(cosine_lr(4e-4, 0, 100, 10) == doctest::Approx(4e-5));
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  Fixture f;
  auto m = f.model();
  auto before = f.model();
  auto cfg = f.opt.optim;
  cfg.weight_decay = 0;
  AdamW opt(m.params, cfg);
  train_step(m, opt, f.batch(), f.opt.weights, 0.0);
  const auto& a = m.params.entries();
  const auto& b = before.params.entries();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(testing::bit_equal(a[i].second, b[i].second));
}

TEST_CASE("a small step decreases the loss of its batch") {
  Fixture f;
  auto m = f.model();
  AdamW opt(m.params, f.opt.optim);
  const auto batch = f.batch();
  const auto before = evaluate_batch(m, batch, f.opt.weights);
  const auto during = train_step(m, opt, batch, f.opt.weights, 1e-4);
  const auto after = evaluate_batch(m, batch, f.opt.weights);
  CHECK(during.total == doctest::Approx(before.total).epsilon(1e-6));
  CHECK(after.total < before.total);
  CHECK(std::isfinite(during.cma));
  CHECK(during.cma > 0);
}

TEST_CASE("non-finite losses abort with the breakdown") {
  Fixture f;
  auto m = f.model();
  AdamW opt(m.params, f.opt.optim);
  auto w = m.head.branches[0].back().weight.mutable_values();
  w[0] = std::numeric_limits<Real>::quiet_NaN();
  const auto snapshot = m.params.entries()[0].second.detach();
  try {
    train_step(m, opt, f.batch(), f.opt.weights, 1e-3);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("cls=") != std::string::npos);
  }
  CHECK(testing::bit_equal(m.params.entries()[0].second, snapshot));
}

TEST_CASE("identical seeds give identical loss trajectories") {
  Fixture f;
  f.opt.iters = 4;
  f.opt.log_every = 1;
  std::vector<std::vector<double>> runs;
  for (int r = 0; r < 2; ++r) {
    TrainState st{f.model(), AdamW{}, 0};
    st.optimizer = AdamW(st.model.params, f.opt.optim);
    std::vector<double> losses;
    TrainHooks hooks;
    hooks.on_log = [&](std::uint64_t, const LossBreakdown& b) { losses.push_back(b.total); };
    train(st, f.data, f.vocab, f.opt, hooks);
    CHECK(st.iteration == 4);
    runs.push_back(losses);
  }
  CHECK(runs[0].size() == 4);
  CHECK(runs[0] == runs[1]);
}

TEST_CASE("resumed training replays the uninterrupted run") {
  Fixture f;
  f.opt.iters = 4;
  f.opt.log_every = 1;
  f.opt.checkpoint_every = 2;
  const auto dir = scratch("resume");
  const auto file = dir / "mid.aio";

  TrainState full{f.model(), AdamW{}, 0};
  full.optimizer = AdamW(full.model.params, f.opt.optim);
  std::vector<double> reference;
  TrainHooks hooks;
  hooks.on_log = [&](std::uint64_t, const LossBreakdown& b) { reference.push_back(b.total); };
  hooks.on_checkpoint = [&](std::uint64_t it) {
    if (it == 2)
      write_checkpoint(file, Checkpoint::capture(f.cfg, full.model, full.optimizer, it,
                                                 iteration_rng(f.opt.seed, it).state()));
  };
  train(full, f.data, f.vocab, f.opt, hooks);

  const auto ck = read_checkpoint(file);
  CHECK(ck.iteration == 2);
  CHECK(ck.rng == iteration_rng(f.opt.seed, 2).state());
  TrainState resumed{f.model(99), AdamW{}, 0};
  resumed.optimizer = AdamW(resumed.model.params, f.opt.optim);
  ck.restore(resumed.model, &resumed.optimizer);
  resumed.iteration = ck.iteration;
  std::vector<double> tail;
  TrainHooks log_tail;
  log_tail.on_log = [&](std::uint64_t, const LossBreakdown& b) { tail.push_back(b.total); };
  train(resumed, f.data, f.vocab, f.opt, log_tail);
  REQUIRE(tail.size() == 2);
  CHECK(tail[0] == reference[2]);
  CHECK(tail[1] == reference[3]);
  for (std::size_t i = 0; i < full.model.params.size(); ++i) {
    INFO(full.model.params.entries()[i].first);
    CHECK(testing::bit_equal(full.model.params.entries()[i].second, resumed.model.params.entries()[i].second));
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip is byte-identical") {
  Fixture f;
  auto m = f.model();
  AdamW opt(m.params, f.opt.optim);
  train_step(m, opt, f.batch(), f.opt.weights, 1e-3);
  const auto dir = scratch("checkpoint");
  const auto a = dir / "a.aio", b = dir / "b.aio";
  write_checkpoint(a, Checkpoint::capture(f.cfg, m, opt, 1, RngState{1, 2, 3}));
  const auto ck = read_checkpoint(a);
  write_checkpoint(b, ck);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a).substr(0, 4) == "AIO1");
  CHECK(ck.iteration == 1);
  CHECK(ck.rng == RngState{1, 2, 3});
  CHECK(ck.optimizer_steps == 1);
  CHECK(ck.vocab_size() == f.vocab.size());

  auto restored = f.model(7);
  AdamW opt2(restored.params, f.opt.optim);
  ck.restore(restored, &opt2);
  for (std::size_t i = 0; i < m.params.size(); ++i)
    CHECK(testing::bit_equal(m.params.entries()[i].second, restored.params.entries()[i].second));
  CHECK(opt2.steps() == 1);
  CHECK(opt2.first_moments() == opt.first_moments());

  SUBCASE("mismatched architecture fails fast") {
    auto other = f.cfg;
    other.set("dim", "32");
    CHECK_THROWS_AS(require_compatible(ck.config(), other), ConfigError);
    auto lr_only = f.cfg;
    lr_only.set("lr", "1e-2");
    CHECK_NOTHROW(require_compatible(ck.config(), lr_only));
    Rng rng(0);
    auto bigger = Model::create(ModelConfig::from(other, f.vocab.size()), rng);
    CHECK_THROWS_AS(ck.restore(bigger, nullptr), ConfigError);
  }
  SUBCASE("corrupt files are rejected") {
    auto bytes = slurp(a);
    std::ofstream(dir / "magic.aio", std::ios::binary) << ("XIO1" + bytes.substr(4));
    CHECK_THROWS_AS(read_checkpoint(dir / "magic.aio"), ParseError);
    std::ofstream(dir / "short.aio", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(read_checkpoint(dir / "short.aio"), ParseError);
    std::ofstream(dir / "long.aio", std::ios::binary) << bytes + "x";
    CHECK_THROWS_AS(read_checkpoint(dir / "long.aio"), ParseError);
    CHECK_THROWS_AS(read_checkpoint(dir / "missing.aio"), IoError);
  }
  fs::remove_all(dir);
}

TEST_CASE("tracking protocol") {
  Fixture f;
  const auto m = f.model();
  const auto seq = videos(1, 42)[0];
  const auto topt = TrackOptions::from(f.cfg);
  const auto prompt = tokenize(seq.record.prompt, f.vocab, f.mc.text_len);
  const auto init = seq.record.boxes[0];
  const auto full = track_sequence(m, seq.frames, init, prompt, topt);
  REQUIRE(full.size() == seq.frames.size());
  CHECK(full[0].cx == init.cx);
  CHECK(full[0].w == init.w);

  SUBCASE("causal: truncated inputs reproduce the prefix") {
    for (std::size_t k = 1; k < seq.frames.size(); ++k) {
      const auto part = track_sequence(m, std::span(seq.frames).first(k), init, prompt, topt);
      REQUIRE(part.size() == k);
      for (std::size_t t = 0; t < k; ++t) {
        CHECK(part[t].cx == full[t].cx);
        CHECK(part[t].cy == full[t].cy);
        CHECK(part[t].w == full[t].w);
        CHECK(part[t].h == full[t].h);
      }
    }
  }
  SUBCASE("later frames do not influence earlier outputs") {
    auto altered = seq.frames;
    for (auto& px : altered.back().rgb) px = 255;
    const auto other = track_sequence(m, altered, init, prompt, topt);
    for (std::size_t t = 0; t + 1 < full.size(); ++t) CHECK(other[t].cx == full[t].cx);
  }
}

TEST_CASE("crop chain follows the decode arithmetic") {
  // Zeroed output layers make every score, offset and size sigmoid(0) = 0.5.
  // With a 5x5 grid the Hann window peaks at the centre cell (2,2), whose
  // decoded centre (2 + 0.5) * 8 = 20 is the middle of the 40 px crop; the
  // size 0.5 * 40 px maps back to half the search side, 2 sqrt(w h).
  auto cfg = tiny_config();
  cfg.set("search_size", "40");
  const auto vocab = grammar_vocab();
  Rng rng(1);
  auto m = Model::create(ModelConfig::from(cfg, vocab.size()), rng);
  for (auto& branch : m.head.branches) {
    auto w = branch.back().weight.mutable_values();
    std::fill(w.begin(), w.end(), Real(0));
    auto b = branch.back().bias.mutable_values();
    std::fill(b.begin(), b.end(), Real(0));
  }
  const Image frame(128, 128, 90);
  const std::vector<Image> frames(4, frame);
  const auto init = BBox::from_xywh(59, 60, 10, 8);
  const auto out = track_sequence(m, frames, init, tokenize("red circle", vocab, 16), TrackOptions::from(cfg));
  BBox prev = init;
  for (std::size_t t = 1; t < frames.size(); ++t) {
    const double side = 2 * std::sqrt(prev.w * prev.h);
    CHECK(out[t].cx == doctest::Approx(init.cx).epsilon(1e-9));
    CHECK(out[t].cy == doctest::Approx(init.cy).epsilon(1e-9));
    CHECK(out[t].w == doctest::Approx(side).epsilon(1e-9));
    CHECK(out[t].h == doctest::Approx(side).epsilon(1e-9));
    prev = out[t];
  }
}
