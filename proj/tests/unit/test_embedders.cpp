#include <filesystem>
#include <fstream>

#include "aio/embed/embedders.hpp"
#include "aio/numcore/ops.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace aio;
using testing::random_tensor;

TEST_CASE("tokenize") {
  const Vocab vocab({"red", "circle"});
  SUBCASE("empty prompt") {
    auto tp = tokenize("", vocab, 4);
    CHECK(tp.ids == std::vector<std::size_t>{1, 0, 0, 0});
    CHECK(tp.mask == std::vector<unsigned char>{1, 0, 0, 0});
  }
  SUBCASE("known words, mixed case") {
    auto tp = tokenize("Red circle", vocab, 4);
    CHECK(tp.ids == std::vector<std::size_t>{1, 3, 4, 0});
    CHECK(tp.mask == std::vector<unsigned char>{1, 1, 1, 0});
  }
  SUBCASE("unknown word") { CHECK(tokenize("xyzzy", vocab, 3).ids == std::vector<std::size_t>{1, 2, 0}); }
  SUBCASE("punctuation and truncation") {
    auto tp = tokenize("red, circle! red circle", vocab, 3);
    CHECK(tp.ids == std::vector<std::size_t>{1, 3, 4});
    CHECK(tp.mask == std::vector<unsigned char>{1, 1, 1});
  }
  SUBCASE("length below two is rejected") { CHECK_THROWS_AS(tokenize("red", vocab, 1), ContractError); }
  SUBCASE("idempotent through detokenize") {
    auto tp = tokenize("  RED   circle. ", vocab, 8);
    CHECK(detokenize(tp, vocab) == "red circle");
    CHECK(tokenize(detokenize(tp, vocab), vocab, 8).ids == tp.ids);
  }
}

TEST_CASE("vocab file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "aio_vocab_test.txt";
  Vocab({"blue", "square", "moving"}).save(path);
  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  CHECK(first == "blue");
  auto v = Vocab::load(path);
  CHECK(v.size() == 6);
  CHECK(v.id("square") == 4);
  CHECK(v.word(1) == "[CLS]");
  CHECK(v.id("nope") == Vocab::kUnk);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(Vocab({"a", "a"}), VocabError);
}

TEST_CASE("embed_text") {
  SUBCASE("all padding on a zero table") {
    TokenizedPrompt tp{{0, 0, 0}, {0, 0, 0}};
    auto e = embed_text(tp, Tensor::zeros({5, 4}));
    CHECK(e.shape() == Shape{3, 4});
    for (auto v : e.values()) CHECK(v == 0);
  }
  SUBCASE("one-hot table gives indicator rows") {
    std::vector<Real> eye(25, 0);
    for (int i = 0; i < 5; ++i) eye[i * 6] = 1;
    TokenizedPrompt tp{{1, 4, 2}, {1, 1, 1}};
    auto e = embed_text(tp, Tensor({5, 5}, eye));
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 5; ++c) CHECK(e.at(r, c) == (c == tp.ids[r] ? 1 : 0));
  }
  SUBCASE("random table matches direct indexing") {
    Rng rng(1);
    auto table = random_tensor({9, 6}, rng);
    TokenizedPrompt tp{{1, 8, 3, 3, 0}, {1, 1, 1, 1, 0}};
    auto e = embed_text(tp, table);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 6; ++c) CHECK(e.at(r, c) == table.at(tp.ids[r] * 6 + c));
  }
  SUBCASE("id out of range") {
    TokenizedPrompt tp{{1, 7}, {1, 1}};
    CHECK_THROWS_AS(embed_text(tp, Tensor::zeros({5, 2})), VocabError);
  }
}

namespace {

// Token k = sum over the k-th raster patch of pixel * proj row, plus bias and pos.
std::vector<double> patch_oracle(const Tensor& img, std::size_t p, const Tensor& proj, const Tensor& bias,
                                 const Tensor& pos) {
  const auto h = img.dim(1), w = img.dim(2), d = proj.dim(1);
  const auto gw = w / p, n = (h / p) * gw;
  std::vector<double> out(n * d, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = bias.defined() ? bias.at(j) : 0.0;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t py = 0; py < p; ++py)
          for (std::size_t px = 0; px < p; ++px) {
            const auto y = (k / gw) * p + py, x = (k % gw) * p + px;
            acc += double(img.at((c * h + y) * w + x)) * proj.at(((c * p + py) * p + px) * d + j);
          }
      out[k * d + j] = acc + pos.at(k * d + j);
    }
  return out;
}

}  // namespace

TEST_CASE("patch_embed") {
  Rng rng(2);
  const std::size_t p = 8, d = 12;
  auto proj = random_tensor({3 * p * p, d}, rng);
  SUBCASE("token count") {
    auto t = patch_embed(random_tensor({3, 32, 32}, rng), p, proj, Tensor{}, Tensor::zeros({16, d}));
    CHECK(t.shape() == Shape{16, d});
  }
  SUBCASE("zero image and zero pos") {
    auto t = patch_embed(Tensor::zeros({3, 32, 32}), p, proj, Tensor{}, Tensor::zeros({16, d}));
    for (auto v : t.values()) CHECK(v == 0);
  }
  SUBCASE("per-patch oracle") {
    auto img = random_tensor({3, 16, 24}, rng);
    auto bias = random_tensor({d}, rng), pos = random_tensor({6, d}, rng);
    auto t = patch_embed(img, p, proj, bias, pos);
    auto ref = patch_oracle(img, p, proj, bias, pos);
    REQUIRE(t.numel() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(t.at(i) == doctest::Approx(ref[i]).epsilon(1e-5));
  }
  SUBCASE("batched images match single images") {
    auto a = random_tensor({3, 16, 16}, rng), b = random_tensor({3, 16, 16}, rng);
    auto pos = random_tensor({4, d}, rng);
    auto batch = patch_embed(reshape(concat_rows({reshape(a, {1, a.numel()}), reshape(b, {1, b.numel()})}),
                                     {2, 3, 16, 16}),
                             p, proj, Tensor{}, pos);
    auto ta = patch_embed(a, p, proj, Tensor{}, pos), tb = patch_embed(b, p, proj, Tensor{}, pos);
    CHECK(testing::bit_equal(slice_rows(batch, 0, 4), ta));
    CHECK(testing::bit_equal(slice_rows(batch, 4, 4), tb));
  }
  SUBCASE("superposition with zero pos") {
    auto x = random_tensor({3, 16, 16}, rng), y = random_tensor({3, 16, 16}, rng);
    auto zero = Tensor::zeros({4, d});
    auto sum_xy = patch_embed(add(x, y), p, proj, Tensor{}, zero);
    auto sep = add(patch_embed(x, p, proj, Tensor{}, zero), patch_embed(y, p, proj, Tensor{}, zero));
    for (std::size_t i = 0; i < sep.numel(); ++i) CHECK(sum_xy.at(i) == doctest::Approx(sep.at(i)).epsilon(1e-5));
  }
  SUBCASE("indivisible size") {
    CHECK_THROWS_AS(patch_embed(Tensor::zeros({3, 30, 32}), p, proj, Tensor{}, Tensor::zeros({16, d})), ConfigError);
    CHECK_THROWS_AS((PatchConfig{8, 60, 32, 96}.validate()), ConfigError);
  }
}

TEST_CASE("reduce_language") {
  const std::vector<unsigned char> all{1, 1};
  SUBCASE("identical rows") {
    Tensor t({3, 2}, {0.5, -2, 0.5, -2, 0.5, -2});
    auto m = reduce_language(t, std::vector<unsigned char>{1, 1, 1}, LanguageReduction::mean);
    CHECK(m.at(0) == doctest::Approx(0.5));
    CHECK(m.at(1) == doctest::Approx(-2));
  }
  SUBCASE("cls is row 0") {
    Tensor t({2, 2}, {3, 4, 5, 6});
    auto c = reduce_language(t, all, LanguageReduction::cls);
    CHECK(c.at(0) == 3);
    CHECK(c.at(1) == 4);
  }
  SUBCASE("hand average") {
    auto m = reduce_language(Tensor({2, 2}, {1, 0, 0, 1}), all, LanguageReduction::mean);
    CHECK(m.at(0) == doctest::Approx(0.5));
    CHECK(m.at(1) == doctest::Approx(0.5));
  }
  SUBCASE("padding excluded and cls flag") {
    Tensor t({4, 1}, {10, 2, 4, 100});
    const std::vector<unsigned char> mask{1, 1, 1, 0};
    CHECK(reduce_language(t, mask, LanguageReduction::mean).at(0) == doctest::Approx(16.0 / 3));
    CHECK(reduce_language(t, mask, LanguageReduction::mean, false).at(0) == doctest::Approx(3));
  }
  SUBCASE("mean is invariant to word order") {
    Rng rng(3);
    auto t = random_tensor({4, 5}, rng);
    auto swapped = concat_rows({slice_rows(t, 0, 1), slice_rows(t, 2, 1), slice_rows(t, 1, 1), slice_rows(t, 3, 1)});
    const std::vector<unsigned char> mask{1, 1, 1, 0};
    auto a = reduce_language(t, mask, LanguageReduction::mean), b = reduce_language(swapped, mask, LanguageReduction::mean);
    for (std::size_t j = 0; j < 5; ++j) CHECK(a.at(j) == doctest::Approx(b.at(j)).epsilon(1e-6));
  }
  SUBCASE("empty mask") {
    CHECK_THROWS_AS(reduce_language(Tensor::zeros({2, 2}), std::vector<unsigned char>{0, 0}, LanguageReduction::mean),
                    ContractError);
  }
  SUBCASE("batched prompts") {
    Rng rng(4);
    auto t = random_tensor({6, 2}, rng);
    std::vector<TokenizedPrompt> prompts{{{1, 3, 0}, {1, 1, 0}}, {{1, 4, 5}, {1, 1, 1}}};
    auto b = reduce_language(t, prompts, LanguageReduction::mean);
    CHECK(b.shape() == Shape{2, 2});
    CHECK(b.at(0, 1) == doctest::Approx((t.at(0, 1) + t.at(1, 1)) / 2));
    CHECK(b.at(1, 0) == doctest::Approx((t.at(3, 0) + t.at(4, 0) + t.at(5, 0)) / 3));
  }
}
