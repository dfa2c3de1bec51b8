#include "diagnostics.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "aio/data/dataset.hpp"
#include "aio/pipeline/train.hpp"
#include "json.hpp"

static_assert(sizeof(aio::Real) == 8, "the gradient suite needs the double-precision core");

namespace aio::diag {

namespace {

constexpr std::size_t kTerms = 6;
constexpr std::array<const char*, kTerms> kNames{"L_cls", "L_giou", "L_1", "L_cma", "L_ima", "L_total"};

std::array<Tensor, kTerms> losses(const Model& m, const Batch& b, const LossWeights& w) {
  const auto out = forward(m, b.input, true);
  const auto t = compute_losses(m, out, b.targets);
  return {t.cls, t.giou, t.l1, t.cma, t.ima, total_loss(t, w)};
}

std::array<double, kTerms> values(const Model& m, const Batch& b, const LossWeights& w) {
  NoGradScope off;
  const auto l = losses(m, b, w);
  std::array<double, kTerms> v{};
  for (std::size_t i = 0; i < kTerms; ++i) v[i] = double(l[i].item());
  return v;
}

Batch micro_batch(const ModelConfig& mc, const TrainOptions& topt, const Vocab& vocab, std::size_t videos) {
  ScenarioOptions so;
  so.frames = 8;
  std::vector<LoadedSequence> seqs;
  for (std::size_t i = 0; i < videos; ++i)
    seqs.push_back(LoadedSequence::render(
        random_scenario("grad_" + std::to_string(i), mix_seed(topt.seed, 0x67726164 + i), so)));
  const auto set = TrainingSet::from(std::move(seqs), false);
  auto opt = topt;
  opt.batch = videos;
  Rng rng(mix_seed(topt.seed, 0x6d6963726f));
  return sample_batch(set, vocab, mc, opt, rng);
}

}  // namespace

namespace {

GradSuiteReport run_suite(const GradSuiteOptions& o) {
  const auto start = std::chrono::steady_clock::now();
  if (!(o.step > 0)) throw ConfigError("grad-check step must be positive");
  if (!(o.tolerance > 0)) throw ConfigError("grad-check tolerance must be positive");
  if (o.samples_per_tensor == 0) throw ConfigError("grad-check needs at least one sample per tensor");
  if (o.videos < 2) throw ContractError("grad suite needs at least 2 videos for the contrastive terms");
  Config cfg;
  for (const auto& [k, v] : o.config) cfg.set(k, v);
  const auto vocab = grammar_vocab();
  const auto mc = ModelConfig::from(cfg, vocab.size());
  const auto topt = TrainOptions::from(cfg);
  Rng init(mix_seed(topt.seed, 0x6d6f64656c));
  Model model = Model::create(mc, init);
  const auto batch = micro_batch(mc, topt, vocab, o.videos);
  const auto& entries = model.params.entries();

  // Analytic gradients, one backward per term.
  std::vector<std::array<std::vector<double>, kTerms>> analytic(entries.size());
  for (std::size_t term = 0; term < kTerms; ++term) {
    model.params.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    const auto l = losses(model, batch, topt.weights);
    tape.backward(l[term]);
    for (std::size_t p = 0; p < entries.size(); ++p) {
      const auto& t = entries[p].second;
      auto& dst = analytic[p][term];
      dst.assign(t.numel(), 0.0);
      if (t.has_grad())
        for (std::size_t i = 0; i < t.numel(); ++i) dst[i] = double(t.grad()[i]);
    }
  }

  GradSuiteReport rep;
  rep.parameters = model.params.numel();
  const auto base = values(model, batch, topt.weights);
  for (std::size_t term = 0; term < kTerms; ++term) {
    rep.terms.push_back({kNames[term], base[term], 0, 0, 0, "", true});
  }

  Rng pick(mix_seed(topt.seed, 0x7069636b));
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor t = entries[p].second;
    const auto n = t.numel();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    const auto k = std::min(o.samples_per_tensor, n);
    for (std::size_t i = 0; i < k; ++i) std::swap(coords[i], coords[i + pick.below(n - i)]);
    coords.resize(k);
    for (auto c : coords) {
      auto vals = t.mutable_values();
      const Real x0 = vals[c];
      auto probe = [&](double h) {
        vals[c] = x0 + Real(h);
        auto fp = values(model, batch, topt.weights);
        vals[c] = x0 - Real(h);
        auto fm = values(model, batch, topt.weights);
        vals[c] = x0;
        return std::pair{fp, fm};
      };
      auto [fp, fm] = probe(o.step);
      for (std::size_t term = 0; term < kTerms; ++term) {
        const double a = analytic[p][term][c];
        auto rel_error = [&](double numeric) {
          return std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), o.abs_floor});
        };
        double h = o.step;
        double numeric = (fp[term] - fm[term]) / (2 * h);
        double rel = rel_error(numeric);
        // A kink inside [x-h, x+h] shows up as disagreeing one-sided
        // differences; re-measure that coordinate with a smaller step.
        auto plus = fp[term], minus = fm[term];
        for (std::size_t retry = 0; retry < o.kink_retries && rel > o.tolerance; ++retry) {
          const double right = (plus - base[term]) / h, left = (base[term] - minus) / h;
          if (std::abs(right - left) <= o.tolerance * std::max({std::abs(right), std::abs(left), o.abs_floor})) break;
          h /= 10;
          const auto [p2, m2] = probe(h);
          plus = p2[term];
          minus = m2[term];
          numeric = (plus - minus) / (2 * h);
          rel = rel_error(numeric);
          ++rep.terms[term].kink_retries;
        }
        auto& tr = rep.terms[term];
        ++tr.coords;
        if (rel > tr.max_rel_error || tr.worst.empty()) {
          tr.max_rel_error = std::max(tr.max_rel_error, rel);
          char buf[256];
          std::snprintf(buf, sizeof buf, "%s[%zu] analytic %.9g numeric %.9g (h=%.0e)", entries[p].first.c_str(), c,
                        a, numeric, h);
          tr.worst = buf;
        }
      }
    }
  }
  rep.passed = true;
  for (auto& tr : rep.terms) {
    tr.passed = tr.max_rel_error <= o.tolerance;
    rep.passed = rep.passed && tr.passed;
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace

GradSuiteReport run_grad_suite(const GradSuiteOptions& o) {
  try {
    return run_suite(o);
  } catch (const Error& e) {
    throw DiagnosticError(e.kind(), e.what());
  }
}

std::string GradSuiteReport::text() const {
  std::string out;
  char buf[512];
  for (const auto& t : terms) {
    std::snprintf(buf, sizeof buf, "%-8s %s value=%.6g max_rel_error=%.3e coords=%zu kink_retries=%zu worst: %s\n",
                  t.name.c_str(), t.passed ? "PASS" : "FAIL", t.value, t.max_rel_error, t.coords, t.kink_retries,
                  t.worst.c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%s in %.1f s over %zu parameters\n", passed ? "PASS" : "FAIL", seconds, parameters);
  return out + buf;
}

std::string GradSuiteReport::json() const {
  nlohmann::ordered_json j;
  j["passed"] = passed;
  j["seconds"] = seconds;
  j["parameters"] = parameters;
  auto& arr = j["terms"] = nlohmann::ordered_json::array();
  for (const auto& t : terms)
    arr.push_back({{"name", t.name},
                   {"value", t.value},
                   {"max_rel_error", t.max_rel_error},
                   {"coords", t.coords},
                   {"kink_retries", t.kink_retries},
                   {"worst", t.worst},
                   {"passed", t.passed}});
  return j.dump(2) + "\n";
}

std::string GradSuiteReport::first_failure() const {
  for (const auto& t : terms)
    if (!t.passed) return t.name + " max_rel_error " + std::to_string(t.max_rel_error) + " at " + t.worst;
  return "";
}

}  // namespace aio::diag
