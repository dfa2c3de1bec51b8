#include "aio/pipeline/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "aio/numcore/ops.hpp"

namespace aio::inline AIO_ABI {

namespace {
constexpr std::uint64_t kTrainTag = 0x747261696eULL;  // "train"
}

TrainOptions TrainOptions::from(const Config& c) {
  TrainOptions o;
  o.seed = c.get_u64("seed");
  o.iters = std::uint64_t(c.get_int("iters"));
  o.batch = std::size_t(c.get_int("batch"));
  o.log_every = std::max<std::size_t>(1, std::size_t(c.get_int("log_every")));
  o.checkpoint_every = std::max<std::size_t>(1, std::size_t(c.get_int("checkpoint_every")));
  o.pairs.template_size = std::size_t(c.get_int("template_size"));
  o.pairs.search_size = std::size_t(c.get_int("search_size"));
  o.pairs.template_factor = c.get_real("template_factor");
  o.pairs.search_factor = c.get_real("search_factor");
  o.pairs.jitter = c.get_real("jitter");
  o.pairs.permute_template_channels = c.get_bool("permute_template");
  o.pairs.twin_centre_prob = c.get_real("twin_centre");
  o.prompt = parse_prompt_mode(c.get("train_prompt"));
  o.twin_views = c.get_bool("twin_views");
  o.weights = LossWeights::from(c);
  o.optim = AdamWConfig::from(c);
  if (!(o.pairs.twin_centre_prob >= 0 && o.pairs.twin_centre_prob <= 1))
    throw ConfigError("twin_centre must lie in [0, 1]");
  if (o.batch < 2) throw ConfigError("batch must be at least 2 so contrastive losses have negatives");
  return o;
}

std::vector<std::string> split_prefixes(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string part;
  while (std::getline(ss, part, ','))
    if (!part.empty()) out.push_back(part);
  return out;
}

TrainingSet TrainingSet::from(std::vector<LoadedSequence> videos, bool twin_views) {
  TrainingSet t;
  for (auto& seq : videos) {
    if (twin_views && seq.record.has_twin()) {
      t.views.push_back({seq.record.twin_view(), seq.frames});
      t.video_of_view.push_back(t.videos);
    }
    t.views.push_back(std::move(seq));
    t.video_of_view.push_back(t.videos);
    ++t.videos;
  }
  if (t.videos == 0) throw IoError("no training sequences found");
  return t;
}

TrainingSet TrainingSet::load(const std::vector<SequenceRecord>& records, bool twin_views) {
  std::vector<LoadedSequence> videos;
  for (const auto& rec : records) videos.push_back(LoadedSequence::load(rec));
  return from(std::move(videos), twin_views);
}

TrainingSet TrainingSet::load(const std::filesystem::path& root, const std::vector<std::string>& prefixes,
                              std::size_t limit, bool twin_views) {
  auto dirs = list_sequences(root, prefixes);
  if (limit > 0 && dirs.size() > limit) dirs.resize(limit);
  std::vector<SequenceRecord> recs;
  for (const auto& d : dirs) recs.push_back(read_lasot_format(d));
  return load(recs, twin_views);
}

std::string prompt_for(const SequenceRecord& rec, PromptMode mode) {
  if (mode == PromptMode::class_name && !rec.class_name.empty()) return rec.class_name;
  return rec.prompt;
}

Batch sample_batch(const TrainingSet& data, const Vocab& vocab, const ModelConfig& mc, const TrainOptions& opt,
                   Rng& rng) {
  // Distinct videos first (partial Fisher-Yates), cycling if the set is small.
  std::vector<std::size_t> order(data.videos);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<std::size_t> chosen;
  while (chosen.size() < opt.batch) {
    for (std::size_t i = 0; i < order.size() && chosen.size() < opt.batch; ++i) {
      const auto j = i + rng.below(order.size() - i);
      std::swap(order[i], order[j]);
      chosen.push_back(order[i]);
    }
  }

  const auto z = opt.pairs.template_size, x = opt.pairs.search_size;
  std::vector<Real> templates, searches;
  std::vector<BBox> boxes;
  Batch b;
  for (auto video : chosen) {
    std::vector<std::size_t> views;
    for (std::size_t v = 0; v < data.views.size(); ++v)
      if (data.video_of_view[v] == video) views.push_back(v);
    const auto& seq = data.views[views[rng.below(views.size())]];
    auto pair = sample_pair(seq, rng, opt.pairs);
    templates.insert(templates.end(), pair.template_image.begin(), pair.template_image.end());
    searches.insert(searches.end(), pair.search_image.begin(), pair.search_image.end());
    boxes.push_back(pair.search_box);
    b.input.prompts.push_back(tokenize(prompt_for(seq.record, opt.prompt), vocab, mc.text_len));
  }
  const auto n = chosen.size();
  b.input.templates = Tensor({n, 3, z, z}, std::move(templates));
  b.input.searches = Tensor({n, 3, x, x}, std::move(searches));
  b.targets = make_targets(boxes, mc.head.grid, mc.patch.patch);
  return b;
}

namespace {

LossBreakdown breakdown(const LossTerms& t, const Tensor& total) {
  LossBreakdown b;
  b.total = total.item();
  b.cls = t.cls.item();
  b.giou = t.giou.item();
  b.l1 = t.l1.item();
  if (t.cma.defined()) b.cma = t.cma.item();
  if (t.ima.defined()) b.ima = t.ima.item();
  return b;
}

bool finite(const LossBreakdown& b) {
  return std::isfinite(b.total) && std::isfinite(b.cls) && std::isfinite(b.giou) && std::isfinite(b.l1) &&
         std::isfinite(b.cma) && std::isfinite(b.ima);
}

}  // namespace

LossBreakdown train_step(Model& model, AdamW& opt, const Batch& batch, const LossWeights& w, double lr) {
  model.params.zero_grad();
  Tape tape;
  LossBreakdown result;
  {
    TapeScope scope(tape);
    const auto out = forward(model, batch.input, batch.input.batch() >= 2);
    const auto terms = compute_losses(model, out, batch.targets);
    const auto total = total_loss(terms, w);
    result = breakdown(terms, total);
    if (!finite(result)) {
      tape.clear();
      throw NumericError("non-finite loss: " + result.str());
    }
    tape.backward(total);
  }
  opt.step(model.params, lr);
  return result;
}

LossBreakdown evaluate_batch(const Model& model, const Batch& batch, const LossWeights& w) {
  NoGradScope off;
  const auto out = forward(model, batch.input, batch.input.batch() >= 2);
  const auto terms = compute_losses(model, out, batch.targets);
  return breakdown(terms, total_loss(terms, w));
}

Rng iteration_rng(std::uint64_t seed, std::uint64_t iteration) { return Rng(mix_seed(seed, kTrainTag), iteration); }

void train(TrainState& st, const TrainingSet& data, const Vocab& vocab, const TrainOptions& opt,
           const TrainHooks& hooks) {
  for (std::uint64_t i = st.iteration; i < opt.iters; ++i) {
    Rng rng = iteration_rng(opt.seed, i);
    const auto batch = sample_batch(data, vocab, st.model.cfg, opt, rng);
    const double lr = cosine_lr(opt.optim.lr, i, opt.iters, opt.optim.warmup);
    LossBreakdown loss;
    try {
      loss = train_step(st.model, st.optimizer, batch, opt.weights, lr);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(i + 1) + ": " + e.what());
    }
    st.iteration = i + 1;
    if (hooks.on_log && st.iteration % opt.log_every == 0) hooks.on_log(st.iteration, loss);
    if (hooks.on_checkpoint && (st.iteration % opt.checkpoint_every == 0 || st.iteration == opt.iters)) {
      hooks.on_checkpoint(st.iteration);
    }
  }
}

}  // namespace aio::inline AIO_ABI
