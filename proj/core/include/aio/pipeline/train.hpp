#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "aio/data/dataset.hpp"
#include "aio/pipeline/model.hpp"
#include "aio/pipeline/optim.hpp"

namespace aio::inline AIO_ABI {

struct TrainOptions {
  std::uint64_t seed = 0;
  std::uint64_t iters = 2000;
  std::size_t batch = 8;
  std::size_t log_every = 10;
  std::size_t checkpoint_every = 500;
  PairConfig pairs;
  PromptMode prompt = PromptMode::sentence;
  bool twin_views = true;
  LossWeights weights;
  AdamWConfig optim;

  static TrainOptions from(const Config& c);
};

std::vector<std::string> split_prefixes(const std::string& csv);

/// Training videos in memory. Twin sequences contribute a second view with
/// the twin as target when `twin_views` is set.
struct TrainingSet {
  std::vector<LoadedSequence> views;
  std::vector<std::size_t> video_of_view;
  std::size_t videos = 0;

  static TrainingSet from(std::vector<LoadedSequence> videos, bool twin_views);
  static TrainingSet load(const std::vector<SequenceRecord>& records, bool twin_views);
  static TrainingSet load(const std::filesystem::path& root, const std::vector<std::string>& prefixes,
                          std::size_t limit, bool twin_views);
};

std::string prompt_for(const SequenceRecord& rec, PromptMode mode);

struct Batch {
  ModelInput input;
  HeadTargets targets;
};

/// `batch` samples from distinct videos (with replacement only when the set
/// has fewer videos than the batch).
Batch sample_batch(const TrainingSet& data, const Vocab& vocab, const ModelConfig& mc, const TrainOptions& opt, Rng& rng);

/// One forward/backward/AdamW update. Throws NumericError, leaving the
/// parameters untouched, when any loss term is not finite.
LossBreakdown train_step(Model& model, AdamW& opt, const Batch& batch, const LossWeights& w, double lr);

/// Loss terms of a batch without touching gradients.
LossBreakdown evaluate_batch(const Model& model, const Batch& batch, const LossWeights& w);

struct TrainState {
  Model model;
  AdamW optimizer;
  std::uint64_t iteration = 0;
};

struct TrainHooks {
  std::function<void(std::uint64_t iteration, const LossBreakdown&)> on_log;
  std::function<void(std::uint64_t iteration)> on_checkpoint;
};

/// Generator of iteration `i`; a pure function of (seed, i) so resumed runs
/// replay exactly.
Rng iteration_rng(std::uint64_t seed, std::uint64_t iteration);

/// Runs iterations state.iteration .. opt.iters - 1. Hooks see 1-based
/// iteration counts after each completed step.
void train(TrainState& state, const TrainingSet& data, const Vocab& vocab, const TrainOptions& opt,
           const TrainHooks& hooks = {});

}  // namespace aio::inline AIO_ABI
