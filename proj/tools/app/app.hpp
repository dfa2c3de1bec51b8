#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aio/data/synth.hpp"
#include "aio/embed/tokenizer.hpp"
#include "aio/pipeline/checkpoint.hpp"
#include "aio/pipeline/config.hpp"
#include "aio/pipeline/metrics.hpp"

namespace aio::app {

namespace fs = std::filesystem;

/// Missing checkpoint files map to exit code 2.
struct MissingCheckpoint : IoError {
  explicit MissingCheckpoint(const std::string& w) : IoError(w) {}
};

/// Config file (optional), then AIO_SEED, then key=value overrides.
Config build_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides);
void apply_overrides(Config& cfg, const std::vector<std::string>& overrides);

/// The `vocab` key, else <data_root>/vocab.txt, else the prompt grammar.
Vocab resolve_vocab(const Config& cfg);

struct GenerateArgs {
  fs::path out;
  DatasetOptions data;
  bool force = false;
};

struct GenerateResult {
  std::vector<std::pair<std::string, std::string>> sequence_hashes;  // id -> tree digest
  std::string digest;                                                 // whole dataset
};

GenerateResult generate(const GenerateArgs& args, std::ostream& log);

struct TrainArgs {
  Config cfg;
  fs::path out;
  bool resume = false;
};

struct TrainResult {
  fs::path checkpoint;  // final checkpoint
  LossBreakdown last;
  std::uint64_t iterations = 0;
  double seconds = 0;
};

/// Writes <out>/config.txt, loss_log.csv, checkpoint_NNNNNN.aio every
/// `checkpoint_every` iterations, final.aio and summary.json (wall time is
/// kept out of the checkpoints so they stay reproducible).
TrainResult train(const TrainArgs& args, std::ostream& log);

struct LoadedModel {
  Checkpoint checkpoint;
  Config cfg;
  Model model;
};

/// Reads a checkpoint and applies non-architecture overrides to its config.
LoadedModel load_model(const fs::path& checkpoint, const std::vector<std::string>& overrides);

struct EvalArgs {
  std::optional<fs::path> checkpoint;
  std::vector<std::string> overrides;
  std::optional<fs::path> out;
  bool oracle_gt = false;
  Config cfg;  // used with oracle_gt, which needs no checkpoint
};

struct TwinOutcome {
  std::string id;
  std::size_t frames = 0;
  std::size_t follows_prompted = 0;  // correct prompt, frames nearer the prompted object
  std::size_t follows_twin = 0;      // swapped prompt, frames nearer the twin
};

struct TwinSummary {
  std::vector<TwinOutcome> sequences;
  double correct_rate = 0;  // follows_prompted / frames
  double flip_rate = 0;     // follows_twin / frames
};

struct EvalResult {
  MetricReport report;
  std::optional<TwinSummary> twins;
};

/// Tracks every sequence of `eval_split` under `data_root`. Twin sequences
/// additionally run with the twin's prompt to measure disambiguation.
EvalResult evaluate(const EvalArgs& args, std::ostream& log);

/// Index of the object (0 = target, 1 = twin) whose centre is nearer.
int nearer_object(const BBox& pred, const BBox& target, const BBox& twin);

TwinSummary twin_disambiguation(const Model& model, const Config& cfg, const Vocab& vocab,
                                const std::vector<fs::path>& sequences);

struct TrackArgs {
  fs::path checkpoint;
  fs::path sequence;
  std::optional<std::string> prompt;
  std::optional<BBox> init;
  std::optional<fs::path> out;
  std::vector<std::string> overrides;
};

/// Returns one "x,y,w,h" line per frame.
std::vector<BBox> track(const TrackArgs& args, std::ostream& log);

std::string format_boxes(const std::vector<BBox>& boxes);

void write_file(const fs::path& file, const std::string& text);
std::string read_file(const fs::path& file);

}  // namespace aio::app
