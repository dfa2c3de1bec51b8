#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "aio/data/image.hpp"
#include "aio/embed/tokenizer.hpp"
#include "aio/head/head.hpp"

namespace aio::inline AIO_ABI {

enum class ShapeKind { circle, square, triangle };
enum class Motion { left, right, up, down, zigzag };

struct NamedColor {
  const char* name;
  std::uint8_t r, g, b;
};

std::span<const NamedColor> palette();
const char* shape_name(ShapeKind s);
const char* motion_name(Motion m);

/// One moving object. Its box at frame t is centred on
/// (x0 + vx t, y0 + vy t + A tri(t / period)) with side `size`.
struct ObjectSpec {
  ShapeKind shape = ShapeKind::circle;
  std::size_t color = 0;  // palette index
  Motion motion = Motion::right;
  double size = 16;
  double x0 = 0, y0 = 0;
  double vx = 0, vy = 0;
  double zigzag_amplitude = 0, zigzag_period = 1;
  bool twin = false;

  BBox box_at(std::size_t frame) const;
};

/// "<color> <shape> moving <direction>".
std::string sentence_prompt(const ObjectSpec& o);
/// "<shape>".
std::string class_prompt(const ObjectSpec& o);
/// Every word the prompt grammar can emit, sorted.
std::vector<std::string> grammar_words();
Vocab grammar_vocab();

struct Scenario {
  std::string id;
  std::uint64_t seed = 0;
  std::size_t frames = 40;
  std::size_t canvas = 128;
  ObjectSpec target;
  std::vector<ObjectSpec> distractors;
  double clutter = 0.3;  // in [0, 1]

  /// Throws ConfigError when an object leaves the canvas or a twin differs
  /// from the target in anything but color.
  void validate() const;
  const ObjectSpec* twin() const;
};

struct ScenarioOptions {
  std::size_t frames = 40;
  std::size_t canvas = 128;
  bool twin = false;
  std::size_t max_extra_distractors = 2;
  double max_clutter = 0.6;
};

/// Draws a valid scenario from the seed by rejection sampling.
Scenario random_scenario(const std::string& id, std::uint64_t seed, const ScenarioOptions& opt);

Image render_frame(const Scenario& s, std::size_t frame);

/// One on-disk sequence in the LaSOT-style layout.
struct SequenceRecord {
  std::string id;
  std::filesystem::path dir;
  std::vector<std::filesystem::path> frames;
  std::vector<BBox> boxes;
  std::string prompt;      // sentence
  std::string class_name;  // empty when unknown
  std::vector<BBox> twin_boxes;  // twin scenarios only
  std::string twin_prompt;

  bool has_twin() const { return !twin_boxes.empty(); }
  /// The same video with the twin as the target.
  SequenceRecord twin_view() const;
};

/// Prompts and rounded boxes of a scenario, without frame paths.
SequenceRecord scenario_record(const Scenario& s);

/// Writes img/%06d.ppm (from 1), groundtruth.txt, nlp.txt and meta.json
/// under `out_dir`. Throws IoError when the directory cannot be written.
SequenceRecord generate(const Scenario& s, const std::filesystem::path& out_dir);

struct DatasetOptions {
  std::uint64_t seed = 0;
  std::size_t train = 32;
  std::size_t eval = 8;
  std::size_t twin = 0;
  std::size_t frames = 40;
  std::size_t canvas = 128;
};

/// Sequences train_NNN, eval_NNN and twin_NNN plus vocab.txt under `root`.
std::vector<SequenceRecord> generate_dataset(const std::filesystem::path& root, const DatasetOptions& opt);

}  // namespace aio::inline AIO_ABI
