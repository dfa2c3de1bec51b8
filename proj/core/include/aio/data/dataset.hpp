#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "aio/data/image.hpp"
#include "aio/data/synth.hpp"
#include "aio/numcore/rng.hpp"

namespace aio::inline AIO_ABI {

/// Reads <dir>/img/*, groundtruth.txt ("x,y,w,h" per line; commas, tabs or
/// spaces), nlp.txt and the optional meta.json. Malformed boxes raise
/// ParseError naming the line; a missing nlp.txt yields an empty prompt and
/// a warning on stderr.
SequenceRecord read_lasot_format(const std::filesystem::path& dir);

/// Sequence directories under `root` whose names start with one of
/// `prefixes` (all when empty), sorted by name.
std::vector<std::filesystem::path> list_sequences(const std::filesystem::path& root,
                                                  const std::vector<std::string>& prefixes = {});

/// A sequence with its frames decoded in memory.
struct LoadedSequence {
  SequenceRecord record;
  std::vector<Image> frames;

  static LoadedSequence load(const SequenceRecord& rec);
  /// Renders a scenario in memory with the same record fields `generate`
  /// writes (boxes rounded to 3 decimals, no file paths).
  static LoadedSequence render(const Scenario& s);
};

struct PairConfig {
  std::size_t template_size = 32;
  std::size_t search_size = 64;
  double template_factor = 2;  // crop side relative to sqrt(w h)
  double search_factor = 4;
  double jitter = 0.25;        // max centre shift as a fraction of box size
  bool permute_template_channels = false;
  double twin_centre_prob = 0;  // twin videos: centre the search between the twins
};

struct TrainingPair {
  std::vector<Real> template_image;  // [3, Z, Z]
  std::vector<Real> search_image;    // [3, X, X]
  BBox search_box;                   // ground truth in search-crop pixels
  CropMeta search_meta;
  std::string prompt;
  std::size_t template_frame = 0, search_frame = 0;
};

/// Deterministic crops for the given frames and search-centre shift in
/// box units.
TrainingPair make_pair(const LoadedSequence& seq, std::size_t template_frame, std::size_t search_frame,
                       double shift_x, double shift_y, const PairConfig& cfg);

/// Template from one random frame, search from a different one with
/// uniform jitter; optionally permutes the template's color channels. For
/// twin videos the search may be centred midway between the twins so that position
/// does not identify the target.
TrainingPair sample_pair(const LoadedSequence& seq, Rng& rng, const PairConfig& cfg);

/// Template crop of a box in a frame (used to initialise tracking).
std::vector<Real> template_crop(const Image& frame, const BBox& box, const PairConfig& cfg);
/// Search crop centred on a box.
std::vector<Real> search_crop(const Image& frame, const BBox& around, const PairConfig& cfg, CropMeta* meta);

}  // namespace aio::inline AIO_ABI
