#pragma once

#include <span>
#include <string>
#include <vector>

#include "aio/data/dataset.hpp"
#include "aio/pipeline/model.hpp"

namespace aio::inline AIO_ABI {

struct TrackOptions {
  PairConfig crops;
  DecodeOptions decode;

  static TrackOptions from(const Config& c);
};

/// One-pass tracking. Frame 0 returns `init`; the template is cropped once
/// from frame 0 and every later frame is searched around the previous
/// prediction. Output t depends on frames 0..t only.
std::vector<BBox> track_sequence(const Model& model, std::span<const Image> frames, const BBox& init,
                                 const TokenizedPrompt& prompt, const TrackOptions& opt);

std::vector<BBox> track_sequence(const Model& model, const LoadedSequence& seq, const Vocab& vocab,
                                 const std::string& prompt, const TrackOptions& opt);

}  // namespace aio::inline AIO_ABI
