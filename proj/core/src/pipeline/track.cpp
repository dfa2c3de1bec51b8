#include "aio/pipeline/track.hpp"

namespace aio::inline AIO_ABI {

TrackOptions TrackOptions::from(const Config& c) {
  TrackOptions o;
  o.crops.template_size = std::size_t(c.get_int("template_size"));
  o.crops.search_size = std::size_t(c.get_int("search_size"));
  o.crops.template_factor = c.get_real("template_factor");
  o.crops.search_factor = c.get_real("search_factor");
  o.decode.window = c.get_bool("window");
  o.decode.window_weight = c.get_real("window_weight");
  return o;
}

std::vector<BBox> track_sequence(const Model& model, std::span<const Image> frames, const BBox& init,
                                 const TokenizedPrompt& prompt, const TrackOptions& opt) {
  std::vector<BBox> out;
  if (frames.empty()) return out;
  out.push_back(init);
  NoGradScope off;
  const auto z = opt.crops.template_size, x = opt.crops.search_size;
  ModelInput in;
  in.templates = Tensor({1, 3, z, z}, template_crop(frames[0], init, opt.crops));
  in.prompts = {prompt};
  for (std::size_t t = 1; t < frames.size(); ++t) {
    CropMeta meta;
    in.searches = Tensor({1, 3, x, x}, search_crop(frames[t], out.back(), opt.crops, &meta));
    const auto res = forward(model, in, false);
    out.push_back(decode(res.head, meta, opt.decode));
  }
  return out;
}

std::vector<BBox> track_sequence(const Model& model, const LoadedSequence& seq, const Vocab& vocab,
                                 const std::string& prompt, const TrackOptions& opt) {
  if (seq.record.boxes.empty()) throw ContractError("sequence " + seq.record.id + " has no initial box");
  return track_sequence(model, seq.frames, seq.record.boxes.front(), tokenize(prompt, vocab, model.cfg.text_len),
                        opt);
}

}  // namespace aio::inline AIO_ABI
