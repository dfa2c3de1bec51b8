#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aio/numcore/rng.hpp"
#include "aio/numcore/tensor.hpp"
#include "aio/pipeline/config.hpp"
#include "aio/pipeline/model.hpp"
#include "aio/pipeline/optim.hpp"

namespace aio::inline AIO_ABI {

/// On-disk layout, all integers little-endian:
///   "AIO1" | u32 version | u32 len, config text |
///   u32 count, { u32 len, name | u32 ndim, u64 dims... | f32 values... } |
///   u64 optimizer steps | u32 count, { f32 m... | f32 v... } |
///   u64 iteration | u64 rng seed, u64 rng stream, u64 rng position
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  struct Param {
    std::string name;
    Shape shape;
    std::vector<float> values;
  };

  std::string config_text;
  std::vector<Param> params;
  std::uint64_t optimizer_steps = 0;
  std::vector<std::vector<float>> first_moments, second_moments;
  std::uint64_t iteration = 0;
  RngState rng;

  static Checkpoint capture(const Config& cfg, const Model& model, const AdamW& opt, std::uint64_t iteration,
                            const RngState& rng);
  /// Copies parameters (and moments when `opt` is given) into live objects;
  /// names and shapes must match exactly.
  void restore(Model& model, AdamW* opt) const;
  Config config() const;
  /// Rows of the text embedding table, i.e. the vocabulary size trained with.
  std::size_t vocab_size() const;
};

void write_checkpoint(const std::filesystem::path& file, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& file);

/// Throws ConfigError naming the first architecture key that differs.
void require_compatible(const Config& checkpoint_config, const Config& current);

}  // namespace aio::inline AIO_ABI
