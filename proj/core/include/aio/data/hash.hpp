#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "aio/numcore/real.hpp"

namespace aio::inline AIO_ABI {

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_file(const std::filesystem::path& file);
/// Digest over every regular file under `root`, visited in sorted relative
/// path order, hashing each path and its contents.
std::string tree_digest(const std::filesystem::path& root);

}  // namespace aio::inline AIO_ABI
