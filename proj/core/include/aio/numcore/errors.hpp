#pragma once

#include <stdexcept>
#include <string>

#include "aio/numcore/real.hpp"

namespace aio::inline AIO_ABI {

/// Base of every error raised by the library. `kind()` is a short stable tag
/// used by the CLI for its one-line error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error("dimension", w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error("config", w) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error("contract", w) {}
};
struct VocabError : Error {
  explicit VocabError(const std::string& w) : Error("vocab", w) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error("parse", w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error("io", w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error("numeric", w) {}
};

}  // namespace aio::inline AIO_ABI
