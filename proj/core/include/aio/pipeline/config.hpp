#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "aio/numcore/real.hpp"

namespace aio::inline AIO_ABI {

/// Flat key=value settings with typed accessors. Every key has a documented
/// default (the desk profile); unknown keys and malformed values raise
/// ConfigError.
class Config {
 public:
  Config();

  /// Parses "key = value" lines; '#' starts a comment.
  static Config parse(std::string_view text, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& file);

  void set(const std::string& key, const std::string& value);
  /// Applies AIO_SEED when present in the environment.
  void apply_environment();

  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;

  /// Canonical text: every key in declaration order, one per line.
  std::string dump() const;
  /// Keys whose values change parameter shapes or the forward computation.
  static const std::vector<std::string>& architecture_keys();
  static bool known(const std::string& key);
  /// "key=default  # help" lines for usage output.
  static std::string describe();

  bool operator==(const Config& o) const { return values_ == o.values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace aio::inline AIO_ABI
