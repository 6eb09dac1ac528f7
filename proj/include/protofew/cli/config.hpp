#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace protofew::cli {

/// Flat key/value settings for one command. Every key has a default; keys
/// outside the command's schema are rejected with ConfigError.
class RunConfig {
 public:
  struct Entry {
    std::string value;
    std::string help;
  };

  /// The schema (with defaults) of a command, or ConfigError.
  static RunConfig defaults(const std::string& command);

  const std::string& command() const { return command_; }
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  void set(const std::string& key, const std::string& value);
  /// `key = value` lines; `#` starts a comment; blank lines ignored.
  void merge_text(const std::string& text, const std::string& source);
  void merge_file(const std::filesystem::path& path);

  const std::string& str(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  std::size_t size(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  /// Comma-separated list of sizes ("1,5").
  std::vector<std::size_t> sizes(const std::string& key) const;
  /// Comma-separated strings, empty items dropped.
  std::vector<std::string> list(const std::string& key) const;

  /// Every key, sorted, as `key = value` lines.
  std::string to_text() const;

 private:
  std::string command_;
  std::map<std::string, Entry> entries_;
};

}  // namespace protofew::cli
