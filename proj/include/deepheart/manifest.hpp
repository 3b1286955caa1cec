#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace deepheart {

// Plain-text `key = value` run record. Keys under `time.` (wall clock) and
// `invocation.` (argv, output paths) are left out of the content hash, so a
// rerun on the same inputs hashes identically wherever it writes.
class RunManifest {
 public:
  void add(const std::string& key, const std::string& value);
  void add_block(const std::string& prefix, const std::string& key_value_text);
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string text() const;
  std::string content_hash() const;
  // Atomically writes the manifest; returns content_hash().
  std::string write(const std::filesystem::path& path) const;

  static std::string utc_timestamp();

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// "<out>.manifest" beside an output file.
std::filesystem::path manifest_path_for(const std::filesystem::path& output);

}  // namespace deepheart
