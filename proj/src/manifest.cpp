#include "deepheart/manifest.hpp"

#include <chrono>
#include <ctime>
#include <sstream>

#include "deepheart/io.hpp"

namespace deepheart {

void RunManifest::add(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void RunManifest::add_block(const std::string& prefix, const std::string& key_value_text) {
  std::istringstream in(key_value_text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    add(prefix + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string RunManifest::text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

std::string RunManifest::content_hash() const {
  std::string stable;
  for (const auto& [k, v] : entries_) {
    if (k.starts_with("time.") || k.starts_with("invocation.")) continue;
    stable += k + " = " + v + "\n";
  }
  return io::git_blob_hash(stable);
}

std::string RunManifest::write(const std::filesystem::path& path) const {
  const auto hash = content_hash();
  io::write_file_atomic(path, text() + "content_hash = " + hash + "\n");
  return hash;
}

std::string RunManifest::utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& output) {
  auto p = output;
  p += ".manifest";
  return p;
}

}  // namespace deepheart
