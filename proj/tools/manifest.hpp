#pragma once

// Output staging, checksums and the run manifest.  Files are held in memory
// until the run finishes so that a failed run leaves no partial outputs.

#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <sys/resource.h>

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

namespace dwcool::cli {

using json = nlohmann::json;

inline std::string sha256_hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr);
  std::string out;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    out += buf;
  }
  return out;
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline long max_rss_kb() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return u.ru_maxrss;
}

/// Per-stage wall time and memory high-water mark, logged as JSON lines on stderr.
class StageLog {
 public:
  void begin(const std::string& stage) {
    stage_ = stage;
    start_ = std::chrono::steady_clock::now();
  }
  void end(json extra = json::object()) {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json entry{{"stage", stage_}, {"wall_seconds", wall}, {"max_rss_kb", max_rss_kb()}};
    for (auto it = extra.begin(); it != extra.end(); ++it) entry[it.key()] = it.value();
    std::fprintf(stderr, "%s\n", entry.dump().c_str());
    entries_.push_back(std::move(entry));
  }
  const json& entries() const { return entries_; }

 private:
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
  json entries_ = json::array();
};

struct OutputSet {
  std::map<std::string, std::string> files;
  /// Files whose content depends on timing and is excluded from determinism.
  std::vector<std::string> timing_files;

  void add(const std::string& name, std::string content) { files[name] = std::move(content); }
  void add_json(const std::string& name, const json& j) { add(name, j.dump(2) + "\n"); }
};

inline void write_outputs(const std::filesystem::path& dir, const OutputSet& out, json manifest) {
  std::filesystem::create_directories(dir);
  json inventory = json::array();
  for (const auto& [name, content] : out.files) {
    std::ofstream f(dir / name, std::ios::binary);
    f << content;
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    bool timing = false;
    for (const auto& t : out.timing_files) timing = timing || t == name;
    inventory.push_back({{"file", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)},
                         {"deterministic", !timing}});
  }
  manifest["outputs"] = inventory;
  std::ofstream f(dir / "manifest.json", std::ios::binary);
  f << manifest.dump(2) << "\n";
  if (!f) throw std::runtime_error("cannot write manifest");
}

/// CSV with full double precision.
class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) text_ += (i ? "," : "") + header[i];
    text_ += "\n";
  }
  Csv& row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) text_ += (i ? "," : "") + cells[i];
    text_ += "\n";
    return *this;
  }
  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string num(long long v) { return std::to_string(v); }
inline std::string num(int v) { return std::to_string(v); }
inline std::string num(std::size_t v) { return std::to_string(v); }

}  // namespace dwcool::cli
