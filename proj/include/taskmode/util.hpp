#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace taskmode {

// Object keys keep insertion order everywhere, so serialized artifacts have
// a stable, human-chosen field order.
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto process exit codes, so which type is thrown
// matters at module boundaries.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad flags / bad config; exit code 1.
struct UsageError : Error {
  explicit UsageError(const std::string& msg) : Error(msg) {}
};

// A required input artifact is absent; names the command that produces it;
// exit code 2.
struct MissingArtifact : Error {
  MissingArtifact(const std::string& path, const std::string& producer_cmd)
      : Error("missing artifact: " + path + " (produce it with `" +
              producer_cmd + "`)"),
        path(path),
        producer(producer_cmd) {}
  std::string path;
  std::string producer;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. splitmix64 core: tiny, well mixed, and fully specified
// here so streams never depend on the standard library implementation.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double normal(double mean = 0.0, double stddev = 1.0);

  // [0, n)
  uint64_t below(uint64_t n);

  // [lo, hi] inclusive
  int64_t range(int64_t lo, int64_t hi) {
    return lo + int64_t(below(uint64_t(hi - lo + 1)));
  }

  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[below(v.size())];
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Hashing (for artifact registries and checkpoint identity).
// ---------------------------------------------------------------------------

std::string sha256_hex(std::string_view data);
std::string sha256_file_hex(const std::string& path);

// ---------------------------------------------------------------------------
// Files & JSONL.
// ---------------------------------------------------------------------------

bool file_exists(const std::string& path);
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);
void ensure_dir(const std::string& path);

// Parses one JSON value per non-empty line. Parse failures carry the
// 1-based line number.
std::vector<json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<json>& rows);
void append_jsonl(const std::string& path, const json& row);

// ---------------------------------------------------------------------------
// Small string helpers.
// ---------------------------------------------------------------------------

std::string lower(std::string_view s);
std::string trim(std::string_view s);
bool contains_ci(std::string_view haystack, std::string_view needle);
std::string join(const std::vector<std::string>& parts,
                 const std::string& sep);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace taskmode
