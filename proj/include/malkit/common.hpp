#pragma once

#include <algorithm>
#include <atomic>
#include <compare>
#include <exception>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace malkit {

inline constexpr std::string_view kToolVersion = "1.0.0";
inline constexpr int kSchemaVersion = 1;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. Line and column are 1-based; 0 means unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, std::size_t column,
             const std::string& what)
      : Error(format(source, line, column, what)),
        source_(source), line_(line), column_(column) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& source, std::size_t line,
                            std::size_t column, const std::string& what) {
    std::string out = source.empty() ? std::string("<input>") : source;
    if (line > 0) out += ":" + std::to_string(line);
    if (column > 0) out += ":" + std::to_string(column);
    return out + ": " + what;
  }

  std::string source_;
  std::size_t line_;
  std::size_t column_;
};

/// A family label: either a known family name or the Novel sentinel.
///
/// Known labels order lexicographically by name; Novel sorts after every
/// known label so it lands last in recall matrices.
class FamilyLabel {
 public:
  static FamilyLabel known(std::string name) { return FamilyLabel(std::move(name), false); }
  static FamilyLabel novel() { return FamilyLabel({}, true); }

  bool is_novel() const noexcept { return novel_; }
  const std::string& name() const noexcept { return name_; }

  /// Text form used in reports and CLI output.
  std::string str() const { return novel_ ? std::string(kNovelText) : name_; }

  friend bool operator==(const FamilyLabel&, const FamilyLabel&) = default;
  friend std::strong_ordering operator<=>(const FamilyLabel& a, const FamilyLabel& b) {
    if (a.novel_ != b.novel_) return a.novel_ ? std::strong_ordering::greater
                                              : std::strong_ordering::less;
    return a.name_.compare(b.name_) <=> 0;
  }

  static constexpr std::string_view kNovelText = "NOVEL";

 private:
  FamilyLabel(std::string name, bool novel) : name_(std::move(name)), novel_(novel) {}

  std::string name_;
  bool novel_ = false;
};

/// Name of the dummy class pooling rare families.
inline constexpr std::string_view kOthersFamily = "others";

// 64-bit FNV-1a, used for vocabulary fingerprints and model hashes.
inline std::uint64_t fnv1a(std::string_view data,
                           std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Round-trip text form of a double ("%.17g").
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Seeded Fisher-Yates shuffle. Only raw mt19937_64 outputs are used, so the
/// permutation is identical across standard library implementations.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t r;
    do { r = rng(); } while (r >= limit);
    std::swap(v[i - 1], v[static_cast<std::size_t>(r % bound)]);
  }
}

/// Parallelism cap from MALKIT_THREADS; defaults to the hardware concurrency.
inline unsigned thread_cap() {
  if (const char* env = std::getenv("MALKIT_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && n >= 1) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index must
/// write only its own output slot; results are then independent of scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            if (!failed.exchange(true)) failure = std::current_exception();
            return;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace malkit
