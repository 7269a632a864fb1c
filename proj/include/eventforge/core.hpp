#pragma once

#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace eventforge {

// Exit-code contract: usage errors -> 1, data errors -> 2, internal
// invariant violations (std::logic_error) -> 3.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr double kDivEps = 1e-9;

// Invalid pixels carry the storage float's quiet NaN.
inline constexpr double kInvalid = std::numeric_limits<double>::quiet_NaN();

inline bool is_valid(double v) { return std::isfinite(v); }

template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<size_t>(width) * height, fill) {
    if (width <= 0 || height <= 0)
      throw UsageError("grid dimensions must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  size_t size() const { return data_.size(); }

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width_ && y >= 0 && y < height_;
  }

  T& at(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }
  const T& at(int x, int y) const {
    return data_[static_cast<size_t>(y) * width_ + x];
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_size(const Grid& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using GridD = Grid<double>;

// Interleaved multi-channel image, values nominally in [0,1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<size_t>(width) * height * channels, fill) {
    if (width <= 0 || height <= 0 || channels <= 0)
      throw UsageError("image dimensions must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  double& at(int x, int y, int c) {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ &&
           channels_ == o.channels_;
  }

  GridD channel(int c) const {
    GridD g(width_, height_);
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x) g.at(x, y) = at(x, y, c);
    return g;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// splitmix64; used to derive independent per-sample / per-eye seeds.
inline uint64_t mix_seed(uint64_t state) {
  uint64_t z = state + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
  return mix_seed(base ^ mix_seed(stream));
}

// Uniform double in [0,1); fixed bit recipe so draws do not depend on the
// standard library's distribution implementation.
template <typename Engine>
double uniform_double(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename Engine>
double uniform_double(Engine& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_double(rng);
}

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

inline LogLevel& log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("EVENTFORGE_LOG");
    if (!env) return LogLevel::kWarn;
    std::string v(env);
    if (v == "error") return LogLevel::kError;
    if (v == "warn") return LogLevel::kWarn;
    if (v == "info") return LogLevel::kInfo;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kWarn;
  }();
  return level;
}

inline void log_msg(LogLevel level, const char* tag, const char* fmt, ...) {
  if (level > log_level()) return;
  std::fprintf(stderr, "[%s] ", tag);
  va_list args;
  va_start(args, fmt);
  std::vfprintf(stderr, fmt, args);
  va_end(args);
  std::fputc('\n', stderr);
}

#define EVF_LOG_ERROR(...) \
  ::eventforge::log_msg(::eventforge::LogLevel::kError, "error", __VA_ARGS__)
#define EVF_LOG_WARN(...) \
  ::eventforge::log_msg(::eventforge::LogLevel::kWarn, "warn", __VA_ARGS__)
#define EVF_LOG_INFO(...) \
  ::eventforge::log_msg(::eventforge::LogLevel::kInfo, "info", __VA_ARGS__)
#define EVF_LOG_DEBUG(...) \
  ::eventforge::log_msg(::eventforge::LogLevel::kDebug, "debug", __VA_ARGS__)

}  // namespace eventforge
