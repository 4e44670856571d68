#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace polyrep {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
// Row-major H x W intensity grid. Row index = y, column index = x.
using Image = Eigen::MatrixXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

enum class ErrorKind {
  kIo,
  kParse,
  kShapeMismatch,
  kInvalidArgument,
  kNoPositive,
  kNoNegative,
  kExhausted,
  kEmptyMask,
  kDegeneratePair,
  kMissingData,
  kNumerical,
  kMissingArtifact,
  kConfig,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Warnings go through a process-wide sink so tests and the CLI can capture
// them. The default sink writes to stderr.
using WarningSink = std::function<void(std::string_view)>;
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

// Deterministic RNG with portable draws. The standard distributions are
// implementation-defined, so everything seeded goes through this type.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  // Independent stream for (seed, key...), stable across platforms.
  static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                    std::uint64_t c = 0);

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be > 0.
  std::size_t index(std::size_t n);
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& x);
std::uint64_t fnv1a64(std::string_view data,
                      std::uint64_t h = 14695981039346656037ULL);
std::uint64_t hash_string_key(std::string_view s);

// Global cap on worker threads (default 1).
void set_thread_cap(int threads);
int thread_cap();

// Calls fn(i) for i in [0, n) on up to thread_cap() threads. Work items must
// write only to their own slots; the first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace polyrep
