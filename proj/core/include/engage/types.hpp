#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace engage {

/// Row-major dense matrix; one row per sample or per frame.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t kLevelCount = 3;
inline constexpr int kDefaultFps = 24;
/// Frames per labeled sequence (one second of video).
inline constexpr std::size_t kSequenceLength = 24;
/// Frame used by frame-mode classifiers during training and margin scoring.
inline constexpr std::size_t kMiddleFrame = kSequenceLength / 2;

enum class ErrorKind {
  parse,
  alignment,
  range,
  degenerate,
  dimension,
  shape,
  divergence,
  undefined_metric,
  unsupported,
  exhausted,
  oracle_unavailable,
  validation,
  not_found,
  no_data,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type carried through the library; `kind` decides how
/// callers (CLI exit codes, HTTP status) surface it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

enum class EngagementLevel : int { low = 0, medium = 1, high = 2 };

inline constexpr std::array<EngagementLevel, kLevelCount> kAllLevels = {
    EngagementLevel::low, EngagementLevel::medium, EngagementLevel::high};

inline constexpr std::size_t index_of(EngagementLevel level) {
  return static_cast<std::size_t>(level);
}
EngagementLevel level_from_index(std::size_t index);
std::string_view to_string(EngagementLevel level);
EngagementLevel parse_level(std::string_view text);

enum class Modality { attention, affect };

inline constexpr std::array<Modality, 2> kAllModalities = {Modality::attention, Modality::affect};

std::string_view to_string(Modality modality);
Modality parse_modality(std::string_view text);

/// Probability vector over the three engagement levels.
struct LabelDistribution {
  std::array<double, kLevelCount> p{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  double operator[](EngagementLevel level) const { return p[index_of(level)]; }

  /// Highest-probability level; ties resolve to the lower level.
  EngagementLevel argmax() const;
  bool is_valid(double tolerance = 1e-9) const;

  /// Normalizes non-negative raw scores; all-zero input yields uniform.
  static LabelDistribution normalized(std::array<double, kLevelCount> raw);
  static LabelDistribution point_mass(EngagementLevel level);
};

/// 24 consecutive frames of one student for a single modality.
struct Sequence {
  std::string student_id;
  std::string session_id;
  std::int64_t second_index = 0;
  Modality modality = Modality::attention;
  Matrix frames;  // kSequenceLength x D
};

/// Derives an independent generator seed for `stream` (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

inline std::span<const double> row_span(const Matrix& m, Eigen::Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace engage
